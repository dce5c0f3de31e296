#pragma once

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "feat3d/geometry.hpp"
#include "feat3d/navsim.hpp"
#include "feat3d/rng.hpp"

namespace f3d::test {

// Scratch directory removed when the fixture goes out of scope.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = (std::filesystem::temp_directory_path() /
                 ("feat3d_" + tag + "_" + std::to_string(::getpid())))
                    .string();
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

private:
    std::string path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline geom::Mat3 random_rotation(Rng& rng) {
    const double angle = uniform_double(rng, 0.0, 2.0 * 3.14159265358979323846);
    geom::Vec3 axis(normal_double(rng), normal_double(rng), normal_double(rng));
    while (axis.norm() < 1e-9)
        axis = geom::Vec3(normal_double(rng), normal_double(rng), normal_double(rng));
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline geom::CameraPose random_pose(Rng& rng, double translation_scale = 5.0) {
    geom::CameraPose pose;
    pose.rotation = random_rotation(rng);
    pose.translation = geom::Vec3(uniform_double(rng, -translation_scale, translation_scale),
                                  uniform_double(rng, -translation_scale, translation_scale),
                                  uniform_double(rng, -translation_scale, translation_scale));
    return pose;
}

inline geom::CameraIntrinsics test_intrinsics(int width = 64, int height = 48) {
    geom::CameraIntrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = 0.8 * width;
    intr.fy = 0.8 * width;
    intr.cx = 0.5 * (width - 1);
    intr.cy = 0.5 * (height - 1);
    return intr;
}

// Random connected maze: obstacles sampled at the given density, then
// rejected unless all free cells form one 6-connected component.
inline nav::NavEnv random_connected_maze(std::uint64_t seed, const std::array<int, 3>& dims,
                                         double obstacle_density) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        nav::NavEnv env;
        env.dims = dims;
        env.occupancy.assign(env.cell_count(), 0);
        for (auto& cell : env.occupancy)
            cell = uniform_unit(rng) < obstacle_density ? 1 : 0;

        std::vector<nav::Cell> free_cells;
        for (int z = 0; z < dims[2]; ++z)
            for (int y = 0; y < dims[1]; ++y)
                for (int x = 0; x < dims[0]; ++x)
                    if (!env.occupied({x, y, z})) free_cells.push_back({x, y, z});
        if (free_cells.size() < 2) continue;

        env.start = free_cells[uniform_index(rng, free_cells.size())];
        env.target_cell = free_cells[uniform_index(rng, free_cells.size())];
        if (env.start == env.target_cell) continue;

        // All free cells reachable from the start keeps frontier
        // exploration complete.
        std::vector<std::uint8_t> seen(env.cell_count(), 0);
        std::vector<nav::Cell> stack{env.start};
        seen[env.index(env.start)] = 1;
        std::size_t reached = 1;
        while (!stack.empty()) {
            const nav::Cell cur = stack.back();
            stack.pop_back();
            const nav::Cell neighbors[6] = {
                {cur[0] + 1, cur[1], cur[2]}, {cur[0] - 1, cur[1], cur[2]},
                {cur[0], cur[1] + 1, cur[2]}, {cur[0], cur[1] - 1, cur[2]},
                {cur[0], cur[1], cur[2] + 1}, {cur[0], cur[1], cur[2] - 1}};
            for (const auto& next : neighbors) {
                if (!env.free_cell(next) || seen[env.index(next)]) continue;
                seen[env.index(next)] = 1;
                ++reached;
                stack.push_back(next);
            }
        }
        if (reached != free_cells.size()) continue;
        return env;
    }
    throw std::runtime_error("random_connected_maze: no connected maze found");
}

// Independent BFS oracle, deliberately separate from nav::bfs_distance.
inline int oracle_bfs_distance(const nav::NavEnv& env, const nav::Cell& from,
                               const nav::Cell& to) {
    std::vector<int> dist(env.cell_count(), -1);
    std::vector<nav::Cell> queue{from};
    dist[env.index(from)] = 0;
    std::size_t head = 0;
    while (head < queue.size()) {
        const nav::Cell cur = queue[head++];
        if (cur == to) return dist[env.index(cur)];
        const nav::Cell neighbors[6] = {
            {cur[0] + 1, cur[1], cur[2]}, {cur[0] - 1, cur[1], cur[2]},
            {cur[0], cur[1] + 1, cur[2]}, {cur[0], cur[1] - 1, cur[2]},
            {cur[0], cur[1], cur[2] + 1}, {cur[0], cur[1], cur[2] - 1}};
        for (const auto& next : neighbors) {
            if (!env.free_cell(next) || dist[env.index(next)] >= 0) continue;
            dist[env.index(next)] = dist[env.index(cur)] + 1;
            queue.push_back(next);
        }
    }
    return -1;
}

}  // namespace f3d::test
