#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feat3d/geometry.hpp"
#include "feat3d/synthworld.hpp"

namespace f3d::extract {

using geom::Vec3;

// The <N, D_v> representation: one row of features per reconstructed point.
struct PointFeatureCloud {
    int d_v = 0;
    std::vector<double> positions;  // N x 3, row-major
    std::vector<double> features;   // N x d_v, row-major
    std::vector<int> labels;        // empty, or one label id per point

    std::size_t size() const { return positions.size() / 3; }
    Vec3 position_at(std::size_t i) const {
        return Vec3(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
    }
    const double* feature_at(std::size_t i) const {
        return features.data() + i * static_cast<std::size_t>(d_v);
    }
};

// Multi-view observations fused into a voxel map of per-voxel means.
// weight == 0 marks an unobserved voxel; its feature and color stay zero.
struct FusedVoxelMap {
    Vec3 origin = Vec3::Zero();
    double voxel_size = 1.0;
    std::array<int, 3> dims = {0, 0, 0};
    int d_v = 0;
    std::vector<double> feature;  // voxel_count x d_v
    std::vector<double> color;    // voxel_count x 3
    std::vector<double> weight;   // voxel_count

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t linear_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }
    // Linear voxel index containing p, or nullopt when p is outside the grid.
    std::optional<std::size_t> voxel_of(const Vec3& p) const;
    Vec3 voxel_center(std::size_t linear) const;

    // Occupied voxel centers with their fused features, for feeding the
    // same consumers as a reconstructed point cloud.
    PointFeatureCloud to_point_cloud() const;
};

struct FuseResult {
    FusedVoxelMap map;
    std::size_t dropped_points = 0;  // hit pixels that backprojected outside the grid
};

// One point per depth > 0 pixel: position from backprojection, feature and
// label copied from the pixel. Point order is (view, row, column).
PointFeatureCloud direct_reconstruct(const std::vector<synth::CameraView>& views);
PointFeatureCloud direct_reconstruct_serial(const std::vector<synth::CameraView>& views);

// Accumulates per-voxel weighted means with unit per-observation weight.
// Produces the same accumulation order as fuse_serial, so results match
// bit for bit.
FuseResult fuse(const std::vector<synth::CameraView>& views, const Vec3& origin,
                double voxel_size, const std::array<int, 3>& dims);
FuseResult fuse_serial(const std::vector<synth::CameraView>& views, const Vec3& origin,
                       double voxel_size, const std::array<int, 3>& dims);

// Nearest-embedding label per point by cosine similarity; ties break toward
// the smallest label id, zero-norm features classify as background (-1).
std::vector<int> classify_points(const PointFeatureCloud& cloud,
                                 const synth::LabelEmbedding& embed);

// Tensor + JSON sidecar persistence (paths derive from the prefix).
void save_point_cloud(const PointFeatureCloud& cloud, const std::string& prefix);
PointFeatureCloud load_point_cloud(const std::string& prefix);
void save_voxel_map(const FusedVoxelMap& map, const std::string& prefix);
FusedVoxelMap load_voxel_map(const std::string& prefix);

}  // namespace f3d::extract
