#include "feat3d/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "feat3d/tensorfile.hpp"

namespace f3d::extract {

using json = nlohmann::ordered_json;
using synth::CameraView;

namespace {

int common_feature_dim(const std::vector<CameraView>& views) {
    if (views.empty()) throw ValidationError("extract: need at least one view");
    const int d_v = views.front().d_v;
    for (const auto& view : views) {
        if (view.d_v != d_v)
            throw ValidationError("extract: views disagree on feature dimension (" +
                                  std::to_string(view.d_v) + " vs " + std::to_string(d_v) + ")");
    }
    return d_v;
}

void write_point(const CameraView& view, int u, int v, std::size_t slot,
                 PointFeatureCloud& cloud) {
    const std::size_t px = static_cast<std::size_t>(v) * view.width + u;
    const Vec3 p = geom::backproject(u, v, view.depth[px], view.intr, view.pose);
    cloud.positions[3 * slot + 0] = p.x();
    cloud.positions[3 * slot + 1] = p.y();
    cloud.positions[3 * slot + 2] = p.z();
    const double* f = view.features.data() + px * view.d_v;
    std::copy(f, f + view.d_v, cloud.features.begin() + slot * view.d_v);
    cloud.labels[slot] = view.semantics[px];
}

struct FuseAccumulator {
    explicit FuseAccumulator(const Vec3& origin, double voxel_size,
                             const std::array<int, 3>& dims, int d_v) {
        if (!(voxel_size > 0.0)) throw ValidationError("fuse: voxel_size must be positive");
        if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
            throw ValidationError("fuse: dims must be positive");
        map.origin = origin;
        map.voxel_size = voxel_size;
        map.dims = dims;
        map.d_v = d_v;
        const std::size_t n = map.voxel_count();
        map.feature.assign(n * d_v, 0.0);
        map.color.assign(n * 3, 0.0);
        map.weight.assign(n, 0.0);
    }

    // Running sums; finalize() divides through by the accumulated weight.
    void add(std::size_t voxel, const double* feature, const double* rgb, double w0) {
        for (int k = 0; k < map.d_v; ++k) map.feature[voxel * map.d_v + k] += w0 * feature[k];
        for (int k = 0; k < 3; ++k) map.color[voxel * 3 + k] += w0 * rgb[k];
        map.weight[voxel] += w0;
    }

    FuseResult finalize(std::size_t dropped) {
        for (std::size_t v = 0; v < map.voxel_count(); ++v) {
            const double w = map.weight[v];
            if (w <= 0.0) continue;
            for (int k = 0; k < map.d_v; ++k) map.feature[v * map.d_v + k] /= w;
            for (int k = 0; k < 3; ++k) map.color[v * 3 + k] /= w;
        }
        return FuseResult{std::move(map), dropped};
    }

    FusedVoxelMap map;
};

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::optional<std::size_t> FusedVoxelMap::voxel_of(const Vec3& p) const {
    const Vec3 rel = (p - origin) / voxel_size;
    const int x = static_cast<int>(std::floor(rel.x()));
    const int y = static_cast<int>(std::floor(rel.y()));
    const int z = static_cast<int>(std::floor(rel.z()));
    if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] || z >= dims[2])
        return std::nullopt;
    return linear_index(x, y, z);
}

Vec3 FusedVoxelMap::voxel_center(std::size_t linear) const {
    const int x = static_cast<int>(linear % dims[0]);
    const int y = static_cast<int>((linear / dims[0]) % dims[1]);
    const int z = static_cast<int>(linear / (static_cast<std::size_t>(dims[0]) * dims[1]));
    return origin + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
}

PointFeatureCloud FusedVoxelMap::to_point_cloud() const {
    PointFeatureCloud cloud;
    cloud.d_v = d_v;
    for (std::size_t v = 0; v < voxel_count(); ++v) {
        if (weight[v] <= 0.0) continue;
        const Vec3 c = voxel_center(v);
        cloud.positions.insert(cloud.positions.end(), {c.x(), c.y(), c.z()});
        cloud.features.insert(cloud.features.end(), feature.begin() + v * d_v,
                              feature.begin() + (v + 1) * d_v);
    }
    return cloud;
}

PointFeatureCloud direct_reconstruct(const std::vector<CameraView>& views) {
    const int d_v = common_feature_dim(views);

    // Hit counts per row give each output point a fixed slot, so the
    // parallel fill is bit-identical to the serial pass.
    std::vector<std::vector<std::size_t>> row_offsets(views.size());
    std::size_t total = 0;
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        const CameraView& view = views[vi];
        auto& offsets = row_offsets[vi];
        offsets.assign(view.height + 1, 0);
#pragma omp parallel for schedule(static)
        for (int v = 0; v < view.height; ++v) {
            std::size_t hits = 0;
            for (int u = 0; u < view.width; ++u)
                if (view.depth[static_cast<std::size_t>(v) * view.width + u] > 0.0) ++hits;
            offsets[v + 1] = hits;
        }
        for (int v = 0; v < view.height; ++v) offsets[v + 1] += offsets[v];
        for (auto& o : offsets) o += total;
        total = offsets[view.height];
    }

    PointFeatureCloud cloud;
    cloud.d_v = d_v;
    cloud.positions.resize(total * 3);
    cloud.features.resize(total * static_cast<std::size_t>(d_v));
    cloud.labels.resize(total);

    for (std::size_t vi = 0; vi < views.size(); ++vi) {
        const CameraView& view = views[vi];
        const auto& offsets = row_offsets[vi];
#pragma omp parallel for schedule(static)
        for (int v = 0; v < view.height; ++v) {
            std::size_t slot = offsets[v];
            for (int u = 0; u < view.width; ++u) {
                if (view.depth[static_cast<std::size_t>(v) * view.width + u] > 0.0)
                    write_point(view, u, v, slot++, cloud);
            }
        }
    }
    return cloud;
}

PointFeatureCloud direct_reconstruct_serial(const std::vector<CameraView>& views) {
    const int d_v = common_feature_dim(views);
    std::size_t total = 0;
    for (const auto& view : views)
        total += static_cast<std::size_t>(
            std::count_if(view.depth.begin(), view.depth.end(), [](double d) { return d > 0.0; }));

    PointFeatureCloud cloud;
    cloud.d_v = d_v;
    cloud.positions.resize(total * 3);
    cloud.features.resize(total * static_cast<std::size_t>(d_v));
    cloud.labels.resize(total);

    std::size_t slot = 0;
    for (const auto& view : views) {
        for (int v = 0; v < view.height; ++v) {
            for (int u = 0; u < view.width; ++u) {
                if (view.depth[static_cast<std::size_t>(v) * view.width + u] > 0.0)
                    write_point(view, u, v, slot++, cloud);
            }
        }
    }
    return cloud;
}

FuseResult fuse(const std::vector<CameraView>& views, const Vec3& origin, double voxel_size,
                const std::array<int, 3>& dims) {
    const int d_v = common_feature_dim(views);
    FuseAccumulator acc(origin, voxel_size, dims, d_v);

    constexpr std::int64_t kMiss = -1;
    constexpr std::int64_t kOutside = -2;
    std::size_t dropped = 0;
    std::vector<std::int64_t> voxel_of_pixel;
    for (const auto& view : views) {
        voxel_of_pixel.assign(view.pixel_count(), kMiss);
        // Backprojection is the expensive part; the ordered accumulation
        // below keeps results identical to the serial path.
#pragma omp parallel for schedule(static)
        for (int v = 0; v < view.height; ++v) {
            for (int u = 0; u < view.width; ++u) {
                const std::size_t px = static_cast<std::size_t>(v) * view.width + u;
                if (!(view.depth[px] > 0.0)) continue;
                const Vec3 p = geom::backproject(u, v, view.depth[px], view.intr, view.pose);
                const auto voxel = acc.map.voxel_of(p);
                voxel_of_pixel[px] = voxel ? static_cast<std::int64_t>(*voxel) : kOutside;
            }
        }
        for (std::size_t px = 0; px < view.pixel_count(); ++px) {
            const std::int64_t voxel = voxel_of_pixel[px];
            if (voxel == kMiss) continue;
            if (voxel == kOutside) {
                ++dropped;
                continue;
            }
            acc.add(static_cast<std::size_t>(voxel), view.features.data() + px * d_v,
                    view.rgb.data() + px * 3, 1.0);
        }
    }
    return acc.finalize(dropped);
}

FuseResult fuse_serial(const std::vector<CameraView>& views, const Vec3& origin,
                       double voxel_size, const std::array<int, 3>& dims) {
    const int d_v = common_feature_dim(views);
    FuseAccumulator acc(origin, voxel_size, dims, d_v);

    std::size_t dropped = 0;
    for (const auto& view : views) {
        for (int v = 0; v < view.height; ++v) {
            for (int u = 0; u < view.width; ++u) {
                const std::size_t px = static_cast<std::size_t>(v) * view.width + u;
                if (!(view.depth[px] > 0.0)) continue;
                const Vec3 p = geom::backproject(u, v, view.depth[px], view.intr, view.pose);
                const auto voxel = acc.map.voxel_of(p);
                if (!voxel) {
                    ++dropped;
                    continue;
                }
                acc.add(*voxel, view.features.data() + px * d_v, view.rgb.data() + px * 3, 1.0);
            }
        }
    }
    return acc.finalize(dropped);
}

std::vector<int> classify_points(const PointFeatureCloud& cloud,
                                 const synth::LabelEmbedding& embed) {
    if (cloud.size() == 0) throw ValidationError("classify_points: empty cloud");
    if (cloud.d_v != embed.dim())
        throw ValidationError("classify_points: feature dimension mismatch");

    const std::int64_t n = static_cast<std::int64_t>(cloud.size());
    std::vector<int> out(cloud.size(), -1);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const double* f = cloud.feature_at(static_cast<std::size_t>(i));
        double norm_sq = 0.0;
        for (int k = 0; k < cloud.d_v; ++k) norm_sq += f[k] * f[k];
        if (norm_sq <= 0.0) continue;  // background
        const double inv_norm = 1.0 / std::sqrt(norm_sq);
        double best = -2.0;
        int best_id = -1;
        for (int id = 0; id < embed.size(); ++id) {
            const double* e = embed.vector_at(id);
            double dot = 0.0;
            for (int k = 0; k < cloud.d_v; ++k) dot += f[k] * e[k];
            const double cos = dot * inv_norm;  // embeddings are unit norm
            if (cos > best) {
                best = cos;
                best_id = id;
            }
        }
        out[static_cast<std::size_t>(i)] = best_id;
    }
    return out;
}

void save_point_cloud(const PointFeatureCloud& cloud, const std::string& prefix) {
    const std::uint64_t n = cloud.size();
    io::write_tensor(prefix + ".positions.f3dt", io::Tensor::from_doubles({n, 3}, cloud.positions));
    io::write_tensor(prefix + ".features.f3dt",
                     io::Tensor::from_doubles({n, static_cast<std::uint64_t>(cloud.d_v)},
                                              cloud.features));
    if (!cloud.labels.empty()) {
        std::vector<double> labels(cloud.labels.begin(), cloud.labels.end());
        io::write_tensor(prefix + ".labels.f3dt", io::Tensor::from_doubles({n}, labels));
    }
    json sidecar;
    sidecar["N"] = n;
    sidecar["D_v"] = cloud.d_v;
    std::ofstream out(prefix + ".json", std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + prefix + ".json");
    out << sidecar.dump(2) << "\n";
}

PointFeatureCloud load_point_cloud(const std::string& prefix) {
    PointFeatureCloud cloud;
    const io::Tensor pos = io::read_tensor(prefix + ".positions.f3dt");
    const io::Tensor feat = io::read_tensor(prefix + ".features.f3dt");
    if (pos.dims.size() != 2 || pos.dims[1] != 3)
        throw IoError("point cloud positions must be N x 3: " + prefix);
    if (feat.dims.size() != 2 || feat.dims[0] != pos.dims[0])
        throw IoError("point cloud features must be N x D_v: " + prefix);
    cloud.d_v = static_cast<int>(feat.dims[1]);
    cloud.positions = pos.to_doubles();
    cloud.features = feat.to_doubles();
    std::ifstream probe(prefix + ".labels.f3dt", std::ios::binary);
    if (probe.good()) {
        const io::Tensor labels = io::read_tensor(prefix + ".labels.f3dt");
        cloud.labels.reserve(labels.data.size());
        for (const float v : labels.data) cloud.labels.push_back(static_cast<int>(v));
    }
    return cloud;
}

void save_voxel_map(const FusedVoxelMap& map, const std::string& prefix) {
    const std::uint64_t nx = map.dims[0], ny = map.dims[1], nz = map.dims[2];
    io::write_tensor(prefix + ".feature.f3dt",
                     io::Tensor::from_doubles({nz, ny, nx, static_cast<std::uint64_t>(map.d_v)},
                                              map.feature));
    io::write_tensor(prefix + ".color.f3dt",
                     io::Tensor::from_doubles({nz, ny, nx, 3}, map.color));
    io::write_tensor(prefix + ".weight.f3dt", io::Tensor::from_doubles({nz, ny, nx}, map.weight));

    std::size_t occupied = 0;
    for (const double w : map.weight)
        if (w > 0.0) ++occupied;
    json sidecar;
    sidecar["origin"] = vec3_json(map.origin);
    sidecar["voxel_size"] = map.voxel_size;
    sidecar["dims"] = json::array({map.dims[0], map.dims[1], map.dims[2]});
    sidecar["D_v"] = map.d_v;
    sidecar["N"] = occupied;
    std::ofstream out(prefix + ".json", std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + prefix + ".json");
    out << sidecar.dump(2) << "\n";
}

FusedVoxelMap load_voxel_map(const std::string& prefix) {
    std::ifstream in(prefix + ".json", std::ios::binary);
    if (!in) throw IoError("cannot open: " + prefix + ".json");
    json sidecar;
    try {
        in >> sidecar;
    } catch (const json::exception& e) {
        throw IoError(std::string("voxel map sidecar: ") + e.what());
    }
    FusedVoxelMap map;
    map.origin = Vec3(sidecar.at("origin")[0], sidecar.at("origin")[1], sidecar.at("origin")[2]);
    map.voxel_size = sidecar.at("voxel_size").get<double>();
    map.dims = {sidecar.at("dims")[0].get<int>(), sidecar.at("dims")[1].get<int>(),
                sidecar.at("dims")[2].get<int>()};
    map.d_v = sidecar.at("D_v").get<int>();
    map.feature = io::read_tensor(prefix + ".feature.f3dt").to_doubles();
    map.color = io::read_tensor(prefix + ".color.f3dt").to_doubles();
    map.weight = io::read_tensor(prefix + ".weight.f3dt").to_doubles();
    if (map.feature.size() != map.voxel_count() * map.d_v ||
        map.color.size() != map.voxel_count() * 3 || map.weight.size() != map.voxel_count())
        throw IoError("voxel map tensors disagree with sidecar dims: " + prefix);
    return map;
}

}  // namespace f3d::extract
