#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feat3d/geometry.hpp"

namespace f3d::synth {

using geom::Aabb;
using geom::CameraIntrinsics;
using geom::CameraPose;
using geom::Vec3;

enum class Shape { kSphere, kBox };

struct SceneObject {
    Shape shape = Shape::kSphere;
    Vec3 center = Vec3::Zero();
    // Spheres store (r, r, r); boxes store per-axis half extents.
    Vec3 half_extents = Vec3::Ones();
    std::string label;
    Aabb aabb;

    double radius() const { return half_extents.x(); }
};

struct Scene {
    std::vector<SceneObject> objects;
    Aabb bounds;
    std::uint64_t seed = 0;

    std::vector<std::string> label_set() const;  // sorted, deduplicated
};

// Deterministic unit-norm embedding per label; stands in for 2D dense
// features aligned with language. Ids index the sorted label list.
class LabelEmbedding {
public:
    static LabelEmbedding generate(const std::vector<std::string>& labels, int d_v,
                                   std::uint64_t seed);

    int dim() const { return d_v_; }
    int size() const { return static_cast<int>(labels_.size()); }
    int id_of(const std::string& label) const;  // -1 when unknown
    const std::string& label_of(int id) const { return labels_.at(id); }
    const std::vector<std::string>& labels() const { return labels_; }
    const double* vector_at(int id) const { return table_.data() + static_cast<std::size_t>(id) * d_v_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::vector<std::string> labels_;
    std::vector<double> table_;  // size() x d_v, row-major
    int d_v_ = 0;
    std::uint64_t seed_ = 0;
};

// One rendered view. Row-major storage, pixel (u, v) at index v*width + u.
struct CameraView {
    int width = 0;
    int height = 0;
    int d_v = 0;
    std::vector<double> rgb;        // height*width*3, values in [0, 1]
    std::vector<double> depth;      // height*width, 0 = no hit
    std::vector<double> features;   // height*width*d_v, zero at background
    std::vector<int> semantics;     // height*width label ids, -1 = background
    CameraIntrinsics intr;
    CameraPose pose;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    double depth_at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
    const double* feature_at(int u, int v) const {
        return features.data() + (static_cast<std::size_t>(v) * width + u) * d_v;
    }
    int semantic_at(int u, int v) const { return semantics[static_cast<std::size_t>(v) * width + u]; }
};

// Rejection-samples non-overlapping spheres and boxes inside bounds.
// Deterministic in seed; throws ValidationError when the attempt budget
// (10 * n_objects * 100 placements) runs out.
Scene make_scene(std::uint64_t seed, int n_objects, const Aabb& bounds);

// Raycasts every pixel against the scene; nearest hit wins. Depth is the
// camera-frame z of the hit, features carry the label embedding verbatim,
// shading touches rgb only. Parallel over rows; bit-identical to
// render_serial for any schedule.
CameraView render(const Scene& scene, const CameraIntrinsics& intr, const CameraPose& pose,
                  const LabelEmbedding& embed);

// Single-threaded reference used by tests and the benchmark suite.
CameraView render_serial(const Scene& scene, const CameraIntrinsics& intr,
                         const CameraPose& pose, const LabelEmbedding& embed);

struct OrbitOptions {
    int width = 128;
    int height = 128;
    double fov_deg = 60.0;
};

// Cameras evenly spaced on a horizontal circle around the bounds center,
// all looking at the center.
std::vector<std::pair<CameraIntrinsics, CameraPose>> orbit_cameras(const Scene& scene,
                                                                   int n_views, double radius,
                                                                   const OrbitOptions& opts = {});

CameraPose look_at(const Vec3& eye, const Vec3& target);

// Scene JSON codec: {bounds, seed, objects:[{shape, center, size, label, aabb}]}.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

}  // namespace f3d::synth
