#include "feat3d/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feat3d/rng.hpp"

namespace f3d::synth {

using json = nlohmann::ordered_json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRayEps = 1e-9;

const std::vector<std::string>& label_palette() {
    static const std::vector<std::string> kPalette = {
        "chair", "table", "sofa", "bed",   "lamp",  "plant", "shelf", "crate",
        "ball",  "vase",  "desk", "stool", "piano", "rug",   "mirror", "cabinet"};
    return kPalette;
}

// Golden-angle hue walk gives well-separated per-label base colors.
Vec3 base_color(int label_id) {
    const double hue = std::fmod(0.12 + 0.61803398875 * label_id, 1.0);
    const double s = 0.65, v = 0.9;
    const double h6 = hue * 6.0;
    const int i = static_cast<int>(h6) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int object = -1;
    Vec3 normal = Vec3::UnitZ();
};

// Ray direction is deliberately non-unit: using the camera-frame direction
// ((u-cx)/fx, (v-cy)/fy, 1) rotated to world makes the ray parameter t equal
// the camera-frame z depth at the hit.
std::optional<double> intersect_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center,
                                       double radius) {
    const Vec3 oc = origin - center;
    const double a = dir.squaredNorm();
    const double b = 2.0 * dir.dot(oc);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / (2.0 * a);
    if (t0 > kRayEps) return t0;
    const double t1 = (-b + sq) / (2.0 * a);
    if (t1 > kRayEps) return t1;
    return std::nullopt;
}

std::optional<double> intersect_box(const Vec3& origin, const Vec3& dir, const Vec3& lo,
                                    const Vec3& hi) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-300) {
            if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t1 = (lo[a] - origin[a]) / dir[a];
        double t2 = (hi[a] - origin[a]) / dir[a];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    }
    if (tmax < tmin || tmax <= kRayEps) return std::nullopt;
    return tmin > kRayEps ? tmin : tmax;
}

Vec3 surface_normal(const SceneObject& obj, const Vec3& point) {
    const Vec3 rel = point - obj.center;
    if (obj.shape == Shape::kSphere) return rel.normalized();
    int axis = 0;
    double best = -1.0;
    for (int a = 0; a < 3; ++a) {
        const double r = std::abs(rel[a]) / obj.half_extents[a];
        if (r > best) {
            best = r;
            axis = a;
        }
    }
    Vec3 n = Vec3::Zero();
    n[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
    return n;
}

Hit trace(const Scene& scene, const Vec3& origin, const Vec3& dir) {
    Hit hit;
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
        const SceneObject& obj = scene.objects[i];
        std::optional<double> t;
        if (obj.shape == Shape::kSphere) {
            t = intersect_sphere(origin, dir, obj.center, obj.radius());
        } else {
            t = intersect_box(origin, dir, obj.center - obj.half_extents,
                              obj.center + obj.half_extents);
        }
        if (t && *t < hit.t) {
            hit.t = *t;
            hit.object = i;
            hit.normal = surface_normal(obj, origin + *t * dir);
        }
    }
    return hit;
}

void shade_pixel(const Scene& scene, const LabelEmbedding& embed, const CameraIntrinsics& intr,
                 const CameraPose& pose, int u, int v, CameraView& view) {
    static const Vec3 kToLight = Vec3(0.4, 0.3, 0.85).normalized();
    const Vec3 dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    const Vec3 dir = pose.rotation * dir_cam;
    const Hit hit = trace(scene, pose.translation, dir);
    const std::size_t px = static_cast<std::size_t>(v) * view.width + u;
    if (hit.object < 0) return;  // buffers are zero / -1 initialized

    const SceneObject& obj = scene.objects[hit.object];
    const int id = embed.id_of(obj.label);
    view.depth[px] = hit.t;
    view.semantics[px] = id;
    const double* emb = embed.vector_at(id);
    std::copy(emb, emb + view.d_v, view.features.begin() + px * view.d_v);
    const double shade = 0.25 + 0.75 * std::max(0.0, hit.normal.dot(kToLight));
    const Vec3 rgb = (base_color(id) * shade).cwiseMin(1.0).cwiseMax(0.0);
    view.rgb[px * 3 + 0] = rgb.x();
    view.rgb[px * 3 + 1] = rgb.y();
    view.rgb[px * 3 + 2] = rgb.z();
}

CameraView make_blank_view(const Scene&, const CameraIntrinsics& intr, const CameraPose& pose,
                           const LabelEmbedding& embed) {
    intr.validate();
    pose.validate();
    CameraView view;
    view.width = intr.width;
    view.height = intr.height;
    view.d_v = embed.dim();
    const std::size_t n = view.pixel_count();
    view.rgb.assign(n * 3, 0.0);
    view.depth.assign(n, 0.0);
    view.features.assign(n * embed.dim(), 0.0);
    view.semantics.assign(n, -1);
    view.intr = intr;
    view.pose = pose;
    return view;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw IoError("scene json: expected a 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

std::vector<std::string> Scene::label_set() const {
    std::set<std::string> uniq;
    for (const auto& obj : objects) uniq.insert(obj.label);
    return {uniq.begin(), uniq.end()};
}

LabelEmbedding LabelEmbedding::generate(const std::vector<std::string>& labels, int d_v,
                                        std::uint64_t seed) {
    if (d_v < 2) throw ValidationError("label embedding: d_v must be at least 2");
    LabelEmbedding out;
    out.labels_ = labels;
    std::sort(out.labels_.begin(), out.labels_.end());
    out.labels_.erase(std::unique(out.labels_.begin(), out.labels_.end()), out.labels_.end());
    out.d_v_ = d_v;
    out.seed_ = seed;

    Rng rng(seed);
    out.table_.reserve(out.labels_.size() * d_v);
    std::vector<double> candidate(d_v);
    for (std::size_t i = 0; i < out.labels_.size(); ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 1000)
                throw ValidationError("label embedding: could not separate label '" +
                                      out.labels_[i] + "'");
            double norm_sq = 0.0;
            for (int k = 0; k < d_v; ++k) {
                candidate[k] = normal_double(rng);
                norm_sq += candidate[k] * candidate[k];
            }
            const double norm = std::sqrt(norm_sq);
            if (norm < 1e-12) continue;
            for (int k = 0; k < d_v; ++k) candidate[k] /= norm;

            bool separated = true;
            for (std::size_t j = 0; j < i && separated; ++j) {
                double cos = 0.0;
                for (int k = 0; k < d_v; ++k) cos += candidate[k] * out.table_[j * d_v + k];
                if (cos >= 0.9) separated = false;
            }
            if (separated) break;
        }
        out.table_.insert(out.table_.end(), candidate.begin(), candidate.end());
    }
    return out;
}

int LabelEmbedding::id_of(const std::string& label) const {
    const auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return -1;
    return static_cast<int>(it - labels_.begin());
}

Scene make_scene(std::uint64_t seed, int n_objects, const Aabb& bounds) {
    bounds.validate();
    if (n_objects < 0) throw ValidationError("make_scene: n_objects must be non-negative");
    if (n_objects > 0 && (bounds.extent().array() <= 0.0).any())
        throw ValidationError("make_scene: bounds are degenerate");

    Scene scene;
    scene.bounds = bounds;
    scene.seed = seed;
    if (n_objects == 0) return scene;

    Rng rng(seed);
    std::vector<std::string> labels = label_palette();
    shuffle_inplace(rng, labels);

    const double scale = bounds.extent().minCoeff();
    const double gap = 0.02 * scale;
    const long budget = 10L * n_objects * 100L;
    long attempts = 0;

    for (int i = 0; i < n_objects; ++i) {
        const std::string label = labels[i % labels.size()];
        bool placed = false;
        while (!placed) {
            if (++attempts > budget)
                throw ValidationError("make_scene: placement failed after " +
                                      std::to_string(budget) + " attempts");
            SceneObject obj;
            obj.shape = uniform_index(rng, 2) == 0 ? Shape::kSphere : Shape::kBox;
            obj.label = label;
            if (obj.shape == Shape::kSphere) {
                const double r = uniform_double(rng, 0.04 * scale, 0.10 * scale);
                obj.half_extents = Vec3(r, r, r);
            } else {
                for (int a = 0; a < 3; ++a)
                    obj.half_extents[a] = uniform_double(rng, 0.04 * scale, 0.10 * scale);
            }
            bool in_bounds = true;
            for (int a = 0; a < 3; ++a) {
                const double lo = bounds.min[a] + obj.half_extents[a];
                const double hi = bounds.max[a] - obj.half_extents[a];
                if (lo > hi) {
                    in_bounds = false;
                    break;
                }
                obj.center[a] = uniform_double(rng, lo, hi);
            }
            if (!in_bounds) continue;
            obj.aabb = Aabb{obj.center - obj.half_extents, obj.center + obj.half_extents};

            bool overlaps = false;
            const Aabb padded{obj.aabb.min - Vec3::Constant(gap), obj.aabb.max + Vec3::Constant(gap)};
            for (const auto& other : scene.objects) {
                const Vec3 lo = padded.min.cwiseMax(other.aabb.min);
                const Vec3 hi = padded.max.cwiseMin(other.aabb.max);
                if ((hi - lo).minCoeff() > 0.0) {
                    overlaps = true;
                    break;
                }
            }
            if (overlaps) continue;
            scene.objects.push_back(obj);
            placed = true;
        }
    }
    return scene;
}

CameraView render(const Scene& scene, const CameraIntrinsics& intr, const CameraPose& pose,
                  const LabelEmbedding& embed) {
    CameraView view = make_blank_view(scene, intr, pose, embed);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < view.height; ++v) {
        for (int u = 0; u < view.width; ++u) {
            shade_pixel(scene, embed, intr, pose, u, v, view);
        }
    }
    return view;
}

CameraView render_serial(const Scene& scene, const CameraIntrinsics& intr,
                         const CameraPose& pose, const LabelEmbedding& embed) {
    CameraView view = make_blank_view(scene, intr, pose, embed);
    for (int v = 0; v < view.height; ++v) {
        for (int u = 0; u < view.width; ++u) {
            shade_pixel(scene, embed, intr, pose, u, v, view);
        }
    }
    return view;
}

CameraPose look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = Vec3::UnitZ();
    if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Vec3::UnitY();
    const Vec3 right = up.cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    CameraPose pose;
    pose.rotation.col(0) = right;
    pose.rotation.col(1) = down;
    pose.rotation.col(2) = forward;
    pose.translation = eye;
    return pose;
}

std::vector<std::pair<CameraIntrinsics, CameraPose>> orbit_cameras(const Scene& scene,
                                                                   int n_views, double radius,
                                                                   const OrbitOptions& opts) {
    if (n_views < 1) throw ValidationError("orbit_cameras: n_views must be at least 1");
    CameraIntrinsics intr;
    intr.width = opts.width;
    intr.height = opts.height;
    intr.fx = intr.fy = 0.5 * opts.width / std::tan(0.5 * opts.fov_deg * kPi / 180.0);
    intr.cx = 0.5 * (opts.width - 1);
    intr.cy = 0.5 * (opts.height - 1);
    intr.validate();

    const Vec3 center = scene.bounds.center();
    std::vector<std::pair<CameraIntrinsics, CameraPose>> cams;
    cams.reserve(n_views);
    for (int k = 0; k < n_views; ++k) {
        const double angle = 2.0 * kPi * k / n_views;
        const Vec3 eye = center + radius * Vec3(std::cos(angle), std::sin(angle), 0.0);
        cams.emplace_back(intr, look_at(eye, center));
    }
    return cams;
}

std::string scene_to_json(const Scene& scene) {
    json j;
    j["bounds"] = {{"min", vec3_to_json(scene.bounds.min)}, {"max", vec3_to_json(scene.bounds.max)}};
    j["seed"] = scene.seed;
    j["objects"] = json::array();
    for (const auto& obj : scene.objects) {
        json o;
        o["shape"] = obj.shape == Shape::kSphere ? "sphere" : "box";
        o["center"] = vec3_to_json(obj.center);
        if (obj.shape == Shape::kSphere) {
            o["size"] = obj.radius();
        } else {
            o["size"] = vec3_to_json(obj.half_extents);
        }
        o["label"] = obj.label;
        o["aabb"] = {{"min", vec3_to_json(obj.aabb.min)}, {"max", vec3_to_json(obj.aabb.max)}};
        j["objects"].push_back(std::move(o));
    }
    return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("scene json: ") + e.what());
    }
    Scene scene;
    scene.bounds.min = vec3_from_json(j.at("bounds").at("min"));
    scene.bounds.max = vec3_from_json(j.at("bounds").at("max"));
    scene.seed = j.value("seed", 0ULL);
    for (const auto& o : j.at("objects")) {
        SceneObject obj;
        const std::string shape = o.at("shape").get<std::string>();
        if (shape == "sphere") {
            obj.shape = Shape::kSphere;
            const double r = o.at("size").get<double>();
            obj.half_extents = Vec3(r, r, r);
        } else if (shape == "box") {
            obj.shape = Shape::kBox;
            obj.half_extents = vec3_from_json(o.at("size"));
        } else {
            throw IoError("scene json: unknown shape '" + shape + "'");
        }
        obj.center = vec3_from_json(o.at("center"));
        obj.label = o.at("label").get<std::string>();
        obj.aabb.min = vec3_from_json(o.at("aabb").at("min"));
        obj.aabb.max = vec3_from_json(o.at("aabb").at("max"));
        if (obj.label.empty()) throw ValidationError("scene json: empty object label");
        scene.objects.push_back(std::move(obj));
    }
    return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << scene_to_json(scene);
    if (!out) throw IoError("write failed: " + path);
}

Scene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return scene_from_json(ss.str());
}

}  // namespace f3d::synth
