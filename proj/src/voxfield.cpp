#include "feat3d/voxfield.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "feat3d/rng.hpp"
#include "feat3d/tensorfile.hpp"

namespace f3d::field {

using json = nlohmann::ordered_json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Eight-corner trilinear stencil around p, center-of-voxel convention.
// Corners falling outside the grid are zero-padded (index -1).
struct Stencil {
    std::array<std::ptrdiff_t, 8> index;
    std::array<double, 8> weight;
};

bool inside_grid(const VoxelFeatureGrid& grid, const Vec3& p) {
    const Vec3 rel = p - grid.origin;
    const Vec3 size(grid.dims[0] * grid.voxel_size, grid.dims[1] * grid.voxel_size,
                    grid.dims[2] * grid.voxel_size);
    return rel.x() >= 0.0 && rel.y() >= 0.0 && rel.z() >= 0.0 && rel.x() <= size.x() &&
           rel.y() <= size.y() && rel.z() <= size.z();
}

Stencil stencil_at(const VoxelFeatureGrid& grid, const Vec3& p) {
    Stencil st;
    const Vec3 g = (p - grid.origin) / grid.voxel_size - Vec3::Constant(0.5);
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double fl = std::floor(g[a]);
        base[a] = static_cast<int>(fl);
        frac[a] = g[a] - fl;
    }
    int corner = 0;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx, ++corner) {
                const int x = base[0] + dx, y = base[1] + dy, z = base[2] + dz;
                const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                                 (dz ? frac[2] : 1.0 - frac[2]);
                st.weight[corner] = w;
                if (x < 0 || y < 0 || z < 0 || x >= grid.dims[0] || y >= grid.dims[1] ||
                    z >= grid.dims[2]) {
                    st.index[corner] = -1;
                } else {
                    st.index[corner] = static_cast<std::ptrdiff_t>(grid.linear_index(x, y, z));
                }
            }
        }
    }
    return st;
}

double interp_scalar(const std::vector<double>& values, const Stencil& st) {
    double out = 0.0;
    for (int c = 0; c < 8; ++c)
        if (st.index[c] >= 0) out += st.weight[c] * values[st.index[c]];
    return out;
}

void interp_rows(const std::vector<double>& values, int row_dim, const Stencil& st, double* out) {
    std::fill(out, out + row_dim, 0.0);
    for (int c = 0; c < 8; ++c) {
        if (st.index[c] < 0) continue;
        const double* row = values.data() + st.index[c] * row_dim;
        const double w = st.weight[c];
        for (int k = 0; k < row_dim; ++k) out[k] += w * row[k];
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-sample state cached by the forward pass for the backward sweep.
struct SampleRecord {
    Stencil stencil;
    double raw_density;
    double transmittance_factor;  // exp(-sigma * delta)
    double weight;                // T_i * alpha_i
    double visibility;            // T_i
};

struct RayWorkspace {
    std::vector<SampleRecord> samples;
    std::vector<double> color_i;    // per-sample interpolated color, n x 3
    std::vector<double> feature_i;  // per-sample interpolated feature, n x d_v
};

// Forward pass for one ray, optionally caching per-sample state.
RenderOutput forward_ray(const VoxelFeatureGrid& grid, const Ray& ray, const RaySampleConfig& cfg,
                         RayWorkspace* ws) {
    const double delta = cfg.step();
    RenderOutput out;
    out.feature.assign(grid.d_v, 0.0);
    if (ws) {
        ws->samples.clear();
        ws->color_i.clear();
        ws->feature_i.clear();
    }
    double transmittance = 1.0;
    std::vector<double> feat(grid.d_v);
    for (int i = 0; i < cfg.n_samples; ++i) {
        const double t = cfg.t_near + (i + 0.5) * delta;
        const Vec3 p = ray.at(t);
        if (!inside_grid(grid, p)) continue;
        const Stencil st = stencil_at(grid, p);
        const double raw = interp_scalar(grid.density, st);
        const double sigma = softplus(raw);
        const double e = std::exp(-sigma * delta);
        const double alpha = 1.0 - e;
        const double w = transmittance * alpha;

        double rgb[3];
        interp_rows(grid.color, 3, st, rgb);
        interp_rows(grid.feature, grid.d_v, st, feat.data());
        for (int k = 0; k < 3; ++k) out.color[k] += w * rgb[k];
        for (int k = 0; k < grid.d_v; ++k) out.feature[k] += w * feat[k];
        out.opacity += w;

        if (ws) {
            ws->samples.push_back({st, raw, e, w, transmittance});
            ws->color_i.insert(ws->color_i.end(), rgb, rgb + 3);
            ws->feature_i.insert(ws->feature_i.end(), feat.begin(), feat.end());
        }
        transmittance *= e;
    }
    return out;
}

// Loss terms and parameter gradients for one ray. grad may be null for a
// loss-only evaluation. loss_scale folds in the 1/batch mean factor.
double backward_ray(const VoxelFeatureGrid& grid, const RayBatch& batch, std::size_t ray_index,
                    const RaySampleConfig& cfg, const LossWeights& weights, double loss_scale,
                    RayWorkspace& ws, GridGradients* grad) {
    const RenderOutput out = forward_ray(grid, batch.rays[ray_index], cfg, grad ? &ws : nullptr);
    const double* rgb_t = batch.rgb.data() + 3 * ray_index;
    const double* feat_t = batch.feature.data() + static_cast<std::size_t>(grid.d_v) * ray_index;
    const double hit_t = batch.hit[ray_index];

    double ray_loss = 0.0;
    for (int k = 0; k < 3; ++k) ray_loss += (out.color[k] - rgb_t[k]) * (out.color[k] - rgb_t[k]);
    for (int k = 0; k < grid.d_v; ++k)
        ray_loss += weights.feature * (out.feature[k] - feat_t[k]) * (out.feature[k] - feat_t[k]);
    ray_loss += weights.opacity * (out.opacity - hit_t) * (out.opacity - hit_t);
    if (!grad) return ray_loss;

    const double delta = cfg.step();
    double g_color[3];
    for (int k = 0; k < 3; ++k) g_color[k] = loss_scale * 2.0 * (out.color[k] - rgb_t[k]);
    std::vector<double> g_feature(grid.d_v);
    for (int k = 0; k < grid.d_v; ++k)
        g_feature[k] = loss_scale * 2.0 * weights.feature * (out.feature[k] - feat_t[k]);
    const double g_opacity = loss_scale * 2.0 * weights.opacity * (out.opacity - hit_t);

    const int n = static_cast<int>(ws.samples.size());
    // dL/dw_i is a dot with the upstream color/feature gradients plus the
    // opacity term; suffix sums handle the transmittance coupling.
    std::vector<double> g_weight(n);
    for (int i = 0; i < n; ++i) {
        double a = g_opacity;
        for (int k = 0; k < 3; ++k) a += g_color[k] * ws.color_i[3 * i + k];
        for (int k = 0; k < grid.d_v; ++k)
            a += g_feature[k] * ws.feature_i[static_cast<std::size_t>(grid.d_v) * i + k];
        g_weight[i] = a;
    }

    double suffix = 0.0;  // sum over later samples of g_weight_k * w_k
    for (int i = n - 1; i >= 0; --i) {
        const SampleRecord& s = ws.samples[i];
        // d alpha_i: own weight contribution minus the attenuation of all
        // later samples (their w_k carry a (1 - alpha_i) factor).
        const double g_alpha =
            g_weight[i] * s.visibility - (suffix == 0.0 ? 0.0 : suffix / s.transmittance_factor);
        const double g_sigma = g_alpha * delta * s.transmittance_factor;
        const double g_raw = g_sigma * sigmoid(s.raw_density);
        for (int c = 0; c < 8; ++c) {
            if (s.stencil.index[c] < 0) continue;
            const std::ptrdiff_t idx = s.stencil.index[c];
            const double cw = s.stencil.weight[c];
            grad->density[idx] += cw * g_raw;
            for (int k = 0; k < 3; ++k) grad->color[idx * 3 + k] += cw * s.weight * g_color[k];
            for (int k = 0; k < grid.d_v; ++k)
                grad->feature[idx * grid.d_v + k] += cw * s.weight * g_feature[k];
        }
        suffix += g_weight[i] * s.weight;
    }
    return ray_loss;
}

GridGradients zero_gradients(const VoxelFeatureGrid& grid) {
    GridGradients g;
    g.density.assign(grid.voxel_count(), 0.0);
    g.color.assign(grid.voxel_count() * 3, 0.0);
    g.feature.assign(grid.voxel_count() * grid.d_v, 0.0);
    return g;
}

void add_gradients(GridGradients& into, const GridGradients& from) {
    for (std::size_t i = 0; i < into.density.size(); ++i) into.density[i] += from.density[i];
    for (std::size_t i = 0; i < into.color.size(); ++i) into.color[i] += from.color[i];
    for (std::size_t i = 0; i < into.feature.size(); ++i) into.feature[i] += from.feature[i];
}

void check_batch(const VoxelFeatureGrid& grid, const RayBatch& batch) {
    if (batch.size() == 0) throw ValidationError("voxfield: empty ray batch");
    if (batch.d_v != grid.d_v)
        throw ValidationError("voxfield: batch feature dimension mismatch");
}

// Loss and gradients over the batch, parallel over rays with per-thread
// buffers merged in thread order. Identical thread counts give identical
// results; a single thread reproduces the serial path bit for bit.
double eval_batch(const VoxelFeatureGrid& grid, const RayBatch& batch, const RaySampleConfig& cfg,
                  const LossWeights& weights, GridGradients* grad) {
    check_batch(grid, batch);
    const double scale = 1.0 / static_cast<double>(batch.size());
    const std::int64_t n = static_cast<std::int64_t>(batch.size());

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    std::vector<GridGradients> partial_grads;
    std::vector<double> partial_loss(max_threads, 0.0);
    if (grad)
        for (int t = 0; t < max_threads; ++t) partial_grads.push_back(zero_gradients(grid));
    else
        partial_grads.resize(max_threads);

#pragma omp parallel
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        RayWorkspace ws;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            partial_loss[tid] += backward_ray(grid, batch, static_cast<std::size_t>(i), cfg,
                                              weights, scale, ws,
                                              grad ? &partial_grads[tid] : nullptr);
        }
    }

    double total = 0.0;
    for (int t = 0; t < max_threads; ++t) total += partial_loss[t];
    if (grad) {
        *grad = zero_gradients(grid);
        for (int t = 0; t < max_threads; ++t) add_gradients(*grad, partial_grads[t]);
    }
    return total * scale;
}

void adamw_update(std::vector<double>& params, const std::vector<double>& grads,
                  std::vector<double>& m, std::vector<double>& v, const TrainConfig& cfg,
                  double lr, double bias1, double bias2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * params[i]);
    }
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

VoxelFeatureGrid VoxelFeatureGrid::create(const Vec3& origin, double voxel_size,
                                          const std::array<int, 3>& dims, int d_v,
                                          double initial_raw_density) {
    VoxelFeatureGrid grid;
    grid.origin = origin;
    grid.voxel_size = voxel_size;
    grid.dims = dims;
    grid.d_v = d_v;
    grid.validate();
    grid.density.assign(grid.voxel_count(), initial_raw_density);
    grid.color.assign(grid.voxel_count() * 3, 0.0);
    grid.feature.assign(grid.voxel_count() * d_v, 0.0);
    return grid;
}

void VoxelFeatureGrid::validate() const {
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
        throw ValidationError("voxel grid: dims must be at least 2 per axis");
    if (!(voxel_size > 0.0)) throw ValidationError("voxel grid: voxel_size must be positive");
    if (d_v < 1) throw ValidationError("voxel grid: d_v must be positive");
    const auto finite = [](const std::vector<double>& xs) {
        return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
    };
    if (!density.empty() && (!finite(density) || !finite(color) || !finite(feature)))
        throw ValidationError("voxel grid: non-finite parameters");
}

Vec3 VoxelFeatureGrid::voxel_center(std::size_t linear) const {
    const int x = static_cast<int>(linear % dims[0]);
    const int y = static_cast<int>((linear / dims[0]) % dims[1]);
    const int z = static_cast<int>(linear / (static_cast<std::size_t>(dims[0]) * dims[1]));
    return origin + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
}

void RaySampleConfig::validate() const {
    if (n_samples < 2) throw ValidationError("ray sampling: n_samples must be at least 2");
    if (!(t_near >= 0.0) || !(t_near < t_far))
        throw ValidationError("ray sampling: need 0 <= t_near < t_far");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(warmup_init > 0.0))
        throw ValidationError("train config: learning rates must be positive");
    if (warmup_steps < 0 || steps < 0) throw ValidationError("train config: negative step count");
    if (batch_rays < 1) throw ValidationError("train config: batch_rays must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ValidationError("train config: betas must lie in [0, 1)");
}

double TrainConfig::learning_rate_at(int step) const {
    if (step < warmup_steps)
        return warmup_init + (learning_rate - warmup_init) * (step + 1) /
                                 static_cast<double>(warmup_steps);
    const int decay_span = std::max(1, steps - warmup_steps);
    const double progress = static_cast<double>(step - warmup_steps) / decay_span;
    return learning_rate * 0.5 * (1.0 + std::cos(kPi * progress));
}

RenderOutput render_ray(const VoxelFeatureGrid& grid, const Ray& ray, const RaySampleConfig& cfg) {
    cfg.validate();
    ray.validate();
    return forward_ray(grid, ray, cfg, nullptr);
}

double loss(const VoxelFeatureGrid& grid, const RayBatch& batch, const RaySampleConfig& cfg,
            const LossWeights& weights) {
    cfg.validate();
    return eval_batch(grid, batch, cfg, weights, nullptr);
}

GridGradients gradients(const VoxelFeatureGrid& grid, const RayBatch& batch,
                        const RaySampleConfig& cfg, const LossWeights& weights) {
    cfg.validate();
    GridGradients grad;
    eval_batch(grid, batch, cfg, weights, &grad);
    return grad;
}

GridGradients gradients_serial(const VoxelFeatureGrid& grid, const RayBatch& batch,
                               const RaySampleConfig& cfg, const LossWeights& weights) {
    cfg.validate();
    check_batch(grid, batch);
    GridGradients grad = zero_gradients(grid);
    RayWorkspace ws;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        backward_ray(grid, batch, i, cfg, weights, scale, ws, &grad);
    return grad;
}

RayBatch RayBatch::select(const std::vector<std::size_t>& indices) const {
    RayBatch out;
    out.d_v = d_v;
    out.rays.reserve(indices.size());
    for (const std::size_t i : indices) {
        out.rays.push_back(rays[i]);
        out.rgb.insert(out.rgb.end(), rgb.begin() + 3 * i, rgb.begin() + 3 * (i + 1));
        out.feature.insert(out.feature.end(), feature.begin() + static_cast<std::size_t>(d_v) * i,
                           feature.begin() + static_cast<std::size_t>(d_v) * (i + 1));
        out.hit.push_back(hit[i]);
    }
    return out;
}

RayBatch make_ray_batch(const std::vector<synth::CameraView>& views) {
    if (views.empty()) throw ValidationError("make_ray_batch: no views");
    RayBatch batch;
    batch.d_v = views.front().d_v;
    for (const auto& view : views) {
        if (view.d_v != batch.d_v)
            throw ValidationError("make_ray_batch: views disagree on feature dimension");
        for (int v = 0; v < view.height; ++v) {
            for (int u = 0; u < view.width; ++u) {
                const std::size_t px = static_cast<std::size_t>(v) * view.width + u;
                Ray ray;
                ray.origin = view.pose.translation;
                const Vec3 dir_cam((u - view.intr.cx) / view.intr.fx,
                                   (v - view.intr.cy) / view.intr.fy, 1.0);
                ray.direction = (view.pose.rotation * dir_cam).normalized();
                batch.rays.push_back(ray);
                batch.rgb.insert(batch.rgb.end(), view.rgb.begin() + px * 3,
                                 view.rgb.begin() + px * 3 + 3);
                batch.feature.insert(batch.feature.end(), view.features.begin() + px * view.d_v,
                                     view.features.begin() + (px + 1) * view.d_v);
                batch.hit.push_back(view.depth[px] > 0.0 ? 1.0 : 0.0);
            }
        }
    }
    return batch;
}

FitResult fit(VoxelFeatureGrid& grid, const std::vector<synth::CameraView>& views,
              const TrainConfig& cfg, const RaySampleConfig& ray_cfg, const LossWeights& weights) {
    cfg.validate();
    ray_cfg.validate();
    grid.validate();
    if (views.empty()) throw ValidationError("fit: no views");

    FitResult result;
    if (cfg.steps == 0) return result;

    const RayBatch all_rays = make_ray_batch(views);
    Rng rng(cfg.seed);

    GridGradients m = zero_gradients(grid);
    GridGradients v = zero_gradients(grid);
    std::vector<std::size_t> indices(cfg.batch_rays);

    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& idx : indices)
            idx = static_cast<std::size_t>(uniform_index(rng, all_rays.size()));
        const RayBatch batch = all_rays.select(indices);

        GridGradients grad;
        const double batch_loss = eval_batch(grid, batch, ray_cfg, weights, &grad);
        if (!std::isfinite(batch_loss))
            throw ValidationError("fit: non-finite loss at step " + std::to_string(step));
        result.loss_trace.push_back(batch_loss);

        const double lr = cfg.learning_rate_at(step);
        const double bias1 = 1.0 - std::pow(cfg.beta1, step + 1);
        const double bias2 = 1.0 - std::pow(cfg.beta2, step + 1);
        adamw_update(grid.density, grad.density, m.density, v.density, cfg, lr, bias1, bias2);
        adamw_update(grid.color, grad.color, m.color, v.color, cfg, lr, bias1, bias2);
        adamw_update(grid.feature, grad.feature, m.feature, v.feature, cfg, lr, bias1, bias2);
    }
    return result;
}

extract::PointFeatureCloud sample_occupied_points(const VoxelFeatureGrid& grid,
                                                  double density_threshold) {
    extract::PointFeatureCloud cloud;
    cloud.d_v = grid.d_v;
    for (std::size_t i = 0; i < grid.voxel_count(); ++i) {
        if (softplus(grid.density[i]) <= density_threshold) continue;
        const Vec3 c = grid.voxel_center(i);
        cloud.positions.insert(cloud.positions.end(), {c.x(), c.y(), c.z()});
        cloud.features.insert(cloud.features.end(), grid.feature.begin() + i * grid.d_v,
                              grid.feature.begin() + (i + 1) * grid.d_v);
    }
    return cloud;
}

void save_grid(const VoxelFeatureGrid& grid, const std::string& prefix) {
    const std::uint64_t nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    io::write_tensor(prefix + ".density.f3dt", io::Tensor::from_doubles({nz, ny, nx}, grid.density));
    io::write_tensor(prefix + ".color.f3dt", io::Tensor::from_doubles({nz, ny, nx, 3}, grid.color));
    io::write_tensor(prefix + ".feature.f3dt",
                     io::Tensor::from_doubles({nz, ny, nx, static_cast<std::uint64_t>(grid.d_v)},
                                              grid.feature));
    json sidecar;
    sidecar["origin"] = vec3_json(grid.origin);
    sidecar["voxel_size"] = grid.voxel_size;
    sidecar["dims"] = json::array({grid.dims[0], grid.dims[1], grid.dims[2]});
    sidecar["D_v"] = grid.d_v;
    std::ofstream out(prefix + ".json", std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + prefix + ".json");
    out << sidecar.dump(2) << "\n";
}

VoxelFeatureGrid load_grid(const std::string& prefix) {
    std::ifstream in(prefix + ".json", std::ios::binary);
    if (!in) throw IoError("cannot open: " + prefix + ".json");
    json sidecar;
    try {
        in >> sidecar;
    } catch (const json::exception& e) {
        throw IoError(std::string("grid sidecar: ") + e.what());
    }
    VoxelFeatureGrid grid;
    grid.origin = Vec3(sidecar.at("origin")[0], sidecar.at("origin")[1], sidecar.at("origin")[2]);
    grid.voxel_size = sidecar.at("voxel_size").get<double>();
    grid.dims = {sidecar.at("dims")[0].get<int>(), sidecar.at("dims")[1].get<int>(),
                 sidecar.at("dims")[2].get<int>()};
    grid.d_v = sidecar.at("D_v").get<int>();
    grid.density = io::read_tensor(prefix + ".density.f3dt").to_doubles();
    grid.color = io::read_tensor(prefix + ".color.f3dt").to_doubles();
    grid.feature = io::read_tensor(prefix + ".feature.f3dt").to_doubles();
    grid.validate();
    if (grid.density.size() != grid.voxel_count())
        throw IoError("grid tensors disagree with sidecar dims: " + prefix);
    return grid;
}

void write_loss_trace_csv(const std::vector<double>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "step,loss\n";
    out.precision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) out << i << ',' << trace[i] << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace f3d::field
