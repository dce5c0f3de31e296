#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "feat3d/extractor.hpp"
#include "feat3d/geometry.hpp"
#include "feat3d/synthworld.hpp"

namespace f3d::field {

using geom::Ray;
using geom::Vec3;

// Dense learnable field: every voxel carries a raw density (softplus
// activation applied at render time), a color, and a feature vector.
struct VoxelFeatureGrid {
    Vec3 origin = Vec3::Zero();
    double voxel_size = 1.0;
    std::array<int, 3> dims = {2, 2, 2};
    int d_v = 0;
    std::vector<double> density;  // voxel_count, raw parameters
    std::vector<double> color;    // voxel_count x 3
    std::vector<double> feature;  // voxel_count x d_v

    static VoxelFeatureGrid create(const Vec3& origin, double voxel_size,
                                   const std::array<int, 3>& dims, int d_v,
                                   double initial_raw_density = -2.0);
    void validate() const;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t linear_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }
    Vec3 voxel_center(std::size_t linear) const;
};

struct RaySampleConfig {
    int n_samples = 64;
    double t_near = 0.05;
    double t_far = 20.0;

    void validate() const;
    double step() const { return (t_far - t_near) / n_samples; }
};

// Optimizer defaults follow the published AdamW recipe (peak 1e-5 after a
// linear warmup from 1e-8, cosine decay to 0, beta2 = 0.999, weight decay
// 0.05). They are tuned for language-model finetuning; grid fits typically
// override learning_rate and warmup_steps.
struct TrainConfig {
    double learning_rate = 1e-5;  // peak, reached at the end of warmup
    double warmup_init = 1e-8;
    int warmup_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.05;
    double epsilon = 1e-8;
    int steps = 1000;
    int batch_rays = 1024;
    std::uint64_t seed = 0;

    void validate() const;
    double learning_rate_at(int step) const;  // 0-based step index
};

struct LossWeights {
    double feature = 1.0;   // lambda_f
    double opacity = 0.01;  // lambda_o
};

struct RenderOutput {
    Vec3 color = Vec3::Zero();
    std::vector<double> feature;
    double opacity = 0.0;  // sum of compositing weights, in [0, 1]
};

// Rays plus per-ray supervision targets, stored row-major.
struct RayBatch {
    int d_v = 0;
    std::vector<Ray> rays;
    std::vector<double> rgb;      // N x 3
    std::vector<double> feature;  // N x d_v
    std::vector<double> hit;      // N, 1 for depth > 0 pixels

    std::size_t size() const { return rays.size(); }
    RayBatch select(const std::vector<std::size_t>& indices) const;
};

struct GridGradients {
    std::vector<double> density;
    std::vector<double> color;
    std::vector<double> feature;
};

struct FitResult {
    std::vector<double> loss_trace;  // one batch loss per step
};

// Emission-absorption compositing over n_samples midpoints of
// [t_near, t_far]: alpha_i = 1 - exp(-softplus(density) * delta),
// w_i = T_i * alpha_i. Samples outside the grid contribute nothing.
RenderOutput render_ray(const VoxelFeatureGrid& grid, const Ray& ray,
                        const RaySampleConfig& cfg);

// Mean over rays of |color - rgb*|^2 + lambda_f |feature - feature*|^2
// + lambda_o (opacity - hit)^2, with squared norms summed over components.
double loss(const VoxelFeatureGrid& grid, const RayBatch& batch, const RaySampleConfig& cfg,
            const LossWeights& weights = {});

// Analytic gradients of loss w.r.t. every voxel parameter. Parallel over
// rays with a fixed-order reduction; gradients_serial is the reference.
GridGradients gradients(const VoxelFeatureGrid& grid, const RayBatch& batch,
                        const RaySampleConfig& cfg, const LossWeights& weights = {});
GridGradients gradients_serial(const VoxelFeatureGrid& grid, const RayBatch& batch,
                               const RaySampleConfig& cfg, const LossWeights& weights = {});

// AdamW steps over seeded ray batches drawn from the views. Throws
// ValidationError naming the step when the loss turns non-finite.
FitResult fit(VoxelFeatureGrid& grid, const std::vector<synth::CameraView>& views,
              const TrainConfig& cfg, const RaySampleConfig& ray_cfg,
              const LossWeights& weights = {});

// One ray per pixel with rgb / feature / hit targets, in pixel order.
RayBatch make_ray_batch(const std::vector<synth::CameraView>& views);

// Voxels whose activated density clears the threshold become points,
// carrying the fitted per-voxel features.
extract::PointFeatureCloud sample_occupied_points(const VoxelFeatureGrid& grid,
                                                  double density_threshold = 1.0);

double softplus(double x);

void save_grid(const VoxelFeatureGrid& grid, const std::string& prefix);
VoxelFeatureGrid load_grid(const std::string& prefix);
void write_loss_trace_csv(const std::vector<double>& trace, const std::string& path);

}  // namespace f3d::field
