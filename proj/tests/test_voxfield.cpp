#include <doctest.h>

#include <cmath>

#include "feat3d/voxfield.hpp"
#include "support/test_util.hpp"

using namespace f3d;
using field::GridGradients;
using field::LossWeights;
using field::RayBatch;
using field::RaySampleConfig;
using field::RenderOutput;
using field::TrainConfig;
using field::VoxelFeatureGrid;
using geom::Ray;
using geom::Vec3;

namespace {

VoxelFeatureGrid random_grid(Rng& rng, const std::array<int, 3>& dims, int d_v,
                             double density_lo = -1.5, double density_hi = 1.5) {
    VoxelFeatureGrid grid = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, dims, d_v);
    for (auto& d : grid.density) d = uniform_double(rng, density_lo, density_hi);
    for (auto& c : grid.color) c = uniform_double(rng, 0.0, 1.0);
    for (auto& f : grid.feature) f = uniform_double(rng, -1.0, 1.0);
    return grid;
}

Ray ray_through(const Vec3& origin, const Vec3& toward) {
    Ray ray;
    ray.origin = origin;
    ray.direction = (toward - origin).normalized();
    return ray;
}

RayBatch random_batch(Rng& rng, const VoxelFeatureGrid& grid, std::size_t n) {
    RayBatch batch;
    batch.d_v = grid.d_v;
    const Vec3 extent(grid.dims[0] * grid.voxel_size, grid.dims[1] * grid.voxel_size,
                      grid.dims[2] * grid.voxel_size);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 origin = grid.origin + Vec3(uniform_double(rng, -1.0, 0.0),
                                               uniform_double(rng, 0.2, extent.y() - 0.2),
                                               uniform_double(rng, 0.2, extent.z() - 0.2));
        const Vec3 toward = grid.origin + Vec3(extent.x() + 1.0,
                                               uniform_double(rng, 0.2, extent.y() - 0.2),
                                               uniform_double(rng, 0.2, extent.z() - 0.2));
        batch.rays.push_back(ray_through(origin, toward));
        for (int k = 0; k < 3; ++k) batch.rgb.push_back(uniform_double(rng, 0.0, 1.0));
        for (int k = 0; k < grid.d_v; ++k)
            batch.feature.push_back(uniform_double(rng, -1.0, 1.0));
        batch.hit.push_back(uniform_index(rng, 2) == 0 ? 0.0 : 1.0);
    }
    return batch;
}

double batch_loss(const VoxelFeatureGrid& grid, const RayBatch& batch,
                  const RaySampleConfig& cfg, const LossWeights& weights) {
    return field::loss(grid, batch, cfg, weights);
}

}  // namespace

TEST_CASE("zero-density field renders nothing") {
    VoxelFeatureGrid grid = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {4, 4, 4}, 3, -100.0);
    RaySampleConfig cfg{16, 0.0, 6.0};

    const RenderOutput through = field::render_ray(grid, ray_through({-1, 2, 2}, {5, 2, 2}), cfg);
    CHECK(through.opacity < 1e-12);
    CHECK(through.color.norm() < 1e-12);

    // A ray that never enters the grid is exactly empty.
    const RenderOutput missed =
        field::render_ray(grid, ray_through({-1, -10, -10}, {5, -10, -10}), cfg);
    CHECK(missed.opacity == 0.0);
    CHECK(missed.color == Vec3(0, 0, 0));
    for (const double f : missed.feature) CHECK(f == 0.0);
}

TEST_CASE("constant saturated field reproduces its feature") {
    VoxelFeatureGrid grid = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {8, 8, 8}, 4, 20.0);
    const std::vector<double> f = {0.3, -0.7, 1.1, 0.25};
    for (std::size_t v = 0; v < grid.voxel_count(); ++v)
        for (int k = 0; k < 4; ++k) grid.feature[v * 4 + k] = f[k];

    // Ray segment strictly inside the inner region, away from the
    // zero-padded boundary shell.
    Ray ray;
    ray.origin = Vec3(4.0, 4.0, 0.6);
    ray.direction = Vec3(0, 0, 1);
    RaySampleConfig cfg{64, 0.0, 6.0};
    const RenderOutput out = field::render_ray(grid, ray, cfg);
    CHECK(out.opacity > 1.0 - 1e-6);
    CHECK(out.opacity <= 1.0 + 1e-12);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(out.feature[k] - f[k]) < 1e-5);
}

TEST_CASE("two-sample compositing matches the closed form") {
    Rng rng(3);
    VoxelFeatureGrid grid = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {8, 8, 8}, 2, 0.4);
    const double sigma = field::softplus(0.4);

    Ray ray;
    ray.origin = Vec3(4.0, 4.0, 1.0);
    ray.direction = Vec3(0, 0, 1);
    RaySampleConfig cfg{2, 0.0, 4.0};  // samples at z = 2.0 and 4.0, delta = 2
    const double delta = cfg.step();
    const double w1 = 1.0 - std::exp(-sigma * delta);
    const double w2 = std::exp(-sigma * delta) * (1.0 - std::exp(-sigma * delta));

    const RenderOutput out = field::render_ray(grid, ray, cfg);
    CHECK(out.opacity == doctest::Approx(w1 + w2).epsilon(1e-12));
    (void)rng;
}

TEST_CASE("loss vanishes on self-targets and matches hand arithmetic") {
    Rng rng(5);
    VoxelFeatureGrid grid = random_grid(rng, {5, 4, 3}, 3);
    RaySampleConfig cfg{24, 0.0, 8.0};
    RayBatch batch = random_batch(rng, grid, 6);

    // Replace targets with the current render outputs.
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const RenderOutput out = field::render_ray(grid, batch.rays[i], cfg);
        for (int k = 0; k < 3; ++k) batch.rgb[3 * i + k] = out.color[k];
        for (int k = 0; k < grid.d_v; ++k) batch.feature[grid.d_v * i + k] = out.feature[k];
        batch.hit[i] = out.opacity;
    }
    CHECK(batch_loss(grid, batch, cfg, {}) < 1e-18);

    // Empty field, unit targets, one ray that misses the grid entirely:
    // loss = 3 + lambda_f * d_v + lambda_o exactly.
    VoxelFeatureGrid empty = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {4, 4, 4}, 5, -50.0);
    RayBatch unit;
    unit.d_v = 5;
    unit.rays.push_back(ray_through({-10, -10, -10}, {-20, -10, -10}));
    unit.rgb = {1, 1, 1};
    unit.feature.assign(5, 1.0);
    unit.hit = {1.0};
    const LossWeights weights;
    CHECK(batch_loss(empty, unit, cfg, weights) ==
          doctest::Approx(3.0 + weights.feature * 5.0 + weights.opacity).epsilon(1e-12));
}

TEST_CASE("loss matches an independent recomputation") {
    Rng rng(7);
    const VoxelFeatureGrid grid = random_grid(rng, {4, 4, 4}, 3);
    RaySampleConfig cfg{16, 0.0, 6.0};
    const RayBatch batch = random_batch(rng, grid, 9);
    const LossWeights weights{0.7, 0.03};

    double expected = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const RenderOutput out = field::render_ray(grid, batch.rays[i], cfg);
        double term = 0.0;
        for (int k = 0; k < 3; ++k)
            term += (out.color[k] - batch.rgb[3 * i + k]) * (out.color[k] - batch.rgb[3 * i + k]);
        for (int k = 0; k < grid.d_v; ++k) {
            const double d = out.feature[k] - batch.feature[grid.d_v * i + k];
            term += weights.feature * d * d;
        }
        term += weights.opacity * (out.opacity - batch.hit[i]) * (out.opacity - batch.hit[i]);
        expected += term;
    }
    expected /= batch.size();
    CHECK(batch_loss(grid, batch, cfg, weights) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("analytic gradients agree with central finite differences") {
    Rng rng(11);
    VoxelFeatureGrid grid = random_grid(rng, {4, 4, 4}, 3);
    RaySampleConfig cfg{16, 0.0, 7.0};
    const RayBatch batch = random_batch(rng, grid, 8);
    const LossWeights weights;

    const GridGradients grad = field::gradients(grid, batch, cfg, weights);

    const double h = 1e-4;
    double max_rel_err = 0.0;
    const auto check_param = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const double up = batch_loss(grid, batch, cfg, weights);
            params[i] = saved - h;
            const double down = batch_loss(grid, batch, cfg, weights);
            params[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            if (std::abs(grads[i]) > 1e-8) {
                max_rel_err = std::max(
                    max_rel_err, std::abs(fd - grads[i]) /
                                     std::max(std::abs(fd), std::abs(grads[i])));
            } else {
                CHECK(std::abs(fd) < 1e-5);
            }
        }
    };
    check_param(grid.density, grad.density);
    check_param(grid.color, grad.color);
    check_param(grid.feature, grad.feature);
    CHECK(max_rel_err < 1e-3);
}

TEST_CASE("rays leave untouched voxels with exactly zero gradient") {
    VoxelFeatureGrid grid = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {6, 6, 6}, 2, 0.5);
    RayBatch batch;
    batch.d_v = 2;
    // Straight ray hugging the low-y, low-z corner plane.
    batch.rays.push_back(ray_through({-1, 0.6, 0.6}, {7, 0.6, 0.6}));
    batch.rgb = {1, 0, 0};
    batch.feature = {1, -1};
    batch.hit = {1.0};
    RaySampleConfig cfg{32, 0.0, 8.0};

    const GridGradients grad = field::gradients(grid, batch, cfg, {});
    // Voxels far from the corner line never enter the stencil.
    const std::size_t far_voxel = grid.linear_index(3, 4, 4);
    CHECK(grad.density[far_voxel] == 0.0);
    CHECK(grad.color[far_voxel * 3] == 0.0);
    CHECK(grad.feature[far_voxel * 2] == 0.0);

    // Something near the ray does move.
    double total = 0.0;
    for (const double g : grad.density) total += std::abs(g);
    CHECK(total > 0.0);
}

TEST_CASE("feature gradients scale exactly linearly in lambda_f") {
    Rng rng(13);
    VoxelFeatureGrid grid = random_grid(rng, {4, 4, 4}, 3);
    RaySampleConfig cfg{12, 0.0, 6.0};
    RayBatch batch = random_batch(rng, grid, 4);
    // Zero the color and opacity terms so only the feature loss remains.
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const RenderOutput out = field::render_ray(grid, batch.rays[i], cfg);
        for (int k = 0; k < 3; ++k) batch.rgb[3 * i + k] = out.color[k];
        batch.hit[i] = out.opacity;
    }

    const GridGradients g1 = field::gradients(grid, batch, cfg, {1.0, 0.01});
    const GridGradients g2 = field::gradients(grid, batch, cfg, {2.0, 0.01});
    for (std::size_t i = 0; i < g1.feature.size(); ++i)
        CHECK(2.0 * g1.feature[i] == g2.feature[i]);
}

TEST_CASE("parallel gradient reduction matches the serial reference") {
    Rng rng(17);
    const VoxelFeatureGrid grid = random_grid(rng, {5, 5, 5}, 4);
    RaySampleConfig cfg{20, 0.0, 8.0};
    const RayBatch batch = random_batch(rng, grid, 64);

    const GridGradients a = field::gradients(grid, batch, cfg, {});
    const GridGradients b = field::gradients_serial(grid, batch, cfg, {});
    for (std::size_t i = 0; i < a.density.size(); ++i)
        CHECK(a.density[i] == doctest::Approx(b.density[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < a.feature.size(); ++i)
        CHECK(a.feature[i] == doctest::Approx(b.feature[i]).epsilon(1e-12));
}

TEST_CASE("compositing weights are a subprobability and outputs stay bounded") {
    Rng rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const VoxelFeatureGrid grid = random_grid(rng, {4, 5, 6}, 2, -3.0, 3.0);
        const RayBatch batch = random_batch(rng, grid, 1);
        RaySampleConfig cfg{16, 0.0, uniform_double(rng, 2.0, 12.0)};
        const RenderOutput out = field::render_ray(grid, batch.rays[0], cfg);
        CHECK(out.opacity >= 0.0);
        CHECK(out.opacity <= 1.0 + 1e-12);

        double lo_f = 0.0, hi_f = 0.0, lo_c = 0.0, hi_c = 0.0;
        for (const double f : grid.feature) {
            lo_f = std::min(lo_f, f);
            hi_f = std::max(hi_f, f);
        }
        for (const double c : grid.color) {
            lo_c = std::min(lo_c, c);
            hi_c = std::max(hi_c, c);
        }
        for (const double f : out.feature) {
            CHECK(f >= lo_f - 1e-12);
            CHECK(f <= hi_f + 1e-12);
        }
        for (int k = 0; k < 3; ++k) {
            CHECK(out.color[k] >= lo_c - 1e-12);
            CHECK(out.color[k] <= hi_c + 1e-12);
        }
    }
}

TEST_CASE("fit leaves the grid untouched for zero steps and is seed-deterministic") {
    const geom::Aabb room{Vec3(0, 0, 0), Vec3(10, 10, 10)};
    const synth::Scene scene = synth::make_scene(2, 2, room);
    const synth::LabelEmbedding embed =
        synth::LabelEmbedding::generate(scene.label_set(), 4, 0);
    std::vector<synth::CameraView> views;
    for (const auto& [intr, pose] : synth::orbit_cameras(scene, 4, 9.0, {24, 24, 60.0}))
        views.push_back(synth::render(scene, intr, pose, embed));

    VoxelFeatureGrid grid = VoxelFeatureGrid::create(room.min, 10.0 / 8, {8, 8, 8}, 4);
    RaySampleConfig ray_cfg{24, 0.05, 22.0};

    TrainConfig zero_cfg;
    zero_cfg.steps = 0;
    const VoxelFeatureGrid before = grid;
    const field::FitResult nothing = field::fit(grid, views, zero_cfg, ray_cfg);
    CHECK(nothing.loss_trace.empty());
    CHECK(grid.density == before.density);
    CHECK(grid.feature == before.feature);

    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.warmup_steps = 10;
    cfg.steps = 60;
    cfg.batch_rays = 256;
    cfg.seed = 42;

    VoxelFeatureGrid g1 = before;
    VoxelFeatureGrid g2 = before;
    const field::FitResult r1 = field::fit(g1, views, cfg, ray_cfg);
    const field::FitResult r2 = field::fit(g2, views, cfg, ray_cfg);
    CHECK(g1.density == g2.density);
    CHECK(g1.color == g2.color);
    CHECK(g1.feature == g2.feature);
    CHECK(r1.loss_trace == r2.loss_trace);
    for (const double l : r1.loss_trace) CHECK(std::isfinite(l));

    // Even a short run should move the loss downhill.
    CHECK(r1.loss_trace.back() < r1.loss_trace.front());
}

TEST_CASE("fit reports divergence with the failing step") {
    const geom::Aabb room{Vec3(0, 0, 0), Vec3(10, 10, 10)};
    const synth::Scene scene = synth::make_scene(2, 1, room);
    const synth::LabelEmbedding embed =
        synth::LabelEmbedding::generate(scene.label_set(), 2, 0);
    std::vector<synth::CameraView> views;
    for (const auto& [intr, pose] : synth::orbit_cameras(scene, 2, 9.0, {16, 16, 60.0}))
        views.push_back(synth::render(scene, intr, pose, embed));

    VoxelFeatureGrid grid = VoxelFeatureGrid::create(room.min, 10.0 / 4, {4, 4, 4}, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e30;
    cfg.warmup_steps = 0;
    cfg.steps = 50;
    cfg.batch_rays = 32;
    RaySampleConfig ray_cfg{8, 0.05, 22.0};
    CHECK_THROWS_AS(field::fit(grid, views, cfg, ray_cfg), ValidationError);
}

TEST_CASE("grid checkpoints and loss traces round-trip") {
    test::TempDir tmp("voxio");
    Rng rng(23);
    const VoxelFeatureGrid grid = random_grid(rng, {4, 3, 5}, 3);
    field::save_grid(grid, tmp.file("grid"));
    const VoxelFeatureGrid back = field::load_grid(tmp.file("grid"));
    CHECK(back.dims == grid.dims);
    CHECK(back.d_v == grid.d_v);
    CHECK(back.voxel_count() == grid.voxel_count());
    CHECK(std::abs(back.voxel_size - grid.voxel_size) < 1e-12);

    field::write_loss_trace_csv({1.0, 0.5, 0.25}, tmp.file("trace.csv"));
    const std::string csv = test::read_file(tmp.file("trace.csv"));
    CHECK(csv.rfind("step,loss\n0,1\n", 0) == 0);

    // Density-thresholded sampling keeps only saturated voxels.
    VoxelFeatureGrid sparse = VoxelFeatureGrid::create(Vec3(0, 0, 0), 1.0, {2, 2, 2}, 2, -5.0);
    sparse.density[0] = 5.0;  // softplus(5) > 1
    const auto cloud = field::sample_occupied_points(sparse, 1.0);
    CHECK(cloud.size() == 1);
}
