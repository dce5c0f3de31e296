#pragma once

#include <cstdint>
#include <string>

#include "feat3d/localize.hpp"
#include "feat3d/voxfield.hpp"

namespace f3d::cli {

// JSON run configuration mirroring the module configs. Every field is
// optional and falls back to the module default; unknown keys anywhere in
// the document are rejected.
struct RunConfig {
    struct Render {
        int width = 128;
        int height = 128;
        double fov_deg = 60.0;
        int d_v = 16;
        double radius = 0.0;  // 0 = auto from scene bounds
        std::uint64_t embed_seed = 0;
    } render;

    loc::PosEmbedConfig pos_embed;      // d_v filled in from data at use sites
    loc::LocTokenConfig loc_tokens{geom::Aabb{geom::Vec3(0, 0, 0), geom::Vec3(10, 10, 10)}};
    field::RaySampleConfig ray_sampling{64, 0.05, 0.0};  // t_far 0 = auto
    field::TrainConfig train;
    field::LossWeights loss;

    struct Fuse {
        int dims = 32;
    } fuse;
    struct Field {
        int dims = 16;
    } field_grid;

    struct Datagen {
        int max_rounds = 6;
        int chat_views = 3;
        int demos = 0;
        double temperature = 0.7;
        int max_tokens = 512;
    } datagen;

    struct Nav {
        int max_steps = 200;
        int success_radius = 1;
        int observe_radius = 4;
    } nav;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

}  // namespace f3d::cli
