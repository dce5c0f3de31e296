#include "config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <nlohmann/json.hpp>

#include "feat3d/errors.hpp"

namespace f3d::cli {

using json = nlohmann::json;

namespace {

void check_keys(const json& node, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : node.items()) {
        bool known = false;
        for (const char* name : allowed)
            if (key == name) known = true;
        if (!known)
            throw ValidationError("config: unknown key '" + where + key + "'");
    }
}

geom::Vec3 vec3_at(const json& j) {
    if (!j.is_array() || j.size() != 3)
        throw ValidationError("config: expected a 3-element array");
    return geom::Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <typename T>
void maybe(const json& node, const char* key, T& out) {
    if (node.contains(key)) out = node.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    RunConfig cfg;
    check_keys(j, "", {"render", "pos_embed", "loc_tokens", "ray_sampling", "train", "loss",
                       "fuse", "field", "datagen", "nav"});

    if (j.contains("render")) {
        const json& r = j["render"];
        check_keys(r, "render.", {"width", "height", "fov_deg", "d_v", "radius", "embed_seed"});
        maybe(r, "width", cfg.render.width);
        maybe(r, "height", cfg.render.height);
        maybe(r, "fov_deg", cfg.render.fov_deg);
        maybe(r, "d_v", cfg.render.d_v);
        maybe(r, "radius", cfg.render.radius);
        maybe(r, "embed_seed", cfg.render.embed_seed);
    }
    if (j.contains("pos_embed")) {
        const json& p = j["pos_embed"];
        check_keys(p, "pos_embed.", {"scale_min", "scale_max", "combine"});
        maybe(p, "scale_min", cfg.pos_embed.scale_min);
        maybe(p, "scale_max", cfg.pos_embed.scale_max);
        if (p.contains("combine")) {
            const std::string mode = p["combine"].get<std::string>();
            if (mode == "add")
                cfg.pos_embed.combine = loc::Combine::kAdd;
            else if (mode == "concat")
                cfg.pos_embed.combine = loc::Combine::kConcat;
            else
                throw ValidationError("config: pos_embed.combine must be 'add' or 'concat'");
        }
    }
    if (j.contains("loc_tokens")) {
        const json& l = j["loc_tokens"];
        check_keys(l, "loc_tokens.", {"bins", "base_vocab", "bounds"});
        maybe(l, "bins", cfg.loc_tokens.bins);
        maybe(l, "base_vocab", cfg.loc_tokens.base_vocab);
        if (l.contains("bounds")) {
            check_keys(l["bounds"], "loc_tokens.bounds.", {"min", "max"});
            cfg.loc_tokens.scene_bounds.min = vec3_at(l["bounds"].at("min"));
            cfg.loc_tokens.scene_bounds.max = vec3_at(l["bounds"].at("max"));
        }
    }
    if (j.contains("ray_sampling")) {
        const json& r = j["ray_sampling"];
        check_keys(r, "ray_sampling.", {"n_samples", "t_near", "t_far"});
        maybe(r, "n_samples", cfg.ray_sampling.n_samples);
        maybe(r, "t_near", cfg.ray_sampling.t_near);
        maybe(r, "t_far", cfg.ray_sampling.t_far);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        check_keys(t, "train.",
                   {"learning_rate", "warmup_init", "warmup_steps", "beta1", "beta2",
                    "weight_decay", "epsilon", "steps", "batch_rays", "seed"});
        maybe(t, "learning_rate", cfg.train.learning_rate);
        maybe(t, "warmup_init", cfg.train.warmup_init);
        maybe(t, "warmup_steps", cfg.train.warmup_steps);
        maybe(t, "beta1", cfg.train.beta1);
        maybe(t, "beta2", cfg.train.beta2);
        maybe(t, "weight_decay", cfg.train.weight_decay);
        maybe(t, "epsilon", cfg.train.epsilon);
        maybe(t, "steps", cfg.train.steps);
        maybe(t, "batch_rays", cfg.train.batch_rays);
        maybe(t, "seed", cfg.train.seed);
    }
    if (j.contains("loss")) {
        const json& l = j["loss"];
        check_keys(l, "loss.", {"feature", "opacity"});
        maybe(l, "feature", cfg.loss.feature);
        maybe(l, "opacity", cfg.loss.opacity);
    }
    if (j.contains("fuse")) {
        check_keys(j["fuse"], "fuse.", {"dims"});
        maybe(j["fuse"], "dims", cfg.fuse.dims);
    }
    if (j.contains("field")) {
        check_keys(j["field"], "field.", {"dims"});
        maybe(j["field"], "dims", cfg.field_grid.dims);
    }
    if (j.contains("datagen")) {
        const json& d = j["datagen"];
        check_keys(d, "datagen.",
                   {"max_rounds", "chat_views", "demos", "temperature", "max_tokens"});
        maybe(d, "max_rounds", cfg.datagen.max_rounds);
        maybe(d, "chat_views", cfg.datagen.chat_views);
        maybe(d, "demos", cfg.datagen.demos);
        maybe(d, "temperature", cfg.datagen.temperature);
        maybe(d, "max_tokens", cfg.datagen.max_tokens);
    }
    if (j.contains("nav")) {
        const json& n = j["nav"];
        check_keys(n, "nav.", {"max_steps", "success_radius", "observe_radius"});
        maybe(n, "max_steps", cfg.nav.max_steps);
        maybe(n, "success_radius", cfg.nav.success_radius);
        maybe(n, "observe_radius", cfg.nav.observe_radius);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace f3d::cli
