#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "feat3d/datagen.hpp"
#include "feat3d/evalmetrics.hpp"
#include "feat3d/extractor.hpp"
#include "feat3d/localize.hpp"
#include "feat3d/navsim.hpp"
#include "feat3d/synthworld.hpp"
#include "feat3d/tensorfile.hpp"
#include "feat3d/view_io.hpp"
#include "feat3d/voxfield.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace f3d::cli {
namespace {

json vec3_json(const geom::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

RunConfig config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_run_config(path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

double auto_orbit_radius(const geom::Aabb& bounds) { return 0.9 * bounds.extent().maxCoeff(); }

// ---- scene ----------------------------------------------------------------

int cmd_scene(std::uint64_t seed, int n_objects, const std::string& out,
              const std::vector<double>& bounds_min, const std::vector<double>& bounds_max) {
    geom::Aabb bounds{geom::Vec3(bounds_min[0], bounds_min[1], bounds_min[2]),
                      geom::Vec3(bounds_max[0], bounds_max[1], bounds_max[2])};
    const synth::Scene scene = synth::make_scene(seed, n_objects, bounds);
    synth::save_scene(scene, out);
    json report;
    report["scene"] = out;
    report["objects"] = scene.objects.size();
    std::cout << report.dump() << "\n";
    return 0;
}

// ---- render ---------------------------------------------------------------

int cmd_render(const std::string& scene_path, int n_views, const std::string& out_dir,
               const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    const synth::Scene scene = synth::load_scene(scene_path);
    ensure_dir(out_dir);

    const auto labels = scene.label_set();
    const synth::LabelEmbedding embed =
        synth::LabelEmbedding::generate(labels, cfg.render.d_v, cfg.render.embed_seed);

    synth::OrbitOptions orbit;
    orbit.width = cfg.render.width;
    orbit.height = cfg.render.height;
    orbit.fov_deg = cfg.render.fov_deg;
    const double radius =
        cfg.render.radius > 0.0 ? cfg.render.radius : auto_orbit_radius(scene.bounds);

    std::vector<synth::CameraView> views;
    for (const auto& [intr, pose] : synth::orbit_cameras(scene, n_views, radius, orbit))
        views.push_back(synth::render(scene, intr, pose, embed));

    io::ViewSetMeta meta;
    meta.width = cfg.render.width;
    meta.height = cfg.render.height;
    meta.d_v = cfg.render.d_v;
    meta.embed_seed = cfg.render.embed_seed;
    meta.scene_bounds = scene.bounds;
    meta.labels = labels;
    io::save_views(views, meta, out_dir);

    std::size_t hit_pixels = 0;
    for (const auto& view : views)
        for (const double d : view.depth)
            if (d > 0.0) ++hit_pixels;

    json report;
    report["out_dir"] = out_dir;
    report["views"] = views.size();
    report["hit_pixels"] = hit_pixels;
    std::cout << report.dump() << "\n";
    return 0;
}

// ---- extract ---------------------------------------------------------------

int cmd_extract(const std::string& method, const std::string& views_dir, const std::string& out,
                const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    const io::LoadedViews loaded = io::load_views(views_dir);
    const geom::Aabb& bounds = loaded.meta.scene_bounds;

    json report;
    report["method"] = method;
    if (method == "direct") {
        const extract::PointFeatureCloud cloud = extract::direct_reconstruct(loaded.views);
        extract::save_point_cloud(cloud, out);
        report["N"] = cloud.size();
    } else if (method == "fuse") {
        const int dims = cfg.fuse.dims;
        const double voxel_size = bounds.extent().maxCoeff() / dims;
        const extract::FuseResult result =
            extract::fuse(loaded.views, bounds.min, voxel_size, {dims, dims, dims});
        extract::save_voxel_map(result.map, out);
        std::size_t occupied = 0;
        for (const double w : result.map.weight)
            if (w > 0.0) ++occupied;
        report["occupied_voxels"] = occupied;
        report["dropped_points"] = result.dropped_points;
    } else if (method == "field") {
        const int dims = cfg.field_grid.dims;
        const double voxel_size = bounds.extent().maxCoeff() / dims;
        field::VoxelFeatureGrid grid = field::VoxelFeatureGrid::create(
            bounds.min, voxel_size, {dims, dims, dims}, loaded.meta.d_v);

        field::RaySampleConfig ray_cfg = cfg.ray_sampling;
        if (ray_cfg.t_far <= ray_cfg.t_near) {
            // Reach the far corner of the bounds from every camera.
            double t_far = 0.0;
            for (const auto& view : loaded.views) {
                for (int corner = 0; corner < 8; ++corner) {
                    const geom::Vec3 c(corner & 1 ? bounds.max.x() : bounds.min.x(),
                                       corner & 2 ? bounds.max.y() : bounds.min.y(),
                                       corner & 4 ? bounds.max.z() : bounds.min.z());
                    t_far = std::max(t_far, (c - view.pose.translation).norm());
                }
            }
            ray_cfg.t_far = 1.05 * t_far;
        }

        const field::FitResult result = field::fit(grid, loaded.views, cfg.train, ray_cfg, cfg.loss);
        field::save_grid(grid, out);
        field::write_loss_trace_csv(result.loss_trace, out + ".loss.csv");
        report["steps"] = result.loss_trace.size();
        if (!result.loss_trace.empty()) {
            report["initial_loss"] = result.loss_trace.front();
            report["final_loss"] = result.loss_trace.back();
        }
    } else {
        throw UsageError("extract: unknown method '" + method + "' (direct | fuse | field)");
    }
    std::cout << report.dump() << "\n";
    return 0;
}

// ---- tokenize / embed -------------------------------------------------------

geom::Aabb load_box_json(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError(std::string("box json: ") + e.what());
    }
    if (!j.contains("min") || !j.contains("max"))
        throw ValidationError("box json must contain 'min' and 'max' arrays");
    geom::Aabb box;
    for (int a = 0; a < 3; ++a) {
        box.min[a] = j["min"].at(a).get<double>();
        box.max[a] = j["max"].at(a).get<double>();
    }
    box.validate();
    return box;
}

int cmd_tokenize(const std::string& box_path, const std::string& decode_text,
                 const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    if (!decode_text.empty()) {
        const loc::LocTokenSequence seq = loc::parse_location_text(decode_text, cfg.loc_tokens);
        const geom::Aabb box = loc::decode_location(seq, cfg.loc_tokens);
        json out;
        out["min"] = vec3_json(box.min);
        out["max"] = vec3_json(box.max);
        std::cout << out.dump() << "\n";
        return 0;
    }
    if (box_path.empty()) throw UsageError("tokenize: provide --box or --decode");
    const geom::Aabb box = load_box_json(box_path);
    const loc::LocTokenSequence seq = loc::encode_location(box, cfg.loc_tokens);
    std::cout << loc::render_location_text(seq, cfg.loc_tokens) << "\n";
    return 0;
}

int cmd_embed(const std::string& positions_path, const std::string& features_path,
              const std::string& out_path, const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    const io::Tensor positions = io::read_tensor(positions_path);
    const io::Tensor features = io::read_tensor(features_path);
    if (positions.dims.size() != 2 || positions.dims[1] != 3)
        throw ValidationError("embed: positions tensor must be N x 3");
    if (features.dims.size() != 2 || features.dims[0] != positions.dims[0])
        throw ValidationError("embed: features tensor must be N x D_v with matching N");

    loc::PosEmbedConfig pos_cfg = cfg.pos_embed;
    pos_cfg.d_v = static_cast<int>(features.dims[1]);
    const loc::AugmentedFeatures augmented =
        loc::augment_features(features.to_doubles(), positions.to_doubles(), pos_cfg);
    io::write_tensor(out_path,
                     io::Tensor::from_doubles(
                         {positions.dims[0], static_cast<std::uint64_t>(augmented.d_out)},
                         augmented.data));
    json report;
    report["out"] = out_path;
    report["d_out"] = augmented.d_out;
    std::cout << report.dump() << "\n";
    return 0;
}

// ---- datagen / split --------------------------------------------------------

int cmd_datagen(const std::string& scenes_dir, const std::string& task_name,
                const std::string& pipeline, const std::string& out_path, std::uint64_t seed,
                const std::string& instruction_file, const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    const datagen::Task task = datagen::task_from_name(task_name);

    std::vector<std::string> scene_files;
    if (!fs::is_directory(scenes_dir)) throw IoError("not a directory: " + scenes_dir);
    for (const auto& entry : fs::directory_iterator(scenes_dir))
        if (entry.path().extension() == ".json") scene_files.push_back(entry.path().string());
    std::sort(scene_files.begin(), scene_files.end());
    if (scene_files.empty()) throw ValidationError("datagen: no scene .json files in " + scenes_dir);

    const std::unique_ptr<datagen::LlmClient> client = datagen::make_client_from_env(seed);
    const std::string instruction = instruction_file.empty()
                                        ? datagen::default_instruction(task)
                                        : read_text_file(instruction_file);

    datagen::PipelineReport report;
    std::vector<datagen::LanguageRecord> records;
    for (const std::string& path : scene_files) {
        const synth::Scene scene = synth::load_scene(path);
        const std::string scene_id = fs::path(path).stem().string();
        ++report.scenes;

        if (pipeline == "box") {
            std::vector<std::pair<synth::Scene, std::string>> demos;
            for (int d = 0; d < cfg.datagen.demos; ++d) {
                const synth::Scene demo_scene =
                    synth::make_scene(1000 + d, 3, scene.bounds);
                const datagen::PromptRequest demo_req =
                    datagen::build_box_prompt(demo_scene, instruction, {});
                demos.emplace_back(demo_scene, client->complete(demo_req));
                ++report.requests;
            }
            const auto validator = datagen::make_label_validator(scene.label_set());
            auto batch = datagen::run_box_pipeline(scene, scene_id, instruction, demos, task,
                                                   *client, validator, &report);
            records.insert(records.end(), batch.begin(), batch.end());
        } else if (pipeline == "chat") {
            const auto labels = scene.label_set();
            const synth::LabelEmbedding embed =
                synth::LabelEmbedding::generate(labels, cfg.render.d_v, cfg.render.embed_seed);
            synth::OrbitOptions orbit;
            orbit.width = 64;
            orbit.height = 64;
            const double radius =
                cfg.render.radius > 0.0 ? cfg.render.radius : auto_orbit_radius(scene.bounds);
            std::vector<synth::CameraView> views;
            for (const auto& [intr, pose] :
                 synth::orbit_cameras(scene, cfg.datagen.chat_views, radius, orbit))
                views.push_back(synth::render(scene, intr, pose, embed));
            datagen::LabelReadingVqaMock answerer(labels);
            records.push_back(datagen::run_chat_captioner(scene_id, views, *client, answerer,
                                                          cfg.datagen.max_rounds, &report));
        } else {
            throw UsageError("datagen: unknown pipeline '" + pipeline + "' (box | chat)");
        }
    }

    if (auto* http = dynamic_cast<datagen::HttpLlmClient*>(client.get()))
        report.retries = http->retries();

    datagen::write_jsonl(records, out_path);
    std::ofstream report_out(out_path + ".report.json", std::ios::binary);
    if (!report_out) throw IoError("cannot open for writing: " + out_path + ".report.json");
    report_out << report.to_json() << "\n";
    std::cout << report.to_json() << "\n";
    return 0;
}

int cmd_split(const std::string& in_path, std::uint64_t seed, std::string out_prefix) {
    const std::vector<datagen::LanguageRecord> records = datagen::read_jsonl(in_path);
    const datagen::DatasetSplit split = datagen::split_dataset(records, seed);
    if (out_prefix.empty()) {
        out_prefix = in_path;
        const std::string suffix = ".jsonl";
        if (out_prefix.size() > suffix.size() &&
            out_prefix.substr(out_prefix.size() - suffix.size()) == suffix)
            out_prefix.resize(out_prefix.size() - suffix.size());
    }
    datagen::write_jsonl(split.train, out_prefix + ".train.jsonl");
    datagen::write_jsonl(split.val, out_prefix + ".val.jsonl");
    datagen::write_jsonl(split.test, out_prefix + ".test.jsonl");
    json report;
    report["train"] = split.train.size();
    report["val"] = split.val.size();
    report["test"] = split.test.size();
    std::cout << report.dump() << "\n";
    return 0;
}

// ---- eval --------------------------------------------------------------------

int cmd_eval(const std::string& pred_path, const std::string& task, bool cider_x10, double k) {
    std::ifstream in(pred_path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + pred_path);

    if (task == "text") {
        std::vector<metrics::EvalItem> items;
        std::string line;
        std::size_t line_number = 0;
        while (std::getline(in, line)) {
            ++line_number;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const json j = json::parse(line);
                metrics::EvalItem item;
                item.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                                 : j.at("id").dump();
                item.candidate = j.at("candidate").get<std::string>();
                for (const auto& ref : j.at("references"))
                    item.references.push_back(ref.get<std::string>());
                items.push_back(std::move(item));
            } catch (const json::exception& e) {
                throw ValidationError("eval input line " + std::to_string(line_number) + ": " +
                                      e.what());
            }
        }
        metrics::CiderOptions opts;
        opts.times_ten = cider_x10;
        const metrics::MetricReport report = metrics::evaluate_corpus(items, opts);
        json out;
        out["items"] = items.size();
        out["bleu1"] = report.bleu1;
        out["bleu2"] = report.bleu2;
        out["bleu3"] = report.bleu3;
        out["bleu4"] = report.bleu4;
        out["rouge_l"] = report.rouge_l;
        out["cider"] = report.cider;
        out["em"] = report.em;
        out["per_item"] = json::array();
        for (const auto& s : report.per_item) {
            out["per_item"].push_back({{"id", s.id},
                                       {"bleu1", s.bleu1},
                                       {"bleu2", s.bleu2},
                                       {"bleu3", s.bleu3},
                                       {"bleu4", s.bleu4},
                                       {"rouge_l", s.rouge_l},
                                       {"cider", s.cider},
                                       {"em", s.em}});
        }
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    if (task == "grounding") {
        std::vector<geom::Aabb> pred, gt;
        std::string line;
        std::size_t line_number = 0;
        while (std::getline(in, line)) {
            ++line_number;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const json j = json::parse(line);
                const auto parse_box = [&](const json& arr) {
                    if (!arr.is_array() || arr.size() != 6)
                        throw ValidationError("box must have 6 numbers");
                    geom::Aabb box;
                    box.min = geom::Vec3(arr[0], arr[1], arr[2]);
                    box.max = geom::Vec3(arr[3], arr[4], arr[5]);
                    return box;
                };
                pred.push_back(parse_box(j.at("pred")));
                gt.push_back(parse_box(j.at("gt")));
            } catch (const json::exception& e) {
                throw ValidationError("eval input line " + std::to_string(line_number) + ": " +
                                      e.what());
            } catch (const ValidationError& e) {
                throw ValidationError("eval input line " + std::to_string(line_number) + ": " +
                                      e.what());
            }
        }
        const metrics::GroundingMetrics gm = metrics::grounding_metrics(pred, gt, k);
        json out;
        out["items"] = pred.size();
        out["k"] = k;
        out["acc_at_k"] = gm.acc_at_k;
        out["avg_iou"] = gm.avg_iou;
        out["avg_dist"] = gm.avg_dist;
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    throw UsageError("eval: unknown task '" + task + "' (text | grounding)");
}

// ---- nav ----------------------------------------------------------------------

int cmd_nav(const std::string& env_path, const std::string& policy_name, std::uint64_t,
            const std::string& config_path) {
    const RunConfig cfg = config_or_default(config_path);
    const nav::NavEnv env = nav::load_env(env_path);

    nav::EpisodeConfig episode_cfg;
    episode_cfg.max_steps = cfg.nav.max_steps;
    episode_cfg.success_radius = cfg.nav.success_radius;
    episode_cfg.observe_radius = cfg.nav.observe_radius;

    nav::EpisodeResult result;
    if (policy_name == "oracle") {
        nav::OracleWaypointPolicy policy(env.target_cell);
        result = nav::run_episode(env, policy, episode_cfg);
    } else if (policy_name == "frontier") {
        nav::FrontierWaypointPolicy policy(env.target_label);
        result = nav::run_episode(env, policy, episode_cfg);
    } else {
        throw UsageError("nav: unknown policy '" + policy_name + "' (oracle | frontier)");
    }
    std::cout << nav::episode_to_json(result);
    return 0;
}

// ---- dump -----------------------------------------------------------------------

int cmd_dump(const std::string& tensor_path, std::size_t max_values) {
    const io::Tensor tensor = io::read_tensor(tensor_path);
    std::cout << io::describe_tensor(tensor, max_values) << "\n";
    return 0;
}

void emit_error(const char* type, const std::string& message) {
    json err;
    err["type"] = type;
    err["message"] = message;
    std::cerr << err.dump() << "\n";
}

}  // namespace
}  // namespace f3d::cli

int main(int argc, char** argv) {
    using namespace f3d;
    using namespace f3d::cli;

    CLI::App app{"Synthetic 3D scene features, localization tokens, language data pipelines, "
                 "caption metrics and grid-world navigation"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config_path;

    // scene
    auto* scene = app.add_subcommand("scene", "Generate a procedural scene");
    int scene_objects = 5;
    std::string scene_out;
    std::vector<double> bounds_min = {0.0, 0.0, 0.0};
    std::vector<double> bounds_max = {10.0, 10.0, 10.0};
    scene->add_option("--seed", seed, "RNG seed")->capture_default_str();
    scene->add_option("--objects", scene_objects, "Object count")->capture_default_str();
    scene->add_option("--out", scene_out, "Output scene JSON path")->required();
    scene->add_option("--bounds-min", bounds_min, "Room min corner")->expected(3);
    scene->add_option("--bounds-max", bounds_max, "Room max corner")->expected(3);

    // render
    auto* render = app.add_subcommand("render", "Render orbit views of a scene");
    std::string render_scene, render_out_dir;
    int render_views = 8;
    render->add_option("--scene", render_scene, "Scene JSON path")->required();
    render->add_option("--views", render_views, "Number of orbit views")->capture_default_str();
    render->add_option("--out-dir", render_out_dir, "Output directory")->required();
    render->add_option("--config", config_path, "Run config JSON");

    // extract
    auto* extract = app.add_subcommand("extract", "Build 3D features from rendered views");
    std::string extract_method, extract_views_dir, extract_out;
    extract->add_option("--method", extract_method, "direct | fuse | field")->required();
    extract->add_option("--views-dir", extract_views_dir, "Rendered views directory")->required();
    extract->add_option("--out", extract_out, "Output path prefix")->required();
    extract->add_option("--config", config_path, "Run config JSON");

    // tokenize
    auto* tokenize = app.add_subcommand("tokenize", "Encode an AABB as location tokens");
    std::string tokenize_box, tokenize_decode;
    tokenize->add_option("--box", tokenize_box, "AABB JSON file ({min, max})");
    tokenize->add_option("--decode", tokenize_decode, "Location token text to decode");
    tokenize->add_option("--config", config_path, "Run config JSON");

    // embed
    auto* embed = app.add_subcommand("embed", "Augment point features with position embeddings");
    std::string embed_positions, embed_features, embed_out;
    embed->add_option("--positions", embed_positions, "N x 3 positions tensor")->required();
    embed->add_option("--features", embed_features, "N x D_v features tensor")->required();
    embed->add_option("--out", embed_out, "Output tensor path")->required();
    embed->add_option("--config", config_path, "Run config JSON");

    // datagen
    auto* datagen_cmd = app.add_subcommand("datagen", "Generate 3D-language records");
    std::string dg_scenes_dir, dg_task, dg_pipeline = "box", dg_out, dg_instruction;
    datagen_cmd->add_option("--scenes-dir", dg_scenes_dir, "Directory of scene JSON files")
        ->required();
    datagen_cmd->add_option("--task", dg_task, "caption | dense_caption | qa | "
                            "task_decomposition | dialog | grounding | navigation")
        ->required();
    datagen_cmd->add_option("--pipeline", dg_pipeline, "box | chat")->capture_default_str();
    datagen_cmd->add_option("--out", dg_out, "Output JSONL path")->required();
    datagen_cmd->add_option("--seed", seed, "Mock client seed")->capture_default_str();
    datagen_cmd->add_option("--instruction-file", dg_instruction,
                            "Override the instruction template");
    datagen_cmd->add_option("--config", config_path, "Run config JSON");

    // split
    auto* split = app.add_subcommand("split", "Split a JSONL dataset 8:1:1");
    std::string split_in, split_prefix;
    split->add_option("--in", split_in, "Input JSONL path")->required();
    split->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
    split->add_option("--out-prefix", split_prefix, "Output prefix (default: input sans .jsonl)");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions");
    std::string eval_pred, eval_task = "text";
    bool eval_cider_x10 = false;
    double eval_k = 0.25;
    eval->add_option("--pred", eval_pred, "Predictions JSONL")->required();
    eval->add_option("--task", eval_task, "text | grounding")->capture_default_str();
    eval->add_flag("--cider-x10", eval_cider_x10, "Scale CIDEr by 10");
    eval->add_option("--k", eval_k, "IoU threshold for grounding accuracy")
        ->capture_default_str();

    // nav
    auto* nav_cmd = app.add_subcommand("nav", "Run a navigation episode");
    std::string nav_env, nav_policy = "oracle";
    nav_cmd->add_option("--env", nav_env, "Environment JSON")->required();
    nav_cmd->add_option("--policy", nav_policy, "oracle | frontier")->capture_default_str();
    nav_cmd->add_option("--seed", seed, "Episode seed")->capture_default_str();
    nav_cmd->add_option("--config", config_path, "Run config JSON");

    // dump
    auto* dump = app.add_subcommand("dump", "Print a tensor file");
    std::string dump_tensor;
    std::size_t dump_max = 16;
    dump->add_option("--tensor", dump_tensor, "Tensor file path")->required();
    dump->add_option("--max-values", dump_max, "Values to print")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        emit_error("usage", e.what());
        return 1;
    }

    try {
        if (scene->parsed()) return cmd_scene(seed, scene_objects, scene_out, bounds_min, bounds_max);
        if (render->parsed()) return cmd_render(render_scene, render_views, render_out_dir, config_path);
        if (extract->parsed())
            return cmd_extract(extract_method, extract_views_dir, extract_out, config_path);
        if (tokenize->parsed()) return cmd_tokenize(tokenize_box, tokenize_decode, config_path);
        if (embed->parsed()) return cmd_embed(embed_positions, embed_features, embed_out, config_path);
        if (datagen_cmd->parsed())
            return cmd_datagen(dg_scenes_dir, dg_task, dg_pipeline, dg_out, seed, dg_instruction,
                               config_path);
        if (split->parsed()) return cmd_split(split_in, seed, split_prefix);
        if (eval->parsed()) return cmd_eval(eval_pred, eval_task, eval_cider_x10, eval_k);
        if (nav_cmd->parsed()) return cmd_nav(nav_env, nav_policy, seed, config_path);
        if (dump->parsed()) return cmd_dump(dump_tensor, dump_max);
        emit_error("usage", "no subcommand given");
        return 1;
    } catch (const UsageError& e) {
        emit_error("usage", e.what());
        return 1;
    } catch (const ValidationError& e) {
        emit_error("validation", e.what());
        return 2;
    } catch (const IoError& e) {
        emit_error("io", e.what());
        return 3;
    } catch (const RemoteError& e) {
        emit_error("remote", e.what());
        return 4;
    } catch (const std::exception& e) {
        emit_error("validation", e.what());
        return 2;
    }
}
