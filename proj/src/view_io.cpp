#include "feat3d/view_io.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "feat3d/tensorfile.hpp"

namespace f3d::io {

using json = nlohmann::ordered_json;
using synth::CameraView;

namespace {

std::string view_prefix(const std::string& dir, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%03zu", index);
    return dir + "/" + buf;
}

json vec3_json(const geom::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

geom::Vec3 vec3_from(const json& j) {
    return geom::Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

void save_views(const std::vector<CameraView>& views, const ViewSetMeta& meta,
                const std::string& dir) {
    json cameras;
    cameras["width"] = meta.width;
    cameras["height"] = meta.height;
    cameras["d_v"] = meta.d_v;
    cameras["embed_seed"] = meta.embed_seed;
    cameras["bounds"] = {{"min", vec3_json(meta.scene_bounds.min)},
                         {"max", vec3_json(meta.scene_bounds.max)}};
    cameras["labels"] = meta.labels;
    cameras["views"] = json::array();

    for (std::size_t i = 0; i < views.size(); ++i) {
        const CameraView& view = views[i];
        const std::string prefix = view_prefix(dir, i);
        const std::uint64_t h = view.height, w = view.width, d = view.d_v;
        write_tensor(prefix + ".rgb.f3dt", Tensor::from_doubles({h, w, 3}, view.rgb));
        write_tensor(prefix + ".depth.f3dt", Tensor::from_doubles({h, w}, view.depth));
        write_tensor(prefix + ".features.f3dt", Tensor::from_doubles({h, w, d}, view.features));
        std::vector<double> sem(view.semantics.begin(), view.semantics.end());
        write_tensor(prefix + ".semantics.f3dt", Tensor::from_doubles({h, w}, sem));

        json cam;
        cam["intrinsics"] = {{"fx", view.intr.fx},       {"fy", view.intr.fy},
                             {"cx", view.intr.cx},       {"cy", view.intr.cy},
                             {"width", view.intr.width}, {"height", view.intr.height}};
        json rotation = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rotation.push_back(view.pose.rotation(r, c));
        cam["pose"] = {{"rotation", rotation}, {"translation", vec3_json(view.pose.translation)}};
        cameras["views"].push_back(std::move(cam));
    }

    const std::string path = dir + "/cameras.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << cameras.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

LoadedViews load_views(const std::string& dir) {
    const std::string path = dir + "/cameras.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    json cameras;
    try {
        in >> cameras;
    } catch (const json::exception& e) {
        throw IoError("cameras.json: " + std::string(e.what()));
    }

    LoadedViews out;
    try {
        out.meta.width = cameras.at("width").get<int>();
        out.meta.height = cameras.at("height").get<int>();
        out.meta.d_v = cameras.at("d_v").get<int>();
        out.meta.embed_seed = cameras.at("embed_seed").get<std::uint64_t>();
        out.meta.scene_bounds.min = vec3_from(cameras.at("bounds").at("min"));
        out.meta.scene_bounds.max = vec3_from(cameras.at("bounds").at("max"));
        for (const auto& label : cameras.at("labels"))
            out.meta.labels.push_back(label.get<std::string>());

        for (std::size_t i = 0; i < cameras.at("views").size(); ++i) {
            const json& cam = cameras.at("views").at(i);
            CameraView view;
            view.width = out.meta.width;
            view.height = out.meta.height;
            view.d_v = out.meta.d_v;
            const json& intr = cam.at("intrinsics");
            view.intr.fx = intr.at("fx").get<double>();
            view.intr.fy = intr.at("fy").get<double>();
            view.intr.cx = intr.at("cx").get<double>();
            view.intr.cy = intr.at("cy").get<double>();
            view.intr.width = intr.at("width").get<int>();
            view.intr.height = intr.at("height").get<int>();
            const json& rotation = cam.at("pose").at("rotation");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    view.pose.rotation(r, c) = rotation.at(3 * r + c).get<double>();
            view.pose.translation = vec3_from(cam.at("pose").at("translation"));

            const std::string prefix = view_prefix(dir, i);
            view.rgb = read_tensor(prefix + ".rgb.f3dt").to_doubles();
            view.depth = read_tensor(prefix + ".depth.f3dt").to_doubles();
            view.features = read_tensor(prefix + ".features.f3dt").to_doubles();
            const std::vector<double> sem = read_tensor(prefix + ".semantics.f3dt").to_doubles();
            view.semantics.reserve(sem.size());
            for (const double s : sem) view.semantics.push_back(static_cast<int>(s));

            const std::size_t n = view.pixel_count();
            if (view.rgb.size() != n * 3 || view.depth.size() != n ||
                view.features.size() != n * static_cast<std::size_t>(view.d_v) ||
                view.semantics.size() != n)
                throw IoError("view tensors disagree with cameras.json dims: " + prefix);
            out.views.push_back(std::move(view));
        }
    } catch (const json::exception& e) {
        throw IoError("cameras.json: " + std::string(e.what()));
    }
    return out;
}

}  // namespace f3d::io
