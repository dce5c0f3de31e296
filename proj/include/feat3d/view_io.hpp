#pragma once

#include <string>
#include <vector>

#include "feat3d/synthworld.hpp"

namespace f3d::io {

// Companion metadata for a directory of rendered views: camera parameters
// per view plus what the extractors need downstream (scene bounds, the
// label set and the seed to regenerate embeddings).
struct ViewSetMeta {
    int width = 0;
    int height = 0;
    int d_v = 0;
    std::uint64_t embed_seed = 0;
    geom::Aabb scene_bounds;
    std::vector<std::string> labels;
};

// Writes view_NNN.{rgb,depth,features,semantics}.f3dt plus cameras.json.
void save_views(const std::vector<synth::CameraView>& views, const ViewSetMeta& meta,
                const std::string& dir);

struct LoadedViews {
    std::vector<synth::CameraView> views;
    ViewSetMeta meta;
};

LoadedViews load_views(const std::string& dir);

}  // namespace f3d::io
