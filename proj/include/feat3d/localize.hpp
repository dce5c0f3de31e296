#pragma once

#include <array>
#include <string>
#include <vector>

#include "feat3d/geometry.hpp"

namespace f3d::loc {

using geom::Aabb;
using geom::Vec3;

enum class Combine { kAdd, kConcat };

// Sinusoidal position embedding over the three axes. Each axis owns a block
// of per_axis() components (sin/cos pairs over a geometric frequency ladder
// spanning wavelengths [scale_min, scale_max]); the remainder up to d_v is
// zero padding.
struct PosEmbedConfig {
    int d_v = 0;
    double scale_min = 0.1;
    double scale_max = 100.0;
    Combine combine = Combine::kAdd;

    // Largest even block size fitting three axes into d_v.
    int per_axis() const { return (d_v / 3) & ~1; }
    int padding() const { return d_v - 3 * per_axis(); }
    void validate() const;
};

std::vector<double> position_embedding(const Vec3& point, const PosEmbedConfig& cfg);

struct AugmentedFeatures {
    int d_out = 0;
    std::vector<double> data;  // N x d_out
};

// combine == kAdd keeps the feature width; kConcat doubles it with the
// embedding block appended after the original features.
AugmentedFeatures augment_features(const std::vector<double>& features,
                                   const std::vector<double>& positions,
                                   const PosEmbedConfig& cfg);

struct LocTokenConfig {
    Aabb scene_bounds;
    int bins = 256;
    int base_vocab = 32000;  // location ids start after the backbone vocabulary

    void validate() const;
};

// Six ids in append order <x_min, y_min, z_min, x_max, y_max, z_max>,
// each in [base_vocab, base_vocab + bins).
struct LocTokenSequence {
    std::array<int, 6> ids = {0, 0, 0, 0, 0, 0};
};

struct VocabAugmentation {
    int total_vocab = 0;
    std::vector<bool> trainable_mask;  // true exactly for the appended tokens
};

LocTokenSequence encode_location(const Aabb& box, const LocTokenConfig& cfg);
Aabb decode_location(const LocTokenSequence& tokens, const LocTokenConfig& cfg);

// Text grammar: exactly six "<loc_NNN>" tokens, NNN a decimal bin index,
// no separators.
std::string render_location_text(const LocTokenSequence& tokens, const LocTokenConfig& cfg);
LocTokenSequence parse_location_text(const std::string& text, const LocTokenConfig& cfg);

VocabAugmentation make_vocab_augmentation(const LocTokenConfig& cfg);

}  // namespace f3d::loc
