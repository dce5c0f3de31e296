#include "feat3d/localize.hpp"

#include <algorithm>
#include <cmath>

namespace f3d::loc {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

std::vector<double> frequency_ladder(const PosEmbedConfig& cfg) {
    const int n = cfg.per_axis() / 2;
    const double omega_lo = kTwoPi / cfg.scale_max;
    const double omega_hi = kTwoPi / cfg.scale_min;
    std::vector<double> omega(n);
    if (n == 1) {
        omega[0] = omega_lo;
        return omega;
    }
    const double ratio = std::pow(omega_hi / omega_lo, 1.0 / (n - 1));
    double w = omega_lo;
    for (int k = 0; k < n; ++k, w *= ratio) omega[k] = w;
    omega[n - 1] = omega_hi;  // pin the endpoint against drift
    return omega;
}

int bin_of(double coord, double lo, double hi, int bins) {
    const int raw = static_cast<int>(std::floor((coord - lo) / (hi - lo) * bins));
    return std::clamp(raw, 0, bins - 1);
}

}  // namespace

void PosEmbedConfig::validate() const {
    if (per_axis() < 2)
        throw ValidationError("position embedding: d_v too small, per-axis block needs >= 2");
    if (!(scale_min > 0.0) || !(scale_min < scale_max))
        throw ValidationError("position embedding: need 0 < scale_min < scale_max");
}

std::vector<double> position_embedding(const Vec3& point, const PosEmbedConfig& cfg) {
    cfg.validate();
    const std::vector<double> omega = frequency_ladder(cfg);
    std::vector<double> out(cfg.d_v, 0.0);
    const int block = cfg.per_axis();
    for (int axis = 0; axis < 3; ++axis) {
        double* dst = out.data() + axis * block;
        for (std::size_t k = 0; k < omega.size(); ++k) {
            const double phase = omega[k] * point[axis];
            dst[2 * k] = std::sin(phase);
            dst[2 * k + 1] = std::cos(phase);
        }
    }
    return out;
}

AugmentedFeatures augment_features(const std::vector<double>& features,
                                   const std::vector<double>& positions,
                                   const PosEmbedConfig& cfg) {
    cfg.validate();
    if (positions.size() % 3 != 0)
        throw ValidationError("augment_features: positions are not N x 3");
    const std::size_t n = positions.size() / 3;
    if (features.size() != n * static_cast<std::size_t>(cfg.d_v))
        throw ValidationError("augment_features: feature rows do not match positions");

    AugmentedFeatures out;
    out.d_out = cfg.combine == Combine::kAdd ? cfg.d_v : 2 * cfg.d_v;
    out.data.resize(n * static_cast<std::size_t>(out.d_out));
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 p(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
        const std::vector<double> emb = position_embedding(p, cfg);
        const double* src = features.data() + i * cfg.d_v;
        double* dst = out.data.data() + i * out.d_out;
        if (cfg.combine == Combine::kAdd) {
            for (int k = 0; k < cfg.d_v; ++k) dst[k] = src[k] + emb[k];
        } else {
            std::copy(src, src + cfg.d_v, dst);
            std::copy(emb.begin(), emb.end(), dst + cfg.d_v);
        }
    }
    return out;
}

void LocTokenConfig::validate() const {
    if (bins < 2) throw ValidationError("location tokens: bins must be at least 2");
    if (base_vocab < 0) throw ValidationError("location tokens: base_vocab must be non-negative");
    scene_bounds.validate();
    if ((scene_bounds.extent().array() <= 0.0).any())
        throw ValidationError("location tokens: scene_bounds are degenerate");
}

LocTokenSequence encode_location(const Aabb& box, const LocTokenConfig& cfg) {
    cfg.validate();
    box.validate();
    if (!box.intersects(cfg.scene_bounds))
        throw ValidationError("encode_location: box lies outside the scene bounds");
    LocTokenSequence seq;
    for (int axis = 0; axis < 3; ++axis) {
        const double lo = cfg.scene_bounds.min[axis];
        const double hi = cfg.scene_bounds.max[axis];
        seq.ids[axis] = cfg.base_vocab + bin_of(box.min[axis], lo, hi, cfg.bins);
        seq.ids[axis + 3] = cfg.base_vocab + bin_of(box.max[axis], lo, hi, cfg.bins);
    }
    return seq;
}

Aabb decode_location(const LocTokenSequence& tokens, const LocTokenConfig& cfg) {
    cfg.validate();
    Aabb box;
    for (int i = 0; i < 6; ++i) {
        const int id = tokens.ids[i];
        if (id < cfg.base_vocab || id >= cfg.base_vocab + cfg.bins)
            throw ValidationError("decode_location: token id " + std::to_string(id) +
                                  " outside the location range");
    }
    for (int axis = 0; axis < 3; ++axis) {
        const double lo = cfg.scene_bounds.min[axis];
        const double hi = cfg.scene_bounds.max[axis];
        const double width = (hi - lo) / cfg.bins;
        double a = lo + (tokens.ids[axis] - cfg.base_vocab + 0.5) * width;
        double b = lo + (tokens.ids[axis + 3] - cfg.base_vocab + 0.5) * width;
        if (a > b) std::swap(a, b);
        box.min[axis] = a;
        box.max[axis] = b;
    }
    return box;
}

std::string render_location_text(const LocTokenSequence& tokens, const LocTokenConfig& cfg) {
    std::string out;
    for (const int id : tokens.ids) {
        const int bin = id - cfg.base_vocab;
        if (bin < 0 || bin >= cfg.bins)
            throw ValidationError("render_location_text: token id " + std::to_string(id) +
                                  " outside the location range");
        out += "<loc_" + std::to_string(bin) + ">";
    }
    return out;
}

LocTokenSequence parse_location_text(const std::string& text, const LocTokenConfig& cfg) {
    cfg.validate();
    LocTokenSequence seq;
    std::size_t pos = 0;
    const auto fail = [&](const std::string& what) {
        throw ValidationError("parse_location_text: " + what + " at byte " + std::to_string(pos));
    };
    for (int i = 0; i < 6; ++i) {
        const std::string prefix = "<loc_";
        if (text.compare(pos, prefix.size(), prefix) != 0) fail("expected '<loc_'");
        pos += prefix.size();
        const std::size_t digits_start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == digits_start) fail("expected a decimal bin index");
        if (pos - digits_start > 9) fail("bin index too long");
        const int bin = std::stoi(text.substr(digits_start, pos - digits_start));
        if (bin >= cfg.bins) fail("bin index " + std::to_string(bin) + " out of range");
        if (pos >= text.size() || text[pos] != '>') fail("expected '>'");
        ++pos;
        seq.ids[i] = cfg.base_vocab + bin;
    }
    if (pos != text.size()) fail("trailing characters");
    return seq;
}

VocabAugmentation make_vocab_augmentation(const LocTokenConfig& cfg) {
    cfg.validate();
    VocabAugmentation out;
    out.total_vocab = cfg.base_vocab + cfg.bins;
    out.trainable_mask.assign(out.total_vocab, false);
    for (int i = cfg.base_vocab; i < out.total_vocab; ++i) out.trainable_mask[i] = true;
    return out;
}

}  // namespace f3d::loc
