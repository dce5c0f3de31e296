#include <doctest.h>

#include <cmath>

#include "feat3d/localize.hpp"
#include "feat3d/rng.hpp"

using namespace f3d;
using geom::Aabb;
using geom::Vec3;
using loc::Combine;
using loc::LocTokenConfig;
using loc::LocTokenSequence;
using loc::PosEmbedConfig;

namespace {

const Aabb kBounds{Vec3(0, 0, 0), Vec3(10, 10, 10)};

LocTokenConfig token_config(int bins = 256, int base_vocab = 32000) {
    LocTokenConfig cfg;
    cfg.scene_bounds = kBounds;
    cfg.bins = bins;
    cfg.base_vocab = base_vocab;
    return cfg;
}

Aabb random_box_in_bounds(Rng& rng) {
    Aabb box;
    for (int a = 0; a < 3; ++a) {
        const double lo = uniform_double(rng, 0.0, 10.0);
        const double hi = uniform_double(rng, 0.0, 10.0);
        box.min[a] = std::min(lo, hi);
        box.max[a] = std::max(lo, hi);
    }
    return box;
}

}  // namespace

TEST_CASE("position embedding zero-point pattern and padding") {
    PosEmbedConfig cfg;
    cfg.d_v = 16;  // per_axis = 4, pad = 4
    CHECK(cfg.per_axis() == 4);
    CHECK(cfg.padding() == 4);

    const std::vector<double> emb = loc::position_embedding(Vec3(0, 0, 0), cfg);
    REQUIRE(emb.size() == 16);
    for (int axis = 0; axis < 3; ++axis) {
        for (int k = 0; k < 2; ++k) {
            CHECK(emb[axis * 4 + 2 * k] == 0.0);      // sin
            CHECK(emb[axis * 4 + 2 * k + 1] == 1.0);  // cos
        }
    }
    for (int i = 12; i < 16; ++i) CHECK(emb[i] == 0.0);
}

TEST_CASE("position embedding block structure and range") {
    PosEmbedConfig cfg;
    cfg.d_v = 24;  // per_axis = 8, no padding
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 p(uniform_double(rng, -50, 50), uniform_double(rng, -50, 50),
                     uniform_double(rng, -50, 50));
        const std::vector<double> base = loc::position_embedding(p, cfg);
        for (const double v : base) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        CHECK(base == loc::position_embedding(p, cfg));

        // Perturbing x touches only the first block.
        Vec3 q = p;
        q.x() += uniform_double(rng, 0.5, 2.0);
        const std::vector<double> moved = loc::position_embedding(q, cfg);
        for (int i = 8; i < 24; ++i) CHECK(moved[i] == base[i]);
        bool first_block_changed = false;
        for (int i = 0; i < 8; ++i)
            if (moved[i] != base[i]) first_block_changed = true;
        CHECK(first_block_changed);
    }
}

TEST_CASE("the 1408-dim layout pads four components") {
    PosEmbedConfig cfg;
    cfg.d_v = 1408;
    CHECK(cfg.per_axis() == 468);
    CHECK(cfg.padding() == 4);
    const std::vector<double> emb = loc::position_embedding(Vec3(1.5, -2.0, 3.0), cfg);
    REQUIRE(emb.size() == 1408);
    for (int i = 1404; i < 1408; ++i) CHECK(emb[i] == 0.0);
    CHECK(std::abs(emb[0]) + std::abs(emb[1]) > 0.0);
}

TEST_CASE("embedding separates points at quarter-wavelength resolution") {
    PosEmbedConfig cfg;
    cfg.d_v = 24;
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 p(uniform_double(rng, 0, 10), uniform_double(rng, 0, 10),
                     uniform_double(rng, 0, 10));
        Vec3 q = p;
        const int axis = static_cast<int>(uniform_index(rng, 3));
        q[axis] += cfg.scale_min / 4.0 + uniform_double(rng, 0.0, 1.0);
        const std::vector<double> ep = loc::position_embedding(p, cfg);
        const std::vector<double> eq = loc::position_embedding(q, cfg);
        double linf = 0.0;
        for (std::size_t i = 0; i < ep.size(); ++i)
            linf = std::max(linf, std::abs(ep[i] - eq[i]));
        CHECK(linf > 1e-6);
    }
}

TEST_CASE("augment_features add and concat modes") {
    PosEmbedConfig cfg;
    cfg.d_v = 12;
    const std::vector<double> positions = {1.0, 2.0, 3.0, -1.0, 0.5, 2.5};
    std::vector<double> features(24);
    Rng rng(7);
    for (auto& f : features) f = normal_double(rng);

    SUBCASE("add preserves width and subtracts back exactly") {
        cfg.combine = Combine::kAdd;
        const auto out = loc::augment_features(features, positions, cfg);
        CHECK(out.d_out == 12);
        REQUIRE(out.data.size() == 24);
        for (int i = 0; i < 2; ++i) {
            const Vec3 p(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]);
            const std::vector<double> emb = loc::position_embedding(p, cfg);
            for (int k = 0; k < 12; ++k)
                CHECK(std::abs(out.data[i * 12 + k] - emb[k] - features[i * 12 + k]) < 1e-12);
        }

        // Zero features reduce to the raw embeddings.
        const std::vector<double> zeros(24, 0.0);
        const auto only_emb = loc::augment_features(zeros, positions, cfg);
        const std::vector<double> emb0 = loc::position_embedding(Vec3(1, 2, 3), cfg);
        for (int k = 0; k < 12; ++k) CHECK(only_emb.data[k] == emb0[k]);
    }

    SUBCASE("concat keeps the original features in front") {
        cfg.combine = Combine::kConcat;
        const auto out = loc::augment_features(features, positions, cfg);
        CHECK(out.d_out == 24);
        REQUIRE(out.data.size() == 48);
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 12; ++k) CHECK(out.data[i * 24 + k] == features[i * 12 + k]);
    }

    SUBCASE("row mismatch is rejected") {
        CHECK_THROWS_AS(loc::augment_features(features, {1.0, 2.0, 3.0}, cfg), ValidationError);
    }
}

TEST_CASE("location encoding hits the documented bins") {
    const LocTokenConfig cfg = token_config();

    const LocTokenSequence whole = loc::encode_location(kBounds, cfg);
    CHECK(whole.ids[0] == cfg.base_vocab + 0);
    CHECK(whole.ids[1] == cfg.base_vocab + 0);
    CHECK(whole.ids[2] == cfg.base_vocab + 0);
    CHECK(whole.ids[3] == cfg.base_vocab + 255);
    CHECK(whole.ids[4] == cfg.base_vocab + 255);
    CHECK(whole.ids[5] == cfg.base_vocab + 255);

    const Aabb degenerate{Vec3(0, 0, 0), Vec3(0, 0, 0)};
    const LocTokenSequence zero = loc::encode_location(degenerate, cfg);
    for (const int id : zero.ids) CHECK(id == cfg.base_vocab);

    const Aabb quarter{Vec3(2.5, 2.5, 2.5), Vec3(5.0, 5.0, 5.0)};
    const LocTokenSequence q = loc::encode_location(quarter, cfg);
    CHECK(q.ids[0] == cfg.base_vocab + 64);  // floor(2.5 / 10 * 256)

    const Aabb outside{Vec3(20, 20, 20), Vec3(21, 21, 21)};
    CHECK_THROWS_AS(loc::encode_location(outside, cfg), ValidationError);
}

TEST_CASE("encoding is monotone per coordinate") {
    const LocTokenConfig cfg = token_config(64);
    int prev = -1;
    for (int i = 0; i <= 100; ++i) {
        const double x = 10.0 * i / 100.0;
        const Aabb box{Vec3(x, 0, 0), Vec3(10, 10, 10)};
        const int bin = loc::encode_location(box, cfg).ids[0] - cfg.base_vocab;
        CHECK(bin >= prev);
        prev = bin;
    }
}

TEST_CASE("decode inverts encode within half a bin width") {
    const LocTokenConfig cfg = token_config(256);
    const double half_bin = 10.0 / 256 / 2.0;
    Rng rng(11);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Aabb box = random_box_in_bounds(rng);
        const Aabb round = loc::decode_location(loc::encode_location(box, cfg), cfg);
        for (int a = 0; a < 3; ++a) {
            worst = std::max(worst, std::abs(round.min[a] - box.min[a]));
            worst = std::max(worst, std::abs(round.max[a] - box.max[a]));
        }
        CHECK(round.min.x() <= round.max.x());
    }
    CHECK(worst <= half_bin + 1e-12);

    LocTokenSequence bad;
    bad.ids = {0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(loc::decode_location(bad, cfg), ValidationError);
}

TEST_CASE("token text grammar round-trips") {
    const LocTokenConfig cfg = token_config(16, 100);
    LocTokenSequence seq;
    seq.ids = {100, 100, 100, 101, 101, 101};
    CHECK(loc::render_location_text(seq, cfg) ==
          "<loc_0><loc_0><loc_0><loc_1><loc_1><loc_1>");

    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        LocTokenSequence s;
        for (int i = 0; i < 6; ++i)
            s.ids[i] = cfg.base_vocab + static_cast<int>(uniform_index(rng, 16));
        const std::string text = loc::render_location_text(s, cfg);
        const LocTokenSequence back = loc::parse_location_text(text, cfg);
        CHECK(back.ids == s.ids);
        CHECK(loc::render_location_text(back, cfg) == text);
    }

    CHECK_THROWS_AS(loc::parse_location_text("<loc_-1>" , cfg), ValidationError);
    CHECK_THROWS_AS(loc::parse_location_text("<loc_0>", cfg), ValidationError);  // too few
    CHECK_THROWS_AS(loc::parse_location_text(
                        "<loc_0><loc_0><loc_0><loc_0><loc_0><loc_99>", cfg),
                    ValidationError);  // bin out of range
    CHECK_THROWS_AS(loc::parse_location_text(
                        "<loc_0> <loc_0><loc_0><loc_0><loc_0><loc_0>", cfg),
                    ValidationError);  // whitespace between tokens
    CHECK_THROWS_AS(loc::parse_location_text(
                        "<loc_0><loc_0><loc_0><loc_0><loc_0><loc_0>x", cfg),
                    ValidationError);  // trailing bytes

    // Errors carry the byte offset.
    try {
        loc::parse_location_text("<loc_0><loc_0><bad>", cfg);
        CHECK(false);
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("byte 14") != std::string::npos);
    }
}

TEST_CASE("vocabulary augmentation marks exactly the appended tokens") {
    const LocTokenConfig cfg = token_config(256, 32000);
    const loc::VocabAugmentation vocab = loc::make_vocab_augmentation(cfg);
    CHECK(vocab.total_vocab == 32256);
    REQUIRE(vocab.trainable_mask.size() == 32256);
    std::size_t trainable = 0;
    for (int i = 0; i < vocab.total_vocab; ++i) {
        if (vocab.trainable_mask[i]) {
            ++trainable;
            CHECK(i >= 32000);
        }
    }
    CHECK(trainable == 256);
}
