#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "feat3d/evalmetrics.hpp"
#include "feat3d/rng.hpp"

using namespace f3d;
using metrics::CiderOptions;
using metrics::EvalItem;

namespace {

using Tokens = std::vector<std::string>;

// Independent CIDEr re-implementation for the toy-corpus comparison,
// written with different data structures (vector n-grams, no shared code).
std::map<Tokens, double> oracle_counts(const Tokens& text, int n) {
    std::map<Tokens, double> counts;
    for (std::size_t i = 0; i + n <= text.size(); ++i)
        counts[Tokens(text.begin() + i, text.begin() + i + n)] += 1.0;
    return counts;
}

std::vector<double> oracle_cider(const std::vector<Tokens>& cands,
                                 const std::vector<std::vector<Tokens>>& refs, double sigma) {
    const std::size_t n_items = cands.size();
    std::vector<double> scores(n_items, 0.0);
    for (int order = 1; order <= 4; ++order) {
        std::map<Tokens, double> df;
        for (const auto& item_refs : refs) {
            std::set<Tokens> seen;
            for (const auto& ref : item_refs)
                for (const auto& [gram, c] : oracle_counts(ref, order)) seen.insert(gram);
            for (const auto& gram : seen) df[gram] += 1.0;
        }
        const auto idf = [&](const Tokens& gram) {
            const auto it = df.find(gram);
            const double freq = it == df.end() ? 0.0 : it->second;
            return std::log(static_cast<double>(n_items)) - std::log(std::max(freq, 1.0));
        };
        for (std::size_t i = 0; i < n_items; ++i) {
            const auto cand_counts = oracle_counts(cands[i], order);
            double ref_avg = 0.0;
            for (const auto& ref : refs[i]) {
                const auto ref_counts = oracle_counts(ref, order);
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (const auto& [gram, c] : cand_counts) {
                    const double w = idf(gram);
                    na += (c * w) * (c * w);
                    const auto it = ref_counts.find(gram);
                    if (it != ref_counts.end()) dot += (c * w) * (it->second * w);
                }
                for (const auto& [gram, c] : ref_counts) {
                    const double w = idf(gram);
                    nb += (c * w) * (c * w);
                }
                double cos = 0.0;
                if (na > 0.0 && nb > 0.0) cos = dot / (std::sqrt(na) * std::sqrt(nb));
                const double delta =
                    static_cast<double>(cands[i].size()) - static_cast<double>(ref.size());
                ref_avg += std::exp(-delta * delta / (2.0 * sigma * sigma)) * cos;
            }
            scores[i] += ref_avg / refs[i].size() / 4.0;
        }
    }
    return scores;
}

}  // namespace

TEST_CASE("tokenizer lowercases, strips punctuation, splits whitespace") {
    CHECK(metrics::tokenize("The chair.") == Tokens{"the", "chair"});
    CHECK(metrics::tokenize("  A  big,   RED! lamp?  ") == Tokens{"a", "big", "red", "lamp"});
    CHECK(metrics::tokenize("don't \"quote\" me; ok:") == Tokens{"dont", "quote", "me", "ok"});
    CHECK(metrics::tokenize("").empty());
    CHECK(metrics::normalize("The   chair. ") == "the chair");
}

TEST_CASE("bleu identity, hand case and disjoint case") {
    const Tokens cand = metrics::tokenize("a red chair beside the wooden table");
    for (int n = 1; n <= 4; ++n)
        CHECK(metrics::bleu(cand, {cand}, n) == doctest::Approx(1.0).epsilon(1e-12));

    // "the cat" vs "the cat sat": unigram precision 1, brevity exp(1 - 3/2).
    const Tokens two = metrics::tokenize("the cat");
    const Tokens three = metrics::tokenize("the cat sat");
    CHECK(metrics::bleu(two, {three}, 1) ==
          doctest::Approx(std::exp(1.0 - 3.0 / 2.0)).epsilon(1e-12));
    CHECK(metrics::bleu(two, {three}, 1) == doctest::Approx(0.6065).epsilon(1e-4));

    const Tokens disjoint = metrics::tokenize("purple elephant dances");
    for (int n = 1; n <= 4; ++n) CHECK(metrics::bleu(disjoint, {cand}, n) == 0.0);

    CHECK(metrics::bleu({}, {cand}, 1) == 0.0);
    CHECK_THROWS_AS(metrics::bleu(cand, {}, 1), ValidationError);
    CHECK_THROWS_AS(metrics::bleu(cand, {cand}, 5), ValidationError);
}

TEST_CASE("bleu clipping and monotonicity in references") {
    // Clipped precision: "the the the" against "the cat" only credits one
    // match out of three.
    const Tokens repeat = {"the", "the", "the"};
    const Tokens ref = {"the", "cat"};
    const double p = 1.0 / 3.0;
    const double bp = 1.0;  // candidate longer than reference
    CHECK(metrics::bleu(repeat, {ref}, 1) == doctest::Approx(bp * p).epsilon(1e-12));

    Rng rng(3);
    const Tokens cand = metrics::tokenize("one two three four five six");
    std::vector<Tokens> refs = {metrics::tokenize("one two seven nine ten eleven")};
    for (int n = 1; n <= 4; ++n) {
        const double before = metrics::bleu(cand, refs, n);
        std::vector<Tokens> more = refs;
        more.push_back(cand);  // a matching reference
        CHECK(metrics::bleu(cand, more, n) >= before - 1e-15);
    }
    (void)rng;
}

TEST_CASE("rouge_l identity, disjoint and hand LCS case") {
    const Tokens cand = metrics::tokenize("a b c d");
    CHECK(metrics::rouge_l(cand, {cand}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::rouge_l(cand, {metrics::tokenize("x y z")}) == 0.0);

    // LCS("a b c d", "a c d") = 3; P = 3/4, R = 1.
    const Tokens ref = metrics::tokenize("a c d");
    const double precision = 3.0 / 4.0, recall = 1.0, beta_sq = 1.44;
    const double expected =
        (1.0 + beta_sq) * precision * recall / (recall + beta_sq * precision);
    CHECK(metrics::rouge_l(cand, {ref}) == doctest::Approx(expected).epsilon(1e-12));

    // Maximum over references.
    CHECK(metrics::rouge_l(cand, {metrics::tokenize("x y"), cand}) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cider corpus behavior") {
    const std::vector<Tokens> cands = {
        metrics::tokenize("a red chair in the corner"),
        metrics::tokenize("two lamps beside the bed"),
        metrics::tokenize("a wooden table holds a vase"),
    };
    const std::vector<std::vector<Tokens>> refs = {
        {cands[0]},
        {cands[1]},
        {cands[2]},
    };
    const metrics::CiderResult identity = metrics::cider(cands, refs);
    for (const double s : identity.per_item) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(identity.mean == doctest::Approx(1.0).epsilon(1e-12));

    // Candidate sharing no n-grams with its references scores zero.
    std::vector<Tokens> mixed = cands;
    mixed[1] = metrics::tokenize("purple elephants dance wildly tonight");
    const metrics::CiderResult with_miss = metrics::cider(mixed, refs);
    CHECK(with_miss.per_item[1] == 0.0);

    CHECK_THROWS_AS(metrics::cider({cands[0]}, {refs[0]}), ValidationError);
}

TEST_CASE("cider matches an independently coded oracle") {
    const std::vector<Tokens> cands = {
        metrics::tokenize("the quick brown fox jumps over the lazy dog"),
        metrics::tokenize("a red chair sits in the corner of the room"),
        metrics::tokenize("two bright lamps light the wooden desk"),
    };
    const std::vector<std::vector<Tokens>> refs = {
        {metrics::tokenize("a quick brown fox leaps over a sleepy dog"),
         metrics::tokenize("the fast brown fox jumps over the dog")},
        {metrics::tokenize("a red chair stands in the corner"),
         metrics::tokenize("the corner of the room holds a red chair")},
        {metrics::tokenize("two lamps illuminate the desk"),
         metrics::tokenize("bright lamps stand on the wooden desk")},
    };
    const metrics::CiderResult mine = metrics::cider(cands, refs);
    const std::vector<double> ref_scores = oracle_cider(cands, refs, 6.0);
    REQUIRE(mine.per_item.size() == ref_scores.size());
    for (std::size_t i = 0; i < ref_scores.size(); ++i)
        CHECK(mine.per_item[i] == doctest::Approx(ref_scores[i]).epsilon(1e-9));

    // The x10 convention is a pure scale factor, off by default.
    CiderOptions scaled;
    scaled.times_ten = true;
    const metrics::CiderResult tenfold = metrics::cider(cands, refs, scaled);
    for (std::size_t i = 0; i < ref_scores.size(); ++i)
        CHECK(tenfold.per_item[i] == doctest::Approx(10.0 * ref_scores[i]).epsilon(1e-9));
}

TEST_CASE("exact match normalizes before comparing") {
    CHECK(metrics::exact_match("The chair.", {"the chair"}) == 1);
    CHECK(metrics::exact_match("the  CHAIR!", {"a table", "the chair"}) == 1);
    CHECK(metrics::exact_match("the chair", {"a chair"}) == 0);

    Rng rng(5);
    int expected = 0;
    std::vector<int> got;
    for (int i = 0; i < 100; ++i) {
        const bool match = uniform_index(rng, 2) == 0;
        const std::string cand = match ? "Item " + std::to_string(i) : "other " + std::to_string(i);
        const std::string ref = "item " + std::to_string(i);
        expected += match ? 1 : 0;
        got.push_back(metrics::exact_match(cand, {ref}));
    }
    int total = 0;
    for (const int g : got) total += g;
    CHECK(total == expected);
}

TEST_CASE("metrics ignore reference order") {
    const Tokens cand = metrics::tokenize("a red chair beside a window");
    const std::vector<Tokens> refs = {
        metrics::tokenize("a red chair near the window"),
        metrics::tokenize("the chair is red"),
        metrics::tokenize("a window beside a chair"),
    };
    std::vector<Tokens> reversed(refs.rbegin(), refs.rend());
    for (int n = 1; n <= 4; ++n)
        CHECK(metrics::bleu(cand, refs, n) ==
              doctest::Approx(metrics::bleu(cand, reversed, n)).epsilon(1e-15));
    CHECK(metrics::rouge_l(cand, refs) ==
          doctest::Approx(metrics::rouge_l(cand, reversed)).epsilon(1e-15));
}

TEST_CASE("grounding metrics") {
    using geom::Aabb;
    using geom::Vec3;
    const std::vector<Aabb> gt = {
        {Vec3(0, 0, 0), Vec3(1, 1, 1)},
        {Vec3(2, 2, 2), Vec3(4, 4, 4)},
        {Vec3(5, 0, 0), Vec3(6, 1, 1)},
    };

    const metrics::GroundingMetrics perfect = metrics::grounding_metrics(gt, gt, 0.25);
    CHECK(perfect.acc_at_k == 1.0);
    CHECK(perfect.avg_iou == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(perfect.avg_dist == 0.0);

    std::vector<Aabb> disjoint = gt;
    for (auto& box : disjoint) {
        box.min += Vec3(50, 0, 0);
        box.max += Vec3(50, 0, 0);
    }
    const metrics::GroundingMetrics none = metrics::grounding_metrics(disjoint, gt, 0.25);
    CHECK(none.acc_at_k == 0.0);
    CHECK(none.avg_iou == 0.0);
    CHECK(none.avg_dist == doctest::Approx(50.0).epsilon(1e-12));

    // Mixed batch against per-pair oracles.
    std::vector<Aabb> mixed = {gt[0],
                               {Vec3(3, 3, 3), Vec3(5, 5, 5)},
                               {Vec3(50, 0, 0), Vec3(51, 1, 1)}};
    const metrics::GroundingMetrics m = metrics::grounding_metrics(mixed, gt, 0.25);
    double iou_sum = 0.0, dist_sum = 0.0;
    int above = 0;
    for (int i = 0; i < 3; ++i) {
        const double iou = geom::aabb_iou(mixed[i], gt[i]);
        iou_sum += iou;
        dist_sum += geom::aabb_center_distance(mixed[i], gt[i]);
        if (iou > 0.25) ++above;
    }
    CHECK(m.avg_iou == doctest::Approx(iou_sum / 3).epsilon(1e-12));
    CHECK(m.avg_dist == doctest::Approx(dist_sum / 3).epsilon(1e-12));
    CHECK(m.acc_at_k == doctest::Approx(above / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(metrics::grounding_metrics(mixed, {gt[0]}, 0.25), ValidationError);
}

TEST_CASE("corpus evaluation aggregates per-item scores") {
    std::vector<EvalItem> items;
    for (int i = 0; i < 4; ++i) {
        EvalItem item;
        item.id = "item_" + std::to_string(i);
        item.candidate = "a plain room with a chair numbered " + std::to_string(i);
        item.references = {item.candidate};
        items.push_back(std::move(item));
    }
    const metrics::MetricReport report = metrics::evaluate_corpus(items);
    CHECK(report.bleu1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.bleu4 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.rouge_l == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.cider == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.em == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(report.per_item.size() == 4);
    CHECK(report.per_item[2].id == "item_2");
    CHECK(report.per_item[2].em == 1);
}
