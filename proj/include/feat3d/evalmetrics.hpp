#pragma once

#include <string>
#include <vector>

#include "feat3d/geometry.hpp"

namespace f3d::metrics {

// Declared tokenizer: lowercase, strip .,!?;:'" punctuation, split on
// whitespace. All text metrics run on these tokens.
std::vector<std::string> tokenize(const std::string& text);

// Tokens re-joined by single spaces; the exact-match normal form.
std::string normalize(const std::string& text);

// Clipped modified n-gram precision with uniform weights over orders 1..n
// and a brevity penalty against the closest reference length. Any order
// with zero matches scores 0; an empty candidate scores 0.
double bleu(const std::vector<std::string>& candidate,
            const std::vector<std::vector<std::string>>& references, int n);

// LCS F-measure with beta^2 = 1.2^2, maximized over references.
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::vector<std::string>>& references);

struct CiderOptions {
    double sigma = 6.0;      // gaussian length-penalty width
    bool times_ten = false;  // scale scores by 10 when set
};

struct CiderResult {
    double mean = 0.0;
    std::vector<double> per_item;
};

// Corpus-level TF-IDF cosine over n-grams 1..4 with a gaussian length
// penalty, averaged over references and orders. Needs at least two items
// to form an IDF corpus.
CiderResult cider(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::vector<std::string>>>& references_per_item,
                  const CiderOptions& opts = {});

// 1 iff the normalized candidate equals any normalized reference.
int exact_match(const std::string& candidate, const std::vector<std::string>& references);

struct GroundingMetrics {
    double acc_at_k = 0.0;
    double avg_iou = 0.0;
    double avg_dist = 0.0;
};

GroundingMetrics grounding_metrics(const std::vector<geom::Aabb>& predictions,
                                   const std::vector<geom::Aabb>& ground_truth, double k);

struct EvalItem {
    std::string id;
    std::string candidate;
    std::vector<std::string> references;
};

struct ItemScores {
    std::string id;
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge_l = 0, cider = 0;
    int em = 0;
};

struct MetricReport {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge_l = 0, cider = 0, em = 0;
    std::vector<ItemScores> per_item;
};

MetricReport evaluate_corpus(const std::vector<EvalItem>& items, const CiderOptions& opts = {});

}  // namespace f3d::metrics
