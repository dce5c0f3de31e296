#include "feat3d/evalmetrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>

#include "feat3d/errors.hpp"

namespace f3d::metrics {

namespace {

constexpr int kMaxNgramOrder = 4;

bool is_stripped_punct(char c) {
    switch (c) {
        case '.':
        case ',':
        case '!':
        case '?':
        case ';':
        case ':':
        case '\'':
        case '"':
            return true;
        default:
            return false;
    }
}

using NgramCounts = std::map<std::string, double>;

// n-grams keyed by tokens joined with an unprintable separator.
NgramCounts ngram_counts(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + k];
        }
        counts[key] += 1.0;
    }
    return counts;
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// N-grams absent from the reference corpus have df 0, hence the maximal
// idf log(N) (the default_idf argument).
double cosine(const NgramCounts& a, const NgramCounts& b,
              const std::map<std::string, double>& idf, double default_idf) {
    const auto weight_of = [&](const std::string& key) {
        const auto it = idf.find(key);
        return it == idf.end() ? default_idf : it->second;
    };
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (const auto& [key, count] : a) {
        const double w = weight_of(key);
        const double va = count * w;
        norm_a += va * va;
        const auto jt = b.find(key);
        if (jt != b.end()) dot += va * (jt->second * w);
    }
    for (const auto& [key, count] : b) {
        const double w = weight_of(key);
        norm_b += (count * w) * (count * w);
    }
    if (norm_a <= 0.0 || norm_b <= 0.0) return 0.0;
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (is_stripped_punct(c)) continue;
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                tokens.push_back(current);
                current.clear();
            }
        } else {
            current += c;
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

std::string normalize(const std::string& text) {
    const std::vector<std::string> tokens = tokenize(text);
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

double bleu(const std::vector<std::string>& candidate,
            const std::vector<std::vector<std::string>>& references, int n) {
    if (n < 1 || n > kMaxNgramOrder) throw ValidationError("bleu: order must be in 1..4");
    if (references.empty()) throw ValidationError("bleu: no references");
    if (candidate.empty()) return 0.0;

    double log_precision_sum = 0.0;
    for (int order = 1; order <= n; ++order) {
        const NgramCounts cand = ngram_counts(candidate, order);
        double total = 0.0;
        for (const auto& [key, count] : cand) total += count;

        NgramCounts clip;
        for (const auto& ref : references) {
            for (const auto& [key, count] : ngram_counts(ref, order))
                clip[key] = std::max(clip[key], count);
        }
        double matched = 0.0;
        for (const auto& [key, count] : cand) {
            const auto it = clip.find(key);
            if (it != clip.end()) matched += std::min(count, it->second);
        }
        if (matched <= 0.0 || total <= 0.0) return 0.0;
        log_precision_sum += std::log(matched / total) / n;
    }

    // Closest reference length; ties break toward the shorter reference.
    const std::size_t c = candidate.size();
    std::size_t r = references.front().size();
    for (const auto& ref : references) {
        const auto diff = [&](std::size_t len) {
            return len > c ? len - c : c - len;
        };
        if (diff(ref.size()) < diff(r) || (diff(ref.size()) == diff(r) && ref.size() < r))
            r = ref.size();
    }
    const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
    return bp * std::exp(log_precision_sum);
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::vector<std::string>>& references) {
    if (references.empty()) throw ValidationError("rouge_l: no references");
    if (candidate.empty()) return 0.0;
    constexpr double kBetaSq = 1.2 * 1.2;
    double best = 0.0;
    for (const auto& ref : references) {
        if (ref.empty()) continue;
        const double lcs = lcs_length(candidate, ref);
        if (lcs <= 0.0) continue;
        const double precision = lcs / candidate.size();
        const double recall = lcs / ref.size();
        const double f =
            (1.0 + kBetaSq) * precision * recall / (recall + kBetaSq * precision);
        best = std::max(best, f);
    }
    return best;
}

CiderResult cider(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::vector<std::string>>>& references_per_item,
                  const CiderOptions& opts) {
    if (candidates.size() != references_per_item.size())
        throw ValidationError("cider: candidate/reference count mismatch");
    const std::size_t n_items = candidates.size();
    if (n_items < 2)
        throw ValidationError("cider: needs a corpus of at least 2 items for IDF");

    CiderResult result;
    result.per_item.assign(n_items, 0.0);
    const double log_n = std::log(static_cast<double>(n_items));

    for (int order = 1; order <= kMaxNgramOrder; ++order) {
        // Document frequency: number of items whose reference set contains
        // the n-gram at least once.
        std::map<std::string, double> df;
        std::vector<std::vector<NgramCounts>> ref_counts(n_items);
        std::vector<NgramCounts> cand_counts(n_items);
        for (std::size_t i = 0; i < n_items; ++i) {
            cand_counts[i] = ngram_counts(candidates[i], order);
            NgramCounts seen;
            for (const auto& ref : references_per_item[i]) {
                ref_counts[i].push_back(ngram_counts(ref, order));
                for (const auto& [key, count] : ref_counts[i].back()) seen[key] = 1.0;
            }
            for (const auto& [key, one] : seen) df[key] += 1.0;
        }
        std::map<std::string, double> idf;
        for (const auto& [key, freq] : df) idf[key] = log_n - std::log(std::max(freq, 1.0));

        for (std::size_t i = 0; i < n_items; ++i) {
            if (references_per_item[i].empty())
                throw ValidationError("cider: item without references");
            double item_sum = 0.0;
            for (std::size_t j = 0; j < references_per_item[i].size(); ++j) {
                const double len_delta = static_cast<double>(candidates[i].size()) -
                                         static_cast<double>(references_per_item[i][j].size());
                const double penalty =
                    std::exp(-len_delta * len_delta / (2.0 * opts.sigma * opts.sigma));
                item_sum += penalty * cosine(cand_counts[i], ref_counts[i][j], idf, log_n);
            }
            result.per_item[i] +=
                item_sum / references_per_item[i].size() / kMaxNgramOrder;
        }
    }

    const double scale = opts.times_ten ? 10.0 : 1.0;
    double total = 0.0;
    for (auto& score : result.per_item) {
        score *= scale;
        total += score;
    }
    result.mean = total / n_items;
    return result;
}

int exact_match(const std::string& candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw ValidationError("exact_match: no references");
    const std::string norm = normalize(candidate);
    for (const auto& ref : references)
        if (norm == normalize(ref)) return 1;
    return 0;
}

GroundingMetrics grounding_metrics(const std::vector<geom::Aabb>& predictions,
                                   const std::vector<geom::Aabb>& ground_truth, double k) {
    if (predictions.size() != ground_truth.size())
        throw ValidationError("grounding_metrics: list length mismatch");
    if (predictions.empty()) throw ValidationError("grounding_metrics: empty input");
    GroundingMetrics out;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double iou = geom::aabb_iou(predictions[i], ground_truth[i]);
        out.avg_iou += iou;
        out.avg_dist += geom::aabb_center_distance(predictions[i], ground_truth[i]);
        if (iou > k) out.acc_at_k += 1.0;
    }
    const double n = static_cast<double>(predictions.size());
    out.acc_at_k /= n;
    out.avg_iou /= n;
    out.avg_dist /= n;
    return out;
}

MetricReport evaluate_corpus(const std::vector<EvalItem>& items, const CiderOptions& opts) {
    if (items.empty()) throw ValidationError("evaluate_corpus: no items");
    MetricReport report;
    std::vector<std::vector<std::string>> cand_tokens(items.size());
    std::vector<std::vector<std::vector<std::string>>> ref_tokens(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].references.empty())
            throw ValidationError("evaluate_corpus: item '" + items[i].id + "' has no references");
        cand_tokens[i] = tokenize(items[i].candidate);
        for (const auto& ref : items[i].references) ref_tokens[i].push_back(tokenize(ref));
    }
    const CiderResult cider_scores =
        items.size() >= 2 ? cider(cand_tokens, ref_tokens, opts) : CiderResult{};

    report.per_item.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        ItemScores& s = report.per_item[i];
        s.id = items[i].id;
        s.bleu1 = bleu(cand_tokens[i], ref_tokens[i], 1);
        s.bleu2 = bleu(cand_tokens[i], ref_tokens[i], 2);
        s.bleu3 = bleu(cand_tokens[i], ref_tokens[i], 3);
        s.bleu4 = bleu(cand_tokens[i], ref_tokens[i], 4);
        s.rouge_l = rouge_l(cand_tokens[i], ref_tokens[i]);
        s.cider = items.size() >= 2 ? cider_scores.per_item[i] : 0.0;
        s.em = exact_match(items[i].candidate, items[i].references);
        report.bleu1 += s.bleu1;
        report.bleu2 += s.bleu2;
        report.bleu3 += s.bleu3;
        report.bleu4 += s.bleu4;
        report.rouge_l += s.rouge_l;
        report.em += s.em;
    }
    const double n = static_cast<double>(items.size());
    report.bleu1 /= n;
    report.bleu2 /= n;
    report.bleu3 /= n;
    report.bleu4 /= n;
    report.rouge_l /= n;
    report.em /= n;
    report.cider = cider_scores.mean;
    return report;
}

}  // namespace f3d::metrics
