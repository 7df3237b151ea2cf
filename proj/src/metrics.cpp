#include "occap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "occap/errors.hpp"

namespace occap::metrics {

namespace {

using Ngram = std::vector<std::string>;
using NgramCount = std::map<Ngram, int>;

NgramCount count_ngrams(const TokenList& tokens, int n) {
    NgramCount out;
    if (static_cast<int>(tokens.size()) < n) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        ++out[g];
    }
    return out;
}

void check_inputs(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
                  const char* op) {
    if (candidates.empty()) throw ContractError(std::string(op) + ": empty candidate set");
    if (candidates.size() != references.size()) {
        throw ContractError(std::string(op) + ": candidate and reference counts differ");
    }
    for (std::size_t i = 0; i < references.size(); ++i) {
        if (references[i].empty()) {
            throw ContractError(std::string(op) + ": image " + std::to_string(i) + " has no references");
        }
    }
}

int lcs_length(const TokenList& a, const TokenList& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) {
                dp[i][j] = dp[i - 1][j - 1] + 1;
            } else {
                dp[i][j] = std::max(dp[i - 1][j], dp[i][j - 1]);
            }
        }
    }
    return dp[a.size()][b.size()];
}

} // namespace

std::array<double, 4> bleu(const std::vector<TokenList>& candidates,
                           const std::vector<std::vector<TokenList>>& references, int max_n) {
    check_inputs(candidates, references, "bleu");
    if (max_n < 1 || max_n > 4) throw ContractError("bleu: max_n must be in [1, 4]");

    std::array<std::int64_t, 4> matched{0, 0, 0, 0};
    std::array<std::int64_t, 4> total{0, 0, 0, 0};
    std::int64_t cand_len = 0, ref_len = 0;

    for (std::size_t img = 0; img < candidates.size(); ++img) {
        const TokenList& cand = candidates[img];
        cand_len += static_cast<std::int64_t>(cand.size());
        // closest reference length, ties to the shorter one
        std::int64_t best_len = 0;
        std::int64_t best_diff = -1;
        for (const auto& ref : references[img]) {
            std::int64_t diff = std::llabs(static_cast<std::int64_t>(ref.size()) -
                                           static_cast<std::int64_t>(cand.size()));
            if (best_diff < 0 || diff < best_diff ||
                (diff == best_diff && static_cast<std::int64_t>(ref.size()) < best_len)) {
                best_diff = diff;
                best_len = static_cast<std::int64_t>(ref.size());
            }
        }
        ref_len += best_len;

        for (int n = 1; n <= max_n; ++n) {
            NgramCount cn = count_ngrams(cand, n);
            NgramCount clip;
            for (const auto& ref : references[img]) {
                for (const auto& [g, k] : count_ngrams(ref, n)) {
                    clip[g] = std::max(clip[g], k);
                }
            }
            for (const auto& [g, k] : cn) {
                auto it = clip.find(g);
                matched[static_cast<std::size_t>(n - 1)] += std::min(k, it == clip.end() ? 0 : it->second);
            }
            total[static_cast<std::size_t>(n - 1)] +=
                std::max<std::int64_t>(0, static_cast<std::int64_t>(cand.size()) - n + 1);
        }
    }

    const double bp = cand_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    std::array<double, 4> out{0, 0, 0, 0};
    for (int n = 1; n <= max_n; ++n) {
        double log_sum = 0.0;
        bool zero = false;
        for (int i = 0; i < n; ++i) {
            if (total[static_cast<std::size_t>(i)] == 0 || matched[static_cast<std::size_t>(i)] == 0) {
                zero = true;
                break;
            }
            log_sum += std::log(static_cast<double>(matched[static_cast<std::size_t>(i)]) /
                                static_cast<double>(total[static_cast<std::size_t>(i)]));
        }
        out[static_cast<std::size_t>(n - 1)] = zero ? 0.0 : bp * std::exp(log_sum / n);
    }
    return out;
}

double rouge_l(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
               double beta) {
    check_inputs(candidates, references, "rouge_l");
    const double b2 = beta * beta;
    double total = 0.0;
    for (std::size_t img = 0; img < candidates.size(); ++img) {
        const TokenList& cand = candidates[img];
        double best = 0.0;
        for (const auto& ref : references[img]) {
            if (cand.empty() || ref.empty()) continue;
            const int l = lcs_length(cand, ref);
            if (l == 0) continue;
            const double p = static_cast<double>(l) / static_cast<double>(cand.size());
            const double r = static_cast<double>(l) / static_cast<double>(ref.size());
            best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
        }
        total += best;
    }
    return total / static_cast<double>(candidates.size());
}

double cider(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
             int max_n, double sigma) {
    check_inputs(candidates, references, "cider");
    if (candidates.size() < 2) {
        throw ContractError("cider: needs at least 2 images so document frequencies are defined");
    }

    // document frequency over reference sets
    std::map<Ngram, int> doc_freq;
    for (const auto& refs : references) {
        std::set<Ngram> seen;
        for (const auto& ref : refs) {
            for (int n = 1; n <= max_n; ++n) {
                for (const auto& [g, k] : count_ngrams(ref, n)) seen.insert(g);
            }
        }
        for (const auto& g : seen) ++doc_freq[g];
    }
    const double log_n = std::log(static_cast<double>(candidates.size()));

    struct TfIdf {
        std::vector<std::map<Ngram, double>> vec;
        std::vector<double> norm;
    };
    auto tfidf = [&](const TokenList& tokens) {
        TfIdf out;
        out.vec.resize(static_cast<std::size_t>(max_n));
        out.norm.assign(static_cast<std::size_t>(max_n), 0.0);
        for (int n = 1; n <= max_n; ++n) {
            for (const auto& [g, k] : count_ngrams(tokens, n)) {
                auto it = doc_freq.find(g);
                const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
                const double idf = log_n - std::log(std::max(1.0, df));
                const double w = static_cast<double>(k) * idf;
                out.vec[static_cast<std::size_t>(n - 1)][g] = w;
                out.norm[static_cast<std::size_t>(n - 1)] += w * w;
            }
            out.norm[static_cast<std::size_t>(n - 1)] = std::sqrt(out.norm[static_cast<std::size_t>(n - 1)]);
        }
        return out;
    };

    double corpus_score = 0.0;
    for (std::size_t img = 0; img < candidates.size(); ++img) {
        TfIdf cv = tfidf(candidates[img]);
        std::vector<double> val(static_cast<std::size_t>(max_n), 0.0);
        for (const auto& ref : references[img]) {
            TfIdf rv = tfidf(ref);
            const double delta = static_cast<double>(candidates[img].size()) - static_cast<double>(ref.size());
            const double len_penalty = std::exp(-delta * delta / (2.0 * sigma * sigma));
            for (int n = 0; n < max_n; ++n) {
                double acc = 0.0;
                for (const auto& [g, w] : cv.vec[static_cast<std::size_t>(n)]) {
                    auto it = rv.vec[static_cast<std::size_t>(n)].find(g);
                    if (it == rv.vec[static_cast<std::size_t>(n)].end()) continue;
                    acc += std::min(w, it->second) * it->second;
                }
                if (cv.norm[static_cast<std::size_t>(n)] != 0.0 && rv.norm[static_cast<std::size_t>(n)] != 0.0) {
                    acc /= cv.norm[static_cast<std::size_t>(n)] * rv.norm[static_cast<std::size_t>(n)];
                }
                val[static_cast<std::size_t>(n)] += acc * len_penalty;
            }
        }
        double score = 0.0;
        for (double v : val) score += v;
        score = score / static_cast<double>(max_n) / static_cast<double>(references[img].size()) * 10.0;
        corpus_score += score;
    }
    return corpus_score / static_cast<double>(candidates.size());
}

EvalReport evaluate(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
                    const std::vector<std::string>& image_ids) {
    EvalReport report;
    report.bleu = bleu(candidates, references);
    report.rouge_l = rouge_l(candidates, references);
    report.cider = cider(candidates, references);
    if (!image_ids.empty()) {
        report.image_ids = image_ids;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            report.per_image_rouge_l.push_back(rouge_l({candidates[i]}, {references[i]}));
        }
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["bleu1"] = r.bleu[0];
    j["bleu2"] = r.bleu[1];
    j["bleu3"] = r.bleu[2];
    j["bleu4"] = r.bleu[3];
    j["rouge_l"] = r.rouge_l;
    j["cider"] = r.cider;
    if (!r.image_ids.empty()) {
        j["per_image"] = nlohmann::json::array();
        for (std::size_t i = 0; i < r.image_ids.size(); ++i) {
            nlohmann::json row;
            row["image_id"] = r.image_ids[i];
            if (i < r.per_image_rouge_l.size()) row["rouge_l"] = r.per_image_rouge_l[i];
            j["per_image"].push_back(row);
        }
    }
    return j;
}

} // namespace occap::metrics
