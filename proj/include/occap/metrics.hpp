#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

namespace occap::metrics {

using TokenList = std::vector<std::string>;

struct EvalReport {
    std::array<double, 4> bleu{0, 0, 0, 0};
    double rouge_l = 0.0;
    double cider = 0.0;
    std::vector<std::string> image_ids; // optional per-image breakdown
    std::vector<double> per_image_rouge_l;
    std::vector<double> per_image_cider;
};

nlohmann::json report_to_json(const EvalReport& r);

// Corpus BLEU-1..4: clipped modified n-gram precision, geometric mean,
// closest-reference brevity penalty, no smoothing.
std::array<double, 4> bleu(const std::vector<TokenList>& candidates,
                           const std::vector<std::vector<TokenList>>& references, int max_n = 4);

// Per-image max over references of the LCS F-measure, averaged.
double rouge_l(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
               double beta = 1.2);

// tf-idf n-gram cosine with count clipping and a gaussian length penalty,
// averaged over orders and references, x10.
double cider(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
             int max_n = 4, double sigma = 6.0);

EvalReport evaluate(const std::vector<TokenList>& candidates, const std::vector<std::vector<TokenList>>& references,
                    const std::vector<std::string>& image_ids = {});

} // namespace occap::metrics
