#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "occap/manifest.hpp"
#include "occap/rng.hpp"
#include "occap/tensor.hpp"

namespace occap::topics {

struct LdaConfig {
    int n_topics = 80;
    int iters = 100;
    int vocab_cap = 5000;
    double alpha = -1.0; // <0 means 50/K
    double beta = 0.01;
    std::uint64_t seed = 0;
};

struct LdaModel {
    int n_topics = 0;
    int vocab_size = 0;
    num::Tensor topic_word; // [K x V], rows sum to 1
    num::Tensor doc_topic;  // [D x K], rows sum to 1
    double alpha = 0.0;
    double beta = 0.0;
    int vocab_cap = 0;
    std::vector<std::string> vocab;     // LDA word id -> token
    std::vector<std::string> image_ids; // doc index -> image id

    int doc_index(const std::string& image_id) const;
    // Top-n most probable words of a topic.
    std::vector<std::string> top_words(int topic, int n) const;
};

// One document per image: its captions concatenated, tokenized and capped
// to the vocab_cap most frequent tokens.
class GibbsSampler {
public:
    GibbsSampler(std::vector<std::vector<int>> docs, int vocab_size, const LdaConfig& cfg);

    void sweep();
    std::int64_t assigned_token_total() const;
    std::int64_t corpus_token_total() const { return total_tokens_; }
    LdaModel finalize() const;

private:
    double alpha_, beta_;
    int n_topics_, vocab_size_;
    std::vector<std::vector<int>> docs_;
    std::vector<std::vector<int>> assignments_;
    std::vector<std::int64_t> n_dk_, n_kw_, n_k_;
    std::int64_t total_tokens_ = 0;
    Rng rng_;
    LdaConfig cfg_;
};

LdaModel lda_train(const corpus::CorpusManifest& manifest, const LdaConfig& cfg);

void save_lda(const LdaModel& model, const std::filesystem::path& dir);
LdaModel load_lda(const std::filesystem::path& dir);

} // namespace occap::topics
