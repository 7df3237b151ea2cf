#include "occap/lda.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "occap/errors.hpp"
#include "occap/features.hpp"
#include "occap/rng.hpp"
#include "occap/vocab.hpp"

namespace occap::topics {

using nlohmann::json;

int LdaModel::doc_index(const std::string& image_id) const {
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
        if (image_ids[i] == image_id) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::string> LdaModel::top_words(int topic, int n) const {
    std::vector<int> order(static_cast<std::size_t>(vocab_size));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double pa = topic_word.at(topic, a), pb = topic_word.at(topic, b);
        if (pa != pb) return pa > pb;
        return a < b;
    });
    std::vector<std::string> out;
    for (int i = 0; i < n && i < vocab_size; ++i) out.push_back(vocab[static_cast<std::size_t>(order[i])]);
    return out;
}

GibbsSampler::GibbsSampler(std::vector<std::vector<int>> docs, int vocab_size, const LdaConfig& cfg)
    : alpha_(cfg.alpha < 0 ? 50.0 / cfg.n_topics : cfg.alpha),
      beta_(cfg.beta),
      n_topics_(cfg.n_topics),
      vocab_size_(vocab_size),
      docs_(std::move(docs)),
      rng_(cfg.seed),
      cfg_(cfg) {
    const std::size_t D = docs_.size();
    n_dk_.assign(D * static_cast<std::size_t>(n_topics_), 0);
    n_kw_.assign(static_cast<std::size_t>(n_topics_) * static_cast<std::size_t>(vocab_size_), 0);
    n_k_.assign(static_cast<std::size_t>(n_topics_), 0);
    assignments_.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
        assignments_[d].resize(docs_[d].size());
        for (std::size_t i = 0; i < docs_[d].size(); ++i) {
            const int k = rng_.uniform_int(n_topics_);
            assignments_[d][i] = k;
            ++n_dk_[d * static_cast<std::size_t>(n_topics_) + static_cast<std::size_t>(k)];
            ++n_kw_[static_cast<std::size_t>(k) * static_cast<std::size_t>(vocab_size_) +
                    static_cast<std::size_t>(docs_[d][i])];
            ++n_k_[static_cast<std::size_t>(k)];
            ++total_tokens_;
        }
    }
}

void GibbsSampler::sweep() {
    const double vbeta = static_cast<double>(vocab_size_) * beta_;
    std::vector<double> p(static_cast<std::size_t>(n_topics_));
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        for (std::size_t i = 0; i < docs_[d].size(); ++i) {
            const int w = docs_[d][i];
            const int old = assignments_[d][i];
            --n_dk_[d * static_cast<std::size_t>(n_topics_) + static_cast<std::size_t>(old)];
            --n_kw_[static_cast<std::size_t>(old) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(w)];
            --n_k_[static_cast<std::size_t>(old)];

            double total = 0.0;
            for (int k = 0; k < n_topics_; ++k) {
                const double ndk = static_cast<double>(n_dk_[d * static_cast<std::size_t>(n_topics_) + static_cast<std::size_t>(k)]);
                const double nkw = static_cast<double>(n_kw_[static_cast<std::size_t>(k) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(w)]);
                const double nk = static_cast<double>(n_k_[static_cast<std::size_t>(k)]);
                p[static_cast<std::size_t>(k)] = (ndk + alpha_) * (nkw + beta_) / (nk + vbeta);
                total += p[static_cast<std::size_t>(k)];
            }
            double r = rng_.uniform() * total;
            int picked = n_topics_ - 1;
            for (int k = 0; k < n_topics_; ++k) {
                r -= p[static_cast<std::size_t>(k)];
                if (r <= 0.0) {
                    picked = k;
                    break;
                }
            }
            assignments_[d][i] = picked;
            ++n_dk_[d * static_cast<std::size_t>(n_topics_) + static_cast<std::size_t>(picked)];
            ++n_kw_[static_cast<std::size_t>(picked) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(w)];
            ++n_k_[static_cast<std::size_t>(picked)];
        }
    }
}

std::int64_t GibbsSampler::assigned_token_total() const {
    return std::accumulate(n_k_.begin(), n_k_.end(), std::int64_t{0});
}

LdaModel GibbsSampler::finalize() const {
    LdaModel m;
    m.n_topics = n_topics_;
    m.vocab_size = vocab_size_;
    m.alpha = alpha_;
    m.beta = beta_;
    m.vocab_cap = cfg_.vocab_cap;
    m.topic_word = num::Tensor({n_topics_, vocab_size_});
    m.doc_topic = num::Tensor({static_cast<int>(docs_.size()), n_topics_});
    const double vbeta = static_cast<double>(vocab_size_) * beta_;
    for (int k = 0; k < n_topics_; ++k) {
        const double nk = static_cast<double>(n_k_[static_cast<std::size_t>(k)]);
        for (int w = 0; w < vocab_size_; ++w) {
            m.topic_word.at(k, w) =
                (static_cast<double>(n_kw_[static_cast<std::size_t>(k) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(w)]) + beta_) /
                (nk + vbeta);
        }
    }
    // Raw empirical proportions: the alpha prior stays in the sampler's
    // conditionals, but the reported rows are the documents' actual topic
    // shares so small-document rows are not flattened toward uniform.
    for (std::size_t d = 0; d < docs_.size(); ++d) {
        const double nd = static_cast<double>(docs_[d].size());
        for (int k = 0; k < n_topics_; ++k) {
            m.doc_topic.at(static_cast<int>(d), k) =
                static_cast<double>(n_dk_[d * static_cast<std::size_t>(n_topics_) + static_cast<std::size_t>(k)]) / nd;
        }
    }
    return m;
}

LdaModel lda_train(const corpus::CorpusManifest& manifest, const LdaConfig& cfg) {
    if (cfg.n_topics < 1) throw ContractError("lda_train: n_topics must be >= 1");
    if (manifest.images.empty() || manifest.annotations.empty()) {
        throw DataError("lda_train: empty corpus");
    }

    // Corpus-wide frequency, capped vocabulary.
    std::map<std::string, std::int64_t> freq;
    for (const auto& a : manifest.annotations) {
        for (const auto& tok : corpus::tokenize(a.caption)) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::int64_t>> order(freq.begin(), freq.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(order.size()) > cfg.vocab_cap) order.resize(static_cast<std::size_t>(cfg.vocab_cap));

    std::map<std::string, int> word_id;
    std::vector<std::string> vocab;
    for (const auto& [tok, n] : order) {
        word_id[tok] = static_cast<int>(vocab.size());
        vocab.push_back(tok);
    }

    std::vector<std::vector<int>> docs;
    std::vector<std::string> image_ids;
    for (const auto& im : manifest.images) {
        std::vector<int> doc;
        for (const auto& cap : manifest.captions_of(im.image_id)) {
            for (const auto& tok : corpus::tokenize(cap)) {
                auto it = word_id.find(tok);
                if (it != word_id.end()) doc.push_back(it->second);
            }
        }
        if (doc.empty()) {
            throw DataError("lda_train: document for image '" + im.image_id + "' is empty after vocab capping");
        }
        docs.push_back(std::move(doc));
        image_ids.push_back(im.image_id);
    }

    GibbsSampler sampler(std::move(docs), static_cast<int>(vocab.size()), cfg);
    for (int it = 0; it < cfg.iters; ++it) sampler.sweep();
    LdaModel model = sampler.finalize();
    model.vocab = std::move(vocab);
    model.image_ids = std::move(image_ids);
    return model;
}

void save_lda(const LdaModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json j;
    j["n_topics"] = model.n_topics;
    j["vocab_size"] = model.vocab_size;
    j["alpha"] = model.alpha;
    j["beta"] = model.beta;
    j["vocab_cap"] = model.vocab_cap;
    j["vocab"] = model.vocab;
    j["image_ids"] = model.image_ids;
    std::ofstream out(dir / "model.json");
    if (!out) throw DataError("cannot write '" + (dir / "model.json").string() + "'");
    out << j.dump(2) << "\n";
    corpus::write_ocf(dir / "topic_word.ocf", model.topic_word);
    corpus::write_ocf(dir / "doc_topic.ocf", model.doc_topic);
}

LdaModel load_lda(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) throw DataError("cannot open '" + (dir / "model.json").string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError(std::string("lda model parse error: ") + e.what());
    }
    LdaModel m;
    m.n_topics = j.at("n_topics").get<int>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.alpha = j.at("alpha").get<double>();
    m.beta = j.at("beta").get<double>();
    m.vocab_cap = j.at("vocab_cap").get<int>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    m.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    m.topic_word = corpus::read_ocf(dir / "topic_word.ocf");
    m.doc_topic = corpus::read_ocf(dir / "doc_topic.ocf");
    return m;
}

} // namespace occap::topics
