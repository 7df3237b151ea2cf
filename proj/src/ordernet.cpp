#include "occap/ordernet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "occap/checkpoint.hpp"
#include "occap/errors.hpp"

namespace occap::ordernet {

OrderNet::OrderNet(const OrderNetConfig& cfg) : cfg_(cfg), params_(cfg.seed) {
    if (cfg.d_fc < 1 || cfg.n_topics < 1 || cfg.d_emb < 1 || cfg.d_gru < 1 || cfg.d_word < 1 || cfg.vocab_size < 1) {
        throw ContractError("ordernet: all dimensions must be >= 1");
    }
    if (cfg.margin <= 0.0) throw ContractError("ordernet: margin must be positive");
    params_.matrix_glorot("ordernet/W_I", cfg.d_emb, cfg.d_fc);
    params_.matrix_glorot("ordernet/W_T", cfg.d_emb, cfg.n_topics);
    params_.matrix_glorot("ordernet/W_C", cfg.d_emb, cfg.d_gru);
    const int gate_in = cfg.d_word + cfg.d_gru;
    params_.matrix_glorot("ordernet/gru_Wz", cfg.d_gru, gate_in);
    params_.vector_zeros("ordernet/gru_bz", cfg.d_gru);
    params_.matrix_glorot("ordernet/gru_Wr", cfg.d_gru, gate_in);
    params_.vector_zeros("ordernet/gru_br", cfg.d_gru);
    params_.matrix_glorot("ordernet/gru_Wh", cfg.d_gru, gate_in);
    params_.vector_zeros("ordernet/gru_bh", cfg.d_gru);
    params_.matrix_glorot("ordernet/word_embed", cfg.vocab_size, cfg.d_word);
}

num::Var OrderNet::nonneg(num::Tape& tape, num::Var projected) const {
    if (cfg_.map == NonnegMap::Abs) return tape.abs_(projected);
    num::Var n = tape.l2_normalize(projected);
    return tape.mul(n, n);
}

num::Var OrderNet::encode_image_on_tape(num::Tape& tape, num::Var fc) const {
    return nonneg(tape, tape.matvec(tape.param(params_, "ordernet/W_I"), fc));
}

num::Var OrderNet::encode_topic_on_tape(num::Tape& tape, num::Var probs) const {
    return nonneg(tape, tape.matvec(tape.param(params_, "ordernet/W_T"), probs));
}

num::Var OrderNet::gru_last_hidden(num::Tape& tape, const corpus::CaptionSequence& caption) const {
    num::Var wz = tape.param(params_, "ordernet/gru_Wz");
    num::Var bz = tape.param(params_, "ordernet/gru_bz");
    num::Var wr = tape.param(params_, "ordernet/gru_Wr");
    num::Var br = tape.param(params_, "ordernet/gru_br");
    num::Var wh = tape.param(params_, "ordernet/gru_Wh");
    num::Var bh = tape.param(params_, "ordernet/gru_bh");
    num::Var embed = tape.param(params_, "ordernet/word_embed");

    num::Var h = tape.input(num::Tensor({cfg_.d_gru}));
    for (int id : caption.token_ids) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw ContractError("encode: token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(cfg_.vocab_size));
        }
        num::Var x = tape.row(embed, id);
        num::Var v = tape.concat(x, h);
        num::Var z = tape.sigmoid(tape.add(tape.matvec(wz, v), bz));
        num::Var r = tape.sigmoid(tape.add(tape.matvec(wr, v), br));
        num::Var vh = tape.concat(x, tape.mul(r, h));
        num::Var cand = tape.tanh_(tape.add(tape.matvec(wh, vh), bh));
        h = tape.add(tape.mul(tape.one_minus(z), h), tape.mul(z, cand));
    }
    return h;
}

num::Var OrderNet::encode_caption_on_tape(num::Tape& tape, const corpus::CaptionSequence& caption) const {
    num::Var h = gru_last_hidden(tape, caption);
    return nonneg(tape, tape.matvec(tape.param(params_, "ordernet/W_C"), h));
}

OrderEmbedding OrderNet::encode_image(const num::Tensor& fc) const {
    num::Tape tape;
    return {tape.val(encode_image_on_tape(tape, tape.input(fc))), Modality::Image};
}

OrderEmbedding OrderNet::encode_topic(const num::Tensor& probs) const {
    num::Tape tape;
    return {tape.val(encode_topic_on_tape(tape, tape.input(probs))), Modality::Topic};
}

OrderEmbedding OrderNet::encode_caption(const corpus::CaptionSequence& caption) const {
    num::Tape tape;
    return {tape.val(encode_caption_on_tape(tape, caption)), Modality::Caption};
}

double order_similarity(const num::Tensor& x, const num::Tensor& y) {
    if (x.shape() != y.shape()) {
        throw ContractError("order_similarity: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double v = std::max(0.0, y[i] - x[i]);
        acc += v * v;
    }
    return -acc;
}

double order_similarity(const OrderEmbedding& x, const OrderEmbedding& y) {
    return order_similarity(x.vec, y.vec);
}

num::Var order_similarity_on_tape(num::Tape& tape, num::Var x, num::Var y) {
    num::Var d = tape.relu(tape.sub(y, x));
    return tape.neg(tape.dot(d, d));
}

double pair_loss(const std::vector<std::pair<num::Tensor, num::Tensor>>& positives,
                 const std::vector<num::Tensor>& negatives_x, const std::vector<num::Tensor>& negatives_y,
                 double alpha) {
    if (positives.empty()) throw ContractError("pair_loss: needs at least one positive pair");
    double loss = 0.0;
    for (const auto& [x, y] : positives) {
        const double s_pos = order_similarity(x, y);
        for (const auto& xn : negatives_x) {
            loss += std::max(0.0, alpha - s_pos + order_similarity(xn, y));
        }
        for (const auto& yn : negatives_y) {
            loss += std::max(0.0, alpha - s_pos + order_similarity(x, yn));
        }
    }
    return loss;
}

namespace {

// Ranking loss over one partial order with in-batch negatives.
num::Var ranking_loss(num::Tape& tape, const std::vector<num::Var>& higher, const std::vector<num::Var>& lower,
                      double alpha) {
    const std::size_t n = higher.size();
    std::vector<std::vector<num::Var>> sim(n, std::vector<num::Var>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            sim[i][j] = order_similarity_on_tape(tape, higher[i], lower[j]);
        }
    }
    num::Var alpha_c = tape.input_scalar(alpha);
    num::Var loss = tape.input_scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            // contrastive (x', y) and (x, y')
            loss = tape.add(loss, tape.relu(tape.add(tape.sub(alpha_c, sim[i][i]), sim[j][i])));
            loss = tape.add(loss, tape.relu(tape.add(tape.sub(alpha_c, sim[i][i]), sim[i][j])));
        }
    }
    return loss;
}

} // namespace

num::Var total_loss_from_embeddings(num::Tape& tape, const std::vector<EmbeddingTriple>& batch, double alpha) {
    if (batch.size() < 2) {
        throw ContractError("total_loss: batch must hold at least 2 triples for in-batch negatives");
    }
    std::vector<num::Var> images, captions, topics;
    for (const auto& t : batch) {
        images.push_back(t.image);
        captions.push_back(t.caption);
        topics.push_back(t.topic);
    }
    // image above caption, image above topic, caption above topic
    num::Var loss = ranking_loss(tape, images, captions, alpha);
    loss = tape.add(loss, ranking_loss(tape, images, topics, alpha));
    loss = tape.add(loss, ranking_loss(tape, captions, topics, alpha));
    return loss;
}

num::Var total_loss_on_tape(num::Tape& tape, const OrderNet& net, const std::vector<TripleExample>& batch,
                            double alpha) {
    if (batch.size() < 2) {
        throw ContractError("total_loss: batch must hold at least 2 triples for in-batch negatives");
    }
    std::vector<EmbeddingTriple> triples;
    for (const auto& ex : batch) {
        EmbeddingTriple t;
        t.image = net.encode_image_on_tape(tape, tape.input(ex.fc));
        t.topic = net.encode_topic_on_tape(tape, tape.input(ex.topic_probs));
        t.caption = net.encode_caption_on_tape(tape, ex.caption);
        triples.push_back(t);
    }
    return total_loss_from_embeddings(tape, triples, alpha);
}

double total_loss(const OrderNet& net, const std::vector<TripleExample>& batch, double alpha) {
    num::Tape tape;
    return tape.scalar(total_loss_on_tape(tape, net, batch, alpha));
}

OrderNetTrainLog train_ordernet(OrderNet& net, const std::vector<TripleExample>& data,
                                const OrderNetTrainConfig& cfg, num::AdamState& adam, Rng& shuffle_rng,
                                int epochs_to_run) {
    if (data.size() < 2) throw ContractError("train_ordernet: needs at least 2 triples");
    adam.config().lr = cfg.lr;

    OrderNetTrainLog log;
    std::int64_t step = adam.step_count();

    for (int epoch = 0; epoch < epochs_to_run; ++epoch) {
        // permutation must depend only on the rng state so resume is exact
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            if (stop - start < 2) continue; // a lone trailing triple has no in-batch negatives
            std::vector<TripleExample> batch;
            for (std::size_t idx = start; idx < stop; ++idx) batch.push_back(data[order[idx]]);
            ++step;
            try {
                num::Tape tape;
                num::Var loss = total_loss_on_tape(tape, net, batch, net.config().margin);
                tape.backward(loss, net.params());
                adam.step(net.params());
                epoch_loss += tape.scalar(loss);
            } catch (const NumericError& e) {
                throw NumericError("train_ordernet: " + std::string(e.what()) + " at step " + std::to_string(step));
            }
            ++batches;
        }
        ckpt::quantize_f32(net.params());
        ckpt::quantize_f32(adam);
        log.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    return log;
}

double recall_at_k(const std::vector<num::Tensor>& queries, const std::vector<num::Tensor>& gallery,
                   const std::map<int, std::set<int>>& gold, int k) {
    if (k < 1) throw ContractError("recall_at_k: k must be >= 1");
    if (queries.empty() || gallery.empty()) throw ContractError("recall_at_k: empty queries or gallery");
    int hits = 0;
    int evaluated = 0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        auto it = gold.find(static_cast<int>(q));
        if (it == gold.end() || it->second.empty()) {
            throw ContractError("recall_at_k: query " + std::to_string(q) + " has no gold items");
        }
        std::vector<int> order(gallery.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> sim(gallery.size());
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            sim[g] = order_similarity(queries[q], gallery[g]);
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
        });
        const int top = std::min<int>(k, static_cast<int>(order.size()));
        bool hit = false;
        for (int r = 0; r < top && !hit; ++r) hit = it->second.count(order[static_cast<std::size_t>(r)]) != 0;
        hits += hit ? 1 : 0;
        ++evaluated;
    }
    return static_cast<double>(hits) / static_cast<double>(evaluated);
}

} // namespace occap::ordernet
