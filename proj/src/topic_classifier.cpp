#include "occap/topic_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "occap/errors.hpp"

namespace occap::topics {

std::vector<int> threshold_topics(const num::Tensor& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.size()));
    for (std::int64_t i = 0; i < probs.size(); ++i) out[static_cast<std::size_t>(i)] = probs[i] >= 0.1 ? 1 : 0;
    return out;
}

TopicClassifier::TopicClassifier(int d_fc, int n_topics, int hidden_width, std::uint64_t seed)
    : d_fc_(d_fc), n_topics_(n_topics), hidden_width_(hidden_width), params_(seed) {
    int in = d_fc;
    for (int layer = 1; layer <= 4; ++layer) {
        params_.matrix_glorot("clf/W" + std::to_string(layer), hidden_width, in);
        params_.vector_zeros("clf/b" + std::to_string(layer), hidden_width);
        in = hidden_width;
    }
    params_.matrix_glorot("clf/W5", n_topics, in);
    params_.vector_zeros("clf/b5", n_topics);
}

num::Var TopicClassifier::logits_on_tape(num::Tape& tape, num::Var input) const {
    num::Var h = input;
    for (int layer = 1; layer <= 4; ++layer) {
        num::Var w = tape.param(params_, "clf/W" + std::to_string(layer));
        num::Var b = tape.param(params_, "clf/b" + std::to_string(layer));
        h = tape.relu(tape.add(tape.matvec(w, h), b));
    }
    num::Var w5 = tape.param(params_, "clf/W5");
    num::Var b5 = tape.param(params_, "clf/b5");
    return tape.add(tape.matvec(w5, h), b5);
}

TopicDistribution TopicClassifier::predict(const num::Tensor& fc) const {
    if (fc.rank() != 1 || fc.dim(0) != d_fc_) {
        throw ContractError("classifier_predict: input width " + fc.shape_str() + " does not match trained width [" +
                            std::to_string(d_fc_) + "]");
    }
    num::Tape tape;
    num::Var logits = logits_on_tape(tape, tape.input(fc));
    num::Tensor probs = num::elementwise(tape.val(logits), num::EwKind::Sigmoid);
    TopicDistribution out;
    out.onehot.resize(static_cast<std::size_t>(probs.size()));
    for (std::int64_t i = 0; i < probs.size(); ++i) out.onehot[static_cast<std::size_t>(i)] = probs[i] >= 0.5 ? 1 : 0;
    out.probs = std::move(probs);
    return out;
}

ClassifierTrainLog classifier_train(TopicClassifier& clf, const std::vector<num::Tensor>& features,
                                    const std::vector<std::vector<int>>& targets, const ClassifierConfig& cfg) {
    if (features.empty() || features.size() != targets.size()) {
        throw ContractError("classifier_train: features and targets must be non-empty and parallel");
    }
    const int K = clf.n_topics();
    for (const auto& t : targets) {
        if (static_cast<int>(t.size()) != K) {
            throw ContractError("classifier_train: target width " + std::to_string(t.size()) +
                                " does not match n_topics " + std::to_string(K));
        }
    }
    std::vector<num::Tensor> target_tensors;
    for (const auto& t : targets) {
        num::Tensor tt({K});
        for (int i = 0; i < K; ++i) tt[i] = static_cast<double>(t[static_cast<std::size_t>(i)]);
        target_tensors.push_back(std::move(tt));
    }

    num::SgdMomentum sgd({cfg.lr, cfg.momentum});
    num::PlateauScheduler sched(cfg.plateau_patience, cfg.plateau_factor);
    Rng shuffle_rng(cfg.seed + 0x5eedULL);

    const std::size_t n = features.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    auto batch_loss = [&](const std::vector<std::size_t>& idx, bool train) {
        num::Tape tape;
        num::Var total = tape.input_scalar(0.0);
        for (std::size_t i : idx) {
            num::Var logits = clf.logits_on_tape(tape, tape.input(features[i]));
            total = tape.add(total, tape.bce_with_logits(logits, target_tensors[i]));
        }
        num::Var loss = tape.scale(total, 1.0 / static_cast<double>(idx.size()));
        if (train) {
            tape.backward(loss, clf.params());
            sgd.step(clf.params());
        }
        return tape.scalar(loss);
    };

    ClassifierTrainLog log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        if (cfg.full_batch) {
            epoch_loss = batch_loss(order, true);
        } else {
            // Fisher-Yates shuffle between epochs.
            for (std::size_t i = n; i > 1; --i) {
                std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(static_cast<int>(i)));
                std::swap(order[i - 1], order[j]);
            }
            double total = 0.0;
            std::size_t seen = 0;
            for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
                std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
                std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(stop));
                total += batch_loss(idx, true) * static_cast<double>(idx.size());
                seen += idx.size();
            }
            epoch_loss = total / static_cast<double>(seen);
        }
        log.epoch_loss.push_back(epoch_loss);
        log.epoch_lr.push_back(sgd.learning_rate());
        sched.observe(epoch_loss, sgd);
    }
    return log;
}

double f_beta_score(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    if (denom <= 0.0) return 0.0;
    return (1.0 + b2) * precision * recall / denom;
}

Prf eval_prf(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gold, double beta) {
    if (pred.empty() || pred.size() != gold.size()) {
        throw ContractError("eval_prf: prediction and gold lists must be non-empty and equal length");
    }
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != gold[i].size()) {
            throw ContractError("eval_prf: width mismatch at example " + std::to_string(i));
        }
        for (std::size_t k = 0; k < pred[i].size(); ++k) {
            const bool p = pred[i][k] != 0, g = gold[i][k] != 0;
            if (p && g) ++tp;
            if (p && !g) ++fp;
            if (!p && g) ++fn;
        }
    }
    Prf out;
    out.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.f_beta = f_beta_score(out.precision, out.recall, beta);
    return out;
}

} // namespace occap::topics
