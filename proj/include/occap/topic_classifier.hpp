#pragma once

#include <cstdint>
#include <vector>

#include "occap/optim.hpp"
#include "occap/param_store.hpp"
#include "occap/tape.hpp"
#include "occap/tensor.hpp"

namespace occap::topics {

// Per-image topic probabilities and their thresholded multi-label form.
struct TopicDistribution {
    num::Tensor probs;       // [K]
    std::vector<int> onehot; // [K] of {0,1}
};

// 1 iff prob >= 0.1, boundary inclusive.
std::vector<int> threshold_topics(const num::Tensor& probs);

struct ClassifierConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double plateau_factor = 0.2;
    int plateau_patience = 4;
    int epochs = 60;
    std::uint64_t seed = 0;
    bool full_batch = true; // full-batch sweeps ignore example order
    int batch = 32;
};

// Feed-forward multi-label classifier: four ReLU hidden layers and a
// sigmoid prediction layer of width K (five layers in total).
class TopicClassifier {
public:
    TopicClassifier(int d_fc, int n_topics, int hidden_width, std::uint64_t seed);

    num::Var logits_on_tape(num::Tape& tape, num::Var input) const;
    TopicDistribution predict(const num::Tensor& fc) const; // onehot via 0.5

    int input_dim() const { return d_fc_; }
    int n_topics() const { return n_topics_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

private:
    int d_fc_;
    int n_topics_;
    int hidden_width_;
    num::ParamStore params_;
};

struct ClassifierTrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_lr;
};

ClassifierTrainLog classifier_train(TopicClassifier& clf, const std::vector<num::Tensor>& features,
                                    const std::vector<std::vector<int>>& targets, const ClassifierConfig& cfg);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f_beta = 0.0;
};

double f_beta_score(double precision, double recall, double beta);
// Micro-averaged over all (example, label) cells.
Prf eval_prf(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gold, double beta);

} // namespace occap::topics
