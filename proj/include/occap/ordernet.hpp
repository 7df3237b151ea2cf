#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "occap/optim.hpp"
#include "occap/param_store.hpp"
#include "occap/rng.hpp"
#include "occap/tape.hpp"
#include "occap/vocab.hpp"

namespace occap::ordernet {

enum class Modality { Image, Topic, Caption };

// How a projection is mapped into the non-negative orthant:
// SquaredL2Norm squares the L2-normalized projection componentwise,
// Abs takes componentwise absolute values of the raw projection.
enum class NonnegMap { SquaredL2Norm, Abs };

struct OrderEmbedding {
    num::Tensor vec;
    Modality modality = Modality::Image;
};

struct OrderNetConfig {
    int d_fc = 16;
    int n_topics = 3;
    int d_emb = 16;
    int d_gru = 16;
    int d_word = 16;
    int vocab_size = 0;
    double margin = 0.05;
    NonnegMap map = NonnegMap::SquaredL2Norm;
    std::uint64_t seed = 0;
};

// The shared embedding space: linear projections per modality, a GRU text
// encoder for captions, all outputs mapped into the non-negative orthant.
class OrderNet {
public:
    explicit OrderNet(const OrderNetConfig& cfg);

    num::Var encode_image_on_tape(num::Tape& tape, num::Var fc) const;
    num::Var encode_topic_on_tape(num::Tape& tape, num::Var probs) const;
    num::Var encode_caption_on_tape(num::Tape& tape, const corpus::CaptionSequence& caption) const;

    OrderEmbedding encode_image(const num::Tensor& fc) const;
    OrderEmbedding encode_topic(const num::Tensor& probs) const;
    OrderEmbedding encode_caption(const corpus::CaptionSequence& caption) const;

    const OrderNetConfig& config() const { return cfg_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

private:
    num::Var nonneg(num::Tape& tape, num::Var projected) const;
    num::Var gru_last_hidden(num::Tape& tape, const corpus::CaptionSequence& caption) const;

    OrderNetConfig cfg_;
    num::ParamStore params_;
};

// S(x, y) = -||max(0, y - x)||^2; zero iff x dominates y componentwise.
double order_similarity(const num::Tensor& x, const num::Tensor& y);
double order_similarity(const OrderEmbedding& x, const OrderEmbedding& y);
num::Var order_similarity_on_tape(num::Tape& tape, num::Var x, num::Var y);

// Pairwise ranking loss with shared contrastive lists.
double pair_loss(const std::vector<std::pair<num::Tensor, num::Tensor>>& positives,
                 const std::vector<num::Tensor>& negatives_x, const std::vector<num::Tensor>& negatives_y,
                 double alpha);

struct TripleExample {
    num::Tensor fc;          // [d_fc]
    num::Tensor topic_probs; // [n_topics]
    corpus::CaptionSequence caption;
    std::string image_id;
};

// Three-way hierarchy loss over a batch with in-batch negatives.
struct EmbeddingTriple {
    num::Var image, caption, topic;
};
num::Var total_loss_from_embeddings(num::Tape& tape, const std::vector<EmbeddingTriple>& batch, double alpha);
num::Var total_loss_on_tape(num::Tape& tape, const OrderNet& net, const std::vector<TripleExample>& batch,
                            double alpha);
double total_loss(const OrderNet& net, const std::vector<TripleExample>& batch, double alpha);

struct OrderNetTrainConfig {
    double lr = 0.001;
    int batch = 8;
    int epochs = 30;
    std::uint64_t seed = 0;
};

struct OrderNetTrainLog {
    std::vector<double> epoch_loss;
};

// Caller owns optimizer and shuffle rng so training can resume from a
// checkpoint bit-exactly. Parameters and moments are rounded through f32 at
// every epoch boundary to match checkpoint precision.
OrderNetTrainLog train_ordernet(OrderNet& net, const std::vector<TripleExample>& data,
                                const OrderNetTrainConfig& cfg, num::AdamState& adam, Rng& shuffle_rng,
                                int epochs_to_run);

// Fraction of queries whose gold item ranks in the top k by descending
// similarity; ties broken by gallery index.
double recall_at_k(const std::vector<num::Tensor>& queries, const std::vector<num::Tensor>& gallery,
                   const std::map<int, std::set<int>>& gold, int k);

} // namespace occap::ordernet
