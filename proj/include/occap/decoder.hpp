#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "occap/features.hpp"
#include "occap/optim.hpp"
#include "occap/param_store.hpp"
#include "occap/rng.hpp"
#include "occap/tape.hpp"
#include "occap/vocab.hpp"

namespace occap::decoder {

enum class DecoderMode { Topic, TOe, TOeAtt };

DecoderMode mode_from_string(const std::string& s);
std::string mode_to_string(DecoderMode m);

struct DecoderConfig {
    DecoderMode mode = DecoderMode::TOeAtt;
    int d_emb = 16; // guiding input width (order-embedding width)
    int d_fc = 16;
    int d_loc = 16; // must equal d_h in attention mode
    int grid_n = 4;
    int n_topics = 3;
    int d_h = 16; // both LSTMs
    int d_word = 16;
    int d_attn = 16;
    int fc_down = 8;
    int mlp_width = 32;
    int vocab_size = 0;
    int max_len = 20;
    bool z_after_core = true; // context vector from the fresh core hidden state
    std::uint64_t seed = 0;
};

// What the guiding LSTM fuses: order embeddings in the t-oe modes, raw
// fc/topic features (projected internally) in topic mode.
struct Guidance {
    num::Tensor image_vec;
    num::Tensor topic_vec;
};

struct DecoderState {
    num::Tensor h_g, c_g; // guiding LSTM
    num::Tensor h, c;     // core LSTM
    num::Tensor z;        // context vector
    int t = 0;
};

struct AttentionStep {
    std::vector<double> alpha; // [N], sums to 1
    std::vector<double> rho_s; // [d_loc]
    std::vector<double> rho_t; // [d_h]
};

struct AttentionTrace {
    std::vector<AttentionStep> steps;
};

void write_trace_csv(const std::filesystem::path& path, const AttentionTrace& trace);

// Convex combination with lambda_eff = sigmoid(lambda_raw).
num::Tensor fuse_embeddings(const num::Tensor& o_image, const num::Tensor& o_topic, double lambda_raw);

class Decoder {
public:
    explicit Decoder(const DecoderConfig& cfg);

    double lambda_eff() const;
    double mu_eff() const;

    DecoderState init_guiding(const num::Tensor& fused) const;
    // Advances one timestep from a value-level state.
    struct StepResult {
        DecoderState state;
        AttentionStep attention;
        num::Tensor logits;
    };
    StepResult step(const DecoderState& state, int token, const corpus::ImageFeatures& image) const;

    // Greedy decoding (beam width 1); argmax ties go to the smallest id.
    std::pair<corpus::CaptionSequence, AttentionTrace> generate(const corpus::ImageFeatures& image,
                                                                const Guidance& guidance, int max_len,
                                                                std::optional<double> mu_override = {}) const;

    const DecoderConfig& config() const { return cfg_; }
    num::ParamStore& params() { return params_; }
    const num::ParamStore& params() const { return params_; }

    // Tape-level pieces, shared by training and generation.
    struct StepVars {
        num::Var h_g, c_g, h, c, z;
    };
    struct SeqContext {
        num::Var fc_small; // downsized fc features
        num::Var fc_raw;
        num::Var spatial;
    };
    SeqContext make_context(num::Tape& tape, const corpus::ImageFeatures& image) const;
    num::Var fuse_on_tape(num::Tape& tape, const Guidance& guidance) const;
    StepVars init_guiding_on_tape(num::Tape& tape, num::Var fused) const;
    struct StepVarsResult {
        StepVars state;
        num::Var logits;
        num::Var alpha, rho_s, rho_t, att_mix; // valid only in attention mode
        bool has_attention = false;
    };
    StepVarsResult step_on_tape(num::Tape& tape, const StepVars& state, int token, const SeqContext& ctx,
                                std::optional<double> mu_override = {}) const;

private:
    void validate_guidance(const Guidance& g) const;

    DecoderConfig cfg_;
    num::ParamStore params_;
};

struct DecoderExample {
    corpus::ImageFeatures image;
    Guidance guidance;
    corpus::CaptionSequence caption;
    std::string image_id;
};

struct DecoderTrainConfig {
    double lr = 0.001;
    int batch = 8;
    int epochs = 50;
    std::uint64_t seed = 0;
    bool record_traces = false;
};

struct DecoderTrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> lambda_eff;
    std::vector<double> mu_eff;
    std::vector<AttentionStep> traces; // when recording
    std::vector<int> trace_example;    // parallel: example index per trace row
};

// Teacher-forced cross-entropy; caller owns optimizer and shuffle rng so
// runs can resume from checkpoints bit-exactly.
DecoderTrainLog train_decoder(Decoder& dec, const std::vector<DecoderExample>& data, const DecoderTrainConfig& cfg,
                              num::AdamState& adam, Rng& shuffle_rng, int epochs_to_run,
                              const std::function<void(const std::string&)>& log_line = {});

// Teacher-forced mean cross-entropy of one example (tape-level).
num::Var sequence_loss_on_tape(num::Tape& tape, const Decoder& dec, const DecoderExample& ex,
                               std::vector<Decoder::StepVarsResult>* step_out = nullptr);

struct MuSweepRow {
    double mu;
    std::string image_id;
    std::string caption;
};

// Generation-time override of the attention fusion weight.
std::vector<MuSweepRow> mu_sweep(const Decoder& dec, const std::vector<DecoderExample>& eval_set,
                                 const std::vector<double>& mu_values, const corpus::Vocabulary& vocab);

} // namespace occap::decoder
