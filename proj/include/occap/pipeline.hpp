#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "occap/decoder.hpp"
#include "occap/metrics.hpp"
#include "occap/ordernet.hpp"

namespace occap::pipeline {

// One flat document; full-scale values are the defaults, desk() is the
// small profile used for fast runs and the test suite.
struct PipelineConfig {
    // dimensions
    int d_fc = 2048;
    int d_loc = 512;
    int grid_n = 49;
    int n_topics = 80;
    int d_emb = 1024;
    int d_gru = 1024;
    int d_h = 512;
    int d_word = 256;
    int d_attn = 512;
    int fc_down = 64;
    int mlp_width = 1024;
    int clf_hidden = 512;
    // corpus
    int min_count = 1;
    int max_len = 20;
    int lda_vocab_cap = 5000;
    int lda_iters = 100;
    // topic classifier (SGD + momentum, reduce-on-plateau)
    double clf_lr = 0.1;
    double clf_momentum = 0.9;
    double clf_plateau_factor = 0.2;
    int clf_plateau_patience = 4;
    int clf_epochs = 60;
    // retrieval model
    double emb_lr = 0.001;
    int emb_batch = 128;
    int emb_epochs = 10;
    double margin = 0.05;
    std::string nonneg_map = "squared_l2norm"; // or "abs"
    // decoder
    double dec_lr = 0.001;
    int dec_batch = 128;
    int dec_epochs = 10;
    bool z_after_core = true;
    std::string mode = "t-oe-att";
    // evaluation
    std::string eval_split = "test";
    double f_beta = 2.0;
    int threads = 1;
    std::uint64_t seed = 1;
    // paths
    std::string manifest_path;
    std::string out_dir;

    static PipelineConfig desk();
    void validate() const;
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load_file(const std::filesystem::path& path);
};

enum class Stage { Lda, TopicClf, OrderNet, Decoder, Eval };

Stage stage_from_string(const std::string& s);
std::string stage_to_string(Stage s);

// Stage-relevant config hash; artifacts are content-addressed by it.
std::string stage_hash(Stage stage, const PipelineConfig& cfg);

// Runs one stage, writing artifacts under cfg.out_dir. A stage whose
// artifacts already exist with the same hash is skipped. Missing upstream
// artifacts raise DataError naming the missing stage.
// force = rerun even if artifacts look fresh.
void run_stage(Stage stage, const PipelineConfig& cfg, bool force = false,
               const std::function<void(const std::string&)>& log_line = {});

struct AblationRow {
    std::string mode;
    std::array<double, 4> bleu{0, 0, 0, 0};
    double rouge_l = 0.0;
    double cider = 0.0;
};

// One row per mode, input order preserved; writes ablation.csv/.json.
std::vector<AblationRow> ablation(const PipelineConfig& cfg, const std::vector<std::string>& modes,
                                  const std::function<void(const std::string&)>& log_line = {});

// Helpers shared with the CLI.
struct PreparedCorpus {
    corpus::CorpusManifest manifest;
    corpus::Vocabulary vocab;
    std::vector<corpus::ImageFeatures> features; // manifest image order
};
PreparedCorpus prepare_corpus(const PipelineConfig& cfg);

// Per-image classifier probabilities from the topics stage artifacts.
struct TopicStageOutput {
    std::vector<std::string> image_ids;
    num::Tensor probs; // [n_images x K]
    num::Tensor probs_of(const std::string& image_id) const;
};
TopicStageOutput load_topic_stage(const PipelineConfig& cfg);

ordernet::OrderNetConfig ordernet_config(const PipelineConfig& cfg, int vocab_size);
decoder::DecoderConfig decoder_config(const PipelineConfig& cfg, int vocab_size);

// Retrieval diagnostics on the eval split: image queries over the caption
// gallery, one result per requested k.
nlohmann::json embed_eval(const PipelineConfig& cfg, const std::vector<int>& ks);

// Per-topic-classifier diagnostics on a split.
nlohmann::json topic_eval(const PipelineConfig& cfg, const std::string& split, double beta);

// Caption generation for a split using the trained decoder stage.
struct SampledCaptions {
    std::vector<std::string> image_ids;
    std::vector<corpus::CaptionSequence> sequences;
    std::vector<std::string> captions;
    std::vector<decoder::AttentionTrace> traces;
};
SampledCaptions sample_captions(const PipelineConfig& cfg, const std::string& split);

metrics::EvalReport evaluate_captions(const PipelineConfig& cfg, const std::string& split,
                                      const SampledCaptions& sampled);

// mu sweep over the eval split; rows plus a per-mu metric report.
struct MuSweepOutput {
    std::vector<decoder::MuSweepRow> rows;
    std::vector<std::pair<double, metrics::EvalReport>> reports;
};
MuSweepOutput mu_sweep(const PipelineConfig& cfg, const std::vector<double>& mu_values);

} // namespace occap::pipeline
