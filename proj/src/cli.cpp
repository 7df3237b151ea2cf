#include "occap/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "occap/decoder.hpp"
#include "occap/errors.hpp"
#include "occap/pipeline.hpp"
#include "occap/synth.hpp"

namespace occap::cli {

using nlohmann::json;
using pipeline::PipelineConfig;
using pipeline::Stage;
namespace fs = std::filesystem;

namespace {

void log_to_stderr(const std::string& line) { std::cerr << line << "\n"; }

// Resolution order: full-scale defaults -> --desk profile -> --config file
// -> explicitly passed flags.
struct ConfigBinder {
    CLI::App* cmd = nullptr;
    PipelineConfig staged;
    std::vector<std::pair<std::string, std::function<void(PipelineConfig&, const PipelineConfig&)>>> appliers;
    bool desk = false;
    std::string config_path;

    template <typename T>
    void opt(const std::string& name, T PipelineConfig::*field, const std::string& desc) {
        cmd->add_option(name, staged.*field, desc)->capture_default_str();
        appliers.emplace_back(name,
                              [field](PipelineConfig& dst, const PipelineConfig& src) { dst.*field = src.*field; });
    }

    void bind(CLI::App* sub) {
        cmd = sub;
        cmd->add_flag("--desk", desk, "start from the desk-scale profile instead of full-scale defaults");
        cmd->add_option("--config", config_path, "JSON config file; explicit flags still win");
        cmd->add_option("--manifest", staged.manifest_path, "corpus manifest JSON")->required();
        cmd->add_option("--out", staged.out_dir, "artifact output directory")->required();
        appliers.emplace_back("--manifest", [](PipelineConfig& dst, const PipelineConfig& src) {
            dst.manifest_path = src.manifest_path;
        });
        appliers.emplace_back("--out",
                              [](PipelineConfig& dst, const PipelineConfig& src) { dst.out_dir = src.out_dir; });

        opt("--d-fc", &PipelineConfig::d_fc, "global image feature width");
        opt("--d-loc", &PipelineConfig::d_loc, "spatial feature width per grid cell");
        opt("--grid-n", &PipelineConfig::grid_n, "number of spatial grid cells");
        opt("--topics", &PipelineConfig::n_topics, "number of latent topics");
        opt("--d-emb", &PipelineConfig::d_emb, "order-embedding width");
        opt("--d-gru", &PipelineConfig::d_gru, "caption GRU hidden width");
        opt("--d-h", &PipelineConfig::d_h, "LSTM hidden width");
        opt("--d-word", &PipelineConfig::d_word, "word embedding width");
        opt("--d-attn", &PipelineConfig::d_attn, "attention hidden width");
        opt("--fc-down", &PipelineConfig::fc_down, "downsized fc width concatenated into decoder input");
        opt("--mlp-width", &PipelineConfig::mlp_width, "prediction MLP width");
        opt("--clf-hidden", &PipelineConfig::clf_hidden, "topic classifier hidden width");
        opt("--min-count", &PipelineConfig::min_count, "vocabulary minimum token frequency");
        opt("--max-len", &PipelineConfig::max_len, "caption length cap including specials");
        opt("--lda-vocab-cap", &PipelineConfig::lda_vocab_cap, "LDA vocabulary cap");
        opt("--lda-iters", &PipelineConfig::lda_iters, "Gibbs sweeps");
        opt("--clf-lr", &PipelineConfig::clf_lr, "classifier learning rate");
        opt("--clf-momentum", &PipelineConfig::clf_momentum, "classifier momentum");
        opt("--clf-plateau-factor", &PipelineConfig::clf_plateau_factor, "plateau decay factor");
        opt("--clf-plateau-patience", &PipelineConfig::clf_plateau_patience, "plateau patience in epochs");
        opt("--clf-epochs", &PipelineConfig::clf_epochs, "classifier epochs");
        opt("--emb-lr", &PipelineConfig::emb_lr, "retrieval model learning rate");
        opt("--emb-batch", &PipelineConfig::emb_batch, "retrieval model batch size");
        opt("--emb-epochs", &PipelineConfig::emb_epochs, "retrieval model epochs");
        opt("--margin", &PipelineConfig::margin, "ranking loss margin");
        opt("--nonneg-map", &PipelineConfig::nonneg_map, "squared_l2norm or abs");
        opt("--dec-lr", &PipelineConfig::dec_lr, "decoder learning rate");
        opt("--dec-batch", &PipelineConfig::dec_batch, "decoder batch size");
        opt("--dec-epochs", &PipelineConfig::dec_epochs, "decoder epochs");
        opt("--z-after-core", &PipelineConfig::z_after_core, "context vector uses the fresh core hidden state");
        opt("--mode", &PipelineConfig::mode, "ablation mode: topic, t-oe or t-oe-att");
        opt("--eval-split", &PipelineConfig::eval_split, "split used for evaluation");
        opt("--f-beta", &PipelineConfig::f_beta, "beta for the topic F-measure");
        opt("--threads", &PipelineConfig::threads, "threads for read-only parallel sections");
        opt("--seed", &PipelineConfig::seed, "run seed");
    }

    static PipelineConfig apply_json(PipelineConfig base, const json& j) {
        json merged = base.to_json();
        for (auto it = j.begin(); it != j.end(); ++it) merged[it.key()] = it.value();
        return PipelineConfig::from_json(merged);
    }

    PipelineConfig resolve() const {
        PipelineConfig out = desk ? PipelineConfig::desk() : PipelineConfig{};
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw DataError("cannot open config file '" + config_path + "'");
            json j;
            try {
                in >> j;
            } catch (const json::parse_error& e) {
                throw DataError(std::string("config parse error: ") + e.what());
            }
            out = apply_json(out, j);
        }
        for (const auto& [name, fn] : appliers) {
            if (cmd->count(name)) fn(out, staged);
        }
        out.validate();
        return out;
    }
};

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        try {
            out.push_back(std::stod(csv.substr(pos, comma - pos)));
        } catch (...) {
            throw UsageError("cannot parse '" + csv + "' as a comma-separated number list");
        }
        pos = comma + 1;
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    for (double v : parse_double_list(csv)) out.push_back(static_cast<int>(v));
    return out;
}

std::vector<std::string> parse_string_list(const std::string& csv) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(csv.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"guided-attention image captioning with order embeddings"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic desk-scale corpus");
    corpus::SynthSpec synth_spec;
    std::string synth_out;
    synth->add_option("--images", synth_spec.n_images, "number of images")->capture_default_str();
    synth->add_option("--topics", synth_spec.n_topics, "number of planted topics")->capture_default_str();
    synth->add_option("--vocab", synth_spec.vocab_size, "synthetic vocabulary size")->capture_default_str();
    synth->add_option("--grid", synth_spec.grid_n, "spatial grid cells")->capture_default_str();
    synth->add_option("--d-fc", synth_spec.d_fc, "fc feature width")->capture_default_str();
    synth->add_option("--d-loc", synth_spec.d_loc, "spatial feature width")->capture_default_str();
    synth->add_option("--seed", synth_spec.seed, "generator seed")->capture_default_str();
    synth->add_option("--captions-min", synth_spec.captions_min, "min captions per image")->capture_default_str();
    synth->add_option("--captions-max", synth_spec.captions_max, "max captions per image")->capture_default_str();
    synth->add_option("--noise", synth_spec.noise, "feature noise level")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->callback([&]() {
        corpus::write_synth_corpus(corpus::synth_corpus(synth_spec), synth_out);
        std::cout << (fs::path(synth_out) / "manifest.json").string() << "\n";
    });

    ConfigBinder lda_cfg, clf_cfg, clf_eval_cfg, emb_cfg, emb_eval_cfg, dec_cfg, sample_cfg, eval_cfg, abl_cfg,
        sweep_cfg;

    auto* lda = app.add_subcommand("lda-train", "train the LDA topic model");
    lda_cfg.bind(lda);
    lda->callback([&]() { pipeline::run_stage(Stage::Lda, lda_cfg.resolve(), false, log_to_stderr); });

    auto* clf = app.add_subcommand("topic-train", "train the multi-label topic classifier");
    clf_cfg.bind(clf);
    clf->callback([&]() { pipeline::run_stage(Stage::TopicClf, clf_cfg.resolve(), false, log_to_stderr); });

    auto* clf_eval = app.add_subcommand("topic-eval", "precision/recall/F diagnostics for the topic classifier");
    std::string clf_eval_split = "val";
    clf_eval_cfg.bind(clf_eval);
    clf_eval->add_option("--split", clf_eval_split, "split to evaluate")->capture_default_str();
    clf_eval->callback([&]() {
        PipelineConfig cfg = clf_eval_cfg.resolve();
        std::cout << pipeline::topic_eval(cfg, clf_eval_split, cfg.f_beta).dump(2) << "\n";
    });

    auto* emb = app.add_subcommand("embed-train", "train the order-embedding retrieval model");
    emb_cfg.bind(emb);
    emb->callback([&]() { pipeline::run_stage(Stage::OrderNet, emb_cfg.resolve(), false, log_to_stderr); });

    auto* emb_eval = app.add_subcommand("embed-eval", "caption retrieval recall@k diagnostics");
    std::string k_list = "1,5,10";
    emb_eval_cfg.bind(emb_eval);
    emb_eval->add_option("--k", k_list, "comma-separated k values")->capture_default_str();
    emb_eval->callback([&]() {
        std::cout << pipeline::embed_eval(emb_eval_cfg.resolve(), parse_int_list(k_list)).dump(2) << "\n";
    });

    auto* dec = app.add_subcommand("caption-train", "train the caption decoder");
    dec_cfg.bind(dec);
    dec->callback([&]() { pipeline::run_stage(Stage::Decoder, dec_cfg.resolve(), false, log_to_stderr); });

    auto* sample = app.add_subcommand("caption-sample", "greedy caption sampling");
    std::string sample_split = "test";
    bool sample_trace = false;
    sample_cfg.bind(sample);
    sample->add_option("--split", sample_split, "split to sample")->capture_default_str();
    sample->add_flag("--trace", sample_trace, "export attention traces as CSV");
    sample->callback([&]() {
        PipelineConfig cfg = sample_cfg.resolve();
        pipeline::SampledCaptions out = pipeline::sample_captions(cfg, sample_split);
        fs::path dir = fs::path(cfg.out_dir) / ("samples-" + cfg.mode);
        fs::create_directories(dir);
        json caps = json::array();
        for (std::size_t i = 0; i < out.image_ids.size(); ++i) {
            caps.push_back({{"image_id", out.image_ids[i]}, {"caption", out.captions[i]}});
            if (sample_trace && !out.traces[i].steps.empty()) {
                decoder::write_trace_csv(dir / ("trace_" + out.image_ids[i] + ".csv"), out.traces[i]);
            }
        }
        std::ofstream f(dir / "captions.json");
        f << caps.dump(2) << "\n";
        std::cout << caps.dump(2) << "\n";
    });

    auto* ev = app.add_subcommand("caption-eval", "evaluate generated captions against references");
    eval_cfg.bind(ev);
    ev->callback([&]() {
        PipelineConfig cfg = eval_cfg.resolve();
        pipeline::run_stage(Stage::Eval, cfg, false, log_to_stderr);
        std::ifstream in(fs::path(cfg.out_dir) / ("eval-" + cfg.mode) / "report.json");
        std::cout << in.rdbuf();
    });

    auto* abl = app.add_subcommand("ablate", "run the ablation grid over decoder modes");
    std::string modes_csv = "topic,t-oe,t-oe-att";
    abl_cfg.bind(abl);
    abl->add_option("--modes", modes_csv, "comma-separated mode list")->capture_default_str();
    abl->callback([&]() {
        if (modes_csv.empty()) throw UsageError("ablate: --modes list is empty");
        auto rows = pipeline::ablation(abl_cfg.resolve(), parse_string_list(modes_csv), log_to_stderr);
        for (const auto& r : rows) {
            std::cout << r.mode << " bleu1=" << r.bleu[0] << " bleu4=" << r.bleu[3] << " rouge_l=" << r.rouge_l
                      << " cider=" << r.cider << "\n";
        }
    });

    auto* sweep = app.add_subcommand("mu-sweep", "sample captions at fixed attention-fusion weights");
    std::string mu_csv = "0.3,0.7";
    sweep_cfg.bind(sweep);
    sweep->add_option("--mu", mu_csv, "comma-separated mu values in [0,1]")->capture_default_str();
    sweep->callback([&]() {
        PipelineConfig cfg = sweep_cfg.resolve();
        auto out = pipeline::mu_sweep(cfg, parse_double_list(mu_csv));
        fs::path dir(cfg.out_dir);
        fs::create_directories(dir);
        std::ofstream csv(dir / "mu_sweep.csv");
        csv << "mu,image_id,caption\n";
        for (const auto& row : out.rows) {
            csv << row.mu << "," << row.image_id << ",\"" << row.caption << "\"\n";
        }
        json jm = json::array();
        for (const auto& [mu, report] : out.reports) {
            json entry = metrics::report_to_json(report);
            entry["mu"] = mu;
            jm.push_back(entry);
        }
        std::ofstream mf(dir / "mu_sweep_metrics.json");
        mf << jm.dump(2) << "\n";
        std::cout << jm.dump(2) << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace occap::cli
