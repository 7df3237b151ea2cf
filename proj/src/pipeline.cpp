#include "occap/pipeline.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "occap/checkpoint.hpp"
#include "occap/errors.hpp"
#include "occap/features.hpp"
#include "occap/lda.hpp"
#include "occap/synth.hpp"
#include "occap/topic_classifier.hpp"

namespace occap::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig PipelineConfig::desk() {
    PipelineConfig c;
    c.d_fc = 16;
    c.d_loc = 16;
    c.grid_n = 4;
    c.n_topics = 3;
    c.d_emb = 16;
    c.d_gru = 16;
    c.d_h = 16;
    c.d_word = 8;
    c.d_attn = 16;
    c.fc_down = 8;
    c.mlp_width = 32;
    c.clf_hidden = 16;
    c.lda_iters = 200;
    c.clf_epochs = 60;
    c.emb_lr = 0.01;
    c.emb_batch = 8;
    c.emb_epochs = 60;
    c.dec_lr = 0.01;
    c.dec_batch = 8;
    c.dec_epochs = 80;
    return c;
}

void PipelineConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw UsageError(std::string("config: ") + name + " must be >= 1");
    };
    positive(d_fc, "d_fc");
    positive(d_loc, "d_loc");
    positive(grid_n, "grid_n");
    positive(n_topics, "n_topics");
    positive(d_emb, "d_emb");
    positive(d_gru, "d_gru");
    positive(d_h, "d_h");
    positive(d_word, "d_word");
    positive(d_attn, "d_attn");
    positive(fc_down, "fc_down");
    positive(mlp_width, "mlp_width");
    positive(clf_hidden, "clf_hidden");
    positive(min_count, "min_count");
    positive(lda_iters, "lda_iters");
    positive(lda_vocab_cap, "lda_vocab_cap");
    positive(threads, "threads");
    if (max_len < 2) throw UsageError("config: max_len must be >= 2");
    if (margin <= 0.0) throw UsageError("config: margin must be positive");
    decoder::mode_from_string(mode); // throws UsageError on unknown modes
    if (nonneg_map != "squared_l2norm" && nonneg_map != "abs") {
        throw UsageError("config: nonneg_map must be squared_l2norm or abs");
    }
    if (eval_split != "train" && eval_split != "val" && eval_split != "test") {
        throw UsageError("config: eval_split must be train, val or test");
    }
}

json PipelineConfig::to_json() const {
    json j;
    j["d_fc"] = d_fc;
    j["d_loc"] = d_loc;
    j["grid_n"] = grid_n;
    j["n_topics"] = n_topics;
    j["d_emb"] = d_emb;
    j["d_gru"] = d_gru;
    j["d_h"] = d_h;
    j["d_word"] = d_word;
    j["d_attn"] = d_attn;
    j["fc_down"] = fc_down;
    j["mlp_width"] = mlp_width;
    j["clf_hidden"] = clf_hidden;
    j["min_count"] = min_count;
    j["max_len"] = max_len;
    j["lda_vocab_cap"] = lda_vocab_cap;
    j["lda_iters"] = lda_iters;
    j["clf_lr"] = clf_lr;
    j["clf_momentum"] = clf_momentum;
    j["clf_plateau_factor"] = clf_plateau_factor;
    j["clf_plateau_patience"] = clf_plateau_patience;
    j["clf_epochs"] = clf_epochs;
    j["emb_lr"] = emb_lr;
    j["emb_batch"] = emb_batch;
    j["emb_epochs"] = emb_epochs;
    j["margin"] = margin;
    j["nonneg_map"] = nonneg_map;
    j["dec_lr"] = dec_lr;
    j["dec_batch"] = dec_batch;
    j["dec_epochs"] = dec_epochs;
    j["z_after_core"] = z_after_core;
    j["mode"] = mode;
    j["eval_split"] = eval_split;
    j["f_beta"] = f_beta;
    j["threads"] = threads;
    j["seed"] = seed;
    j["manifest"] = manifest_path;
    j["out_dir"] = out_dir;
    return j;
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("d_fc", c.d_fc);
    get("d_loc", c.d_loc);
    get("grid_n", c.grid_n);
    get("n_topics", c.n_topics);
    get("d_emb", c.d_emb);
    get("d_gru", c.d_gru);
    get("d_h", c.d_h);
    get("d_word", c.d_word);
    get("d_attn", c.d_attn);
    get("fc_down", c.fc_down);
    get("mlp_width", c.mlp_width);
    get("clf_hidden", c.clf_hidden);
    get("min_count", c.min_count);
    get("max_len", c.max_len);
    get("lda_vocab_cap", c.lda_vocab_cap);
    get("lda_iters", c.lda_iters);
    get("clf_lr", c.clf_lr);
    get("clf_momentum", c.clf_momentum);
    get("clf_plateau_factor", c.clf_plateau_factor);
    get("clf_plateau_patience", c.clf_plateau_patience);
    get("clf_epochs", c.clf_epochs);
    get("emb_lr", c.emb_lr);
    get("emb_batch", c.emb_batch);
    get("emb_epochs", c.emb_epochs);
    get("margin", c.margin);
    get("nonneg_map", c.nonneg_map);
    get("dec_lr", c.dec_lr);
    get("dec_batch", c.dec_batch);
    get("dec_epochs", c.dec_epochs);
    get("z_after_core", c.z_after_core);
    get("mode", c.mode);
    get("eval_split", c.eval_split);
    get("f_beta", c.f_beta);
    get("threads", c.threads);
    get("seed", c.seed);
    get("manifest", c.manifest_path);
    get("out_dir", c.out_dir);
    return c;
}

PipelineConfig PipelineConfig::load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError(std::string("config parse error: ") + e.what());
    }
    return from_json(j);
}

Stage stage_from_string(const std::string& s) {
    if (s == "lda") return Stage::Lda;
    if (s == "topic-clf") return Stage::TopicClf;
    if (s == "ordernet") return Stage::OrderNet;
    if (s == "decoder") return Stage::Decoder;
    if (s == "eval") return Stage::Eval;
    throw UsageError("unknown stage '" + s + "'");
}

std::string stage_to_string(Stage s) {
    switch (s) {
    case Stage::Lda: return "lda";
    case Stage::TopicClf: return "topic-clf";
    case Stage::OrderNet: return "ordernet";
    case Stage::Decoder: return "decoder";
    case Stage::Eval: return "eval";
    }
    return "?";
}

namespace {

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json stage_keys(Stage stage, const PipelineConfig& cfg) {
    json j;
    j["stage"] = stage_to_string(stage);
    j["manifest"] = cfg.manifest_path;
    j["seed"] = cfg.seed;
    switch (stage) {
    case Stage::Lda:
        j["n_topics"] = cfg.n_topics;
        j["lda_iters"] = cfg.lda_iters;
        j["lda_vocab_cap"] = cfg.lda_vocab_cap;
        break;
    case Stage::TopicClf:
        j["upstream"] = stage_keys(Stage::Lda, cfg);
        j["d_fc"] = cfg.d_fc;
        j["clf_hidden"] = cfg.clf_hidden;
        j["clf_lr"] = cfg.clf_lr;
        j["clf_momentum"] = cfg.clf_momentum;
        j["clf_plateau_factor"] = cfg.clf_plateau_factor;
        j["clf_plateau_patience"] = cfg.clf_plateau_patience;
        j["clf_epochs"] = cfg.clf_epochs;
        break;
    case Stage::OrderNet:
        j["upstream"] = stage_keys(Stage::TopicClf, cfg);
        j["d_emb"] = cfg.d_emb;
        j["d_gru"] = cfg.d_gru;
        j["d_word"] = cfg.d_word;
        j["min_count"] = cfg.min_count;
        j["max_len"] = cfg.max_len;
        j["margin"] = cfg.margin;
        j["nonneg_map"] = cfg.nonneg_map;
        j["emb_lr"] = cfg.emb_lr;
        j["emb_batch"] = cfg.emb_batch;
        j["emb_epochs"] = cfg.emb_epochs;
        break;
    case Stage::Decoder:
        j["upstream"] = cfg.mode == "topic" ? stage_keys(Stage::TopicClf, cfg) : stage_keys(Stage::OrderNet, cfg);
        j["mode"] = cfg.mode;
        j["d_loc"] = cfg.d_loc;
        j["grid_n"] = cfg.grid_n;
        j["d_h"] = cfg.d_h;
        j["d_word"] = cfg.d_word;
        j["d_attn"] = cfg.d_attn;
        j["fc_down"] = cfg.fc_down;
        j["mlp_width"] = cfg.mlp_width;
        j["dec_lr"] = cfg.dec_lr;
        j["dec_batch"] = cfg.dec_batch;
        j["dec_epochs"] = cfg.dec_epochs;
        j["z_after_core"] = cfg.z_after_core;
        j["min_count"] = cfg.min_count;
        j["max_len"] = cfg.max_len;
        break;
    case Stage::Eval:
        j["upstream"] = stage_keys(Stage::Decoder, cfg);
        j["eval_split"] = cfg.eval_split;
        break;
    }
    return j;
}

fs::path stage_dir(Stage stage, const PipelineConfig& cfg) {
    fs::path out(cfg.out_dir);
    switch (stage) {
    case Stage::Lda: return out / "lda";
    case Stage::TopicClf: return out / "topics";
    case Stage::OrderNet: return out / "ordernet";
    case Stage::Decoder: return out / ("decoder-" + cfg.mode);
    case Stage::Eval: return out / ("eval-" + cfg.mode);
    }
    throw ContractError("bad stage");
}

bool stage_fresh(Stage stage, const PipelineConfig& cfg) {
    fs::path meta = stage_dir(stage, cfg) / "stage.json";
    std::ifstream in(meta);
    if (!in) return false;
    json j;
    try {
        in >> j;
    } catch (...) {
        return false;
    }
    return j.value("hash", "") == stage_hash(stage, cfg);
}

void write_stage_meta(Stage stage, const PipelineConfig& cfg) {
    json j;
    j["stage"] = stage_to_string(stage);
    j["hash"] = stage_hash(stage, cfg);
    j["seed"] = cfg.seed;
    std::ofstream out(stage_dir(stage, cfg) / "stage.json");
    out << j.dump(2) << "\n";
}

void require_stage(Stage stage, const PipelineConfig& cfg) {
    fs::path meta = stage_dir(stage, cfg) / "stage.json";
    if (!fs::exists(meta)) {
        throw DataError("stage '" + stage_to_string(stage) + "' artifacts are missing (run it first; expected " +
                        meta.string() + ")");
    }
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const int workers = std::min(threads, n);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<int> split_image_indices(const corpus::CorpusManifest& m, const std::string& split) {
    std::vector<int> out;
    for (std::size_t i = 0; i < m.images.size(); ++i) {
        if (m.images[i].split == split) out.push_back(static_cast<int>(i));
    }
    return out;
}

} // namespace

std::string stage_hash(Stage stage, const PipelineConfig& cfg) {
    return fnv1a_hex(stage_keys(stage, cfg).dump());
}

PreparedCorpus prepare_corpus(const PipelineConfig& cfg) {
    PreparedCorpus pc;
    pc.manifest = corpus::load_manifest(cfg.manifest_path);
    pc.vocab = corpus::build_vocab(pc.manifest, cfg.min_count);
    pc.features.resize(pc.manifest.images.size());
    parallel_for(static_cast<int>(pc.manifest.images.size()), cfg.threads, [&](int i) {
        pc.features[static_cast<std::size_t>(i)] = corpus::load_image_features(
            pc.manifest.images[static_cast<std::size_t>(i)], pc.manifest.base_dir, cfg.d_fc, cfg.grid_n, cfg.d_loc);
    });
    return pc;
}

TopicStageOutput load_topic_stage(const PipelineConfig& cfg) {
    fs::path dir = stage_dir(Stage::TopicClf, cfg);
    require_stage(Stage::TopicClf, cfg);
    TopicStageOutput out;
    std::ifstream in(dir / "image_ids.json");
    if (!in) throw DataError("topics stage is missing image_ids.json");
    json j;
    in >> j;
    out.image_ids = j.get<std::vector<std::string>>();
    out.probs = corpus::read_ocf(dir / "topic_probs.ocf");
    return out;
}

num::Tensor TopicStageOutput::probs_of(const std::string& image_id) const {
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
        if (image_ids[i] == image_id) {
            const int k = probs.cols();
            num::Tensor row({k});
            for (int c = 0; c < k; ++c) row[c] = probs.at(static_cast<int>(i), c);
            return row;
        }
    }
    throw DataError("topics stage has no probabilities for image '" + image_id + "'");
}

ordernet::OrderNetConfig ordernet_config(const PipelineConfig& cfg, int vocab_size) {
    ordernet::OrderNetConfig oc;
    oc.d_fc = cfg.d_fc;
    oc.n_topics = cfg.n_topics;
    oc.d_emb = cfg.d_emb;
    oc.d_gru = cfg.d_gru;
    oc.d_word = cfg.d_word;
    oc.vocab_size = vocab_size;
    oc.margin = cfg.margin;
    oc.map = cfg.nonneg_map == "abs" ? ordernet::NonnegMap::Abs : ordernet::NonnegMap::SquaredL2Norm;
    oc.seed = cfg.seed;
    return oc;
}

decoder::DecoderConfig decoder_config(const PipelineConfig& cfg, int vocab_size) {
    decoder::DecoderConfig dc;
    dc.mode = decoder::mode_from_string(cfg.mode);
    dc.d_emb = cfg.d_emb;
    dc.d_fc = cfg.d_fc;
    dc.d_loc = cfg.d_loc;
    dc.grid_n = cfg.grid_n;
    dc.n_topics = cfg.n_topics;
    dc.d_h = cfg.d_h;
    dc.d_word = cfg.d_word;
    dc.d_attn = cfg.d_attn;
    dc.fc_down = cfg.fc_down;
    dc.mlp_width = cfg.mlp_width;
    dc.vocab_size = vocab_size;
    dc.max_len = cfg.max_len;
    dc.z_after_core = cfg.z_after_core;
    dc.seed = cfg.seed;
    return dc;
}

namespace {

void run_lda_stage(const PipelineConfig& cfg) {
    corpus::CorpusManifest manifest = corpus::load_manifest(cfg.manifest_path);
    topics::LdaConfig lc;
    lc.n_topics = cfg.n_topics;
    lc.iters = cfg.lda_iters;
    lc.vocab_cap = cfg.lda_vocab_cap;
    lc.seed = cfg.seed;
    topics::LdaModel model = topics::lda_train(manifest, lc);
    topics::save_lda(model, stage_dir(Stage::Lda, cfg));
}

void run_topic_clf_stage(const PipelineConfig& cfg, const std::function<void(const std::string&)>& log_line) {
    require_stage(Stage::Lda, cfg);
    topics::LdaModel lda = topics::load_lda(stage_dir(Stage::Lda, cfg));
    PreparedCorpus pc = prepare_corpus(cfg);

    std::vector<num::Tensor> train_feats;
    std::vector<std::vector<int>> train_targets;
    for (std::size_t i = 0; i < pc.manifest.images.size(); ++i) {
        if (pc.manifest.images[i].split != "train") continue;
        const int d = lda.doc_index(pc.manifest.images[i].image_id);
        if (d < 0) throw DataError("lda stage has no document for image '" + pc.manifest.images[i].image_id + "'");
        num::Tensor row({lda.n_topics});
        for (int k = 0; k < lda.n_topics; ++k) row[k] = lda.doc_topic.at(d, k);
        train_feats.push_back(pc.features[i].fc);
        train_targets.push_back(topics::threshold_topics(row));
    }
    if (train_feats.empty()) throw DataError("topic-clf stage: no training images in the manifest");

    topics::TopicClassifier clf(cfg.d_fc, cfg.n_topics, cfg.clf_hidden, cfg.seed);
    topics::ClassifierConfig cc;
    cc.lr = cfg.clf_lr;
    cc.momentum = cfg.clf_momentum;
    cc.plateau_factor = cfg.clf_plateau_factor;
    cc.plateau_patience = cfg.clf_plateau_patience;
    cc.epochs = cfg.clf_epochs;
    cc.seed = cfg.seed;
    auto log = topics::classifier_train(clf, train_feats, train_targets, cc);
    if (log_line) {
        for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "stage=topic-clf epoch=%zu loss=%.6f lr=%.6f", e, log.epoch_loss[e],
                          log.epoch_lr[e]);
            log_line(buf);
        }
    }

    fs::path dir = stage_dir(Stage::TopicClf, cfg);
    fs::create_directories(dir);
    ckpt::save(dir / "clf", clf.params(), nullptr, {{"d_fc", cfg.d_fc}, {"n_topics", cfg.n_topics}});

    num::Tensor probs({static_cast<int>(pc.manifest.images.size()), cfg.n_topics});
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pc.manifest.images.size(); ++i) {
        topics::TopicDistribution dist = clf.predict(pc.features[i].fc);
        for (int k = 0; k < cfg.n_topics; ++k) probs.at(static_cast<int>(i), k) = dist.probs[k];
        ids.push_back(pc.manifest.images[i].image_id);
    }
    corpus::write_ocf(dir / "topic_probs.ocf", probs);
    std::ofstream out(dir / "image_ids.json");
    out << json(ids).dump(2) << "\n";
}

std::vector<ordernet::TripleExample> build_triples(const PreparedCorpus& pc, const TopicStageOutput& topics_out,
                                                   const PipelineConfig& cfg, const std::string& split) {
    std::vector<ordernet::TripleExample> out;
    for (const auto& ann : pc.manifest.annotations) {
        const corpus::ImageEntry* im = pc.manifest.find_image(ann.image_id);
        if (!im || im->split != split) continue;
        std::size_t idx = 0;
        for (; idx < pc.manifest.images.size(); ++idx) {
            if (pc.manifest.images[idx].image_id == ann.image_id) break;
        }
        ordernet::TripleExample ex;
        ex.fc = pc.features[idx].fc;
        ex.topic_probs = topics_out.probs_of(ann.image_id);
        ex.caption = corpus::encode_caption(ann.caption, pc.vocab, cfg.max_len);
        ex.image_id = ann.image_id;
        out.push_back(std::move(ex));
    }
    return out;
}

void run_ordernet_stage(const PipelineConfig& cfg, const std::function<void(const std::string&)>& log_line) {
    require_stage(Stage::TopicClf, cfg);
    PreparedCorpus pc = prepare_corpus(cfg);
    TopicStageOutput topics_out = load_topic_stage(cfg);
    auto triples = build_triples(pc, topics_out, cfg, "train");
    if (triples.size() < 2) throw DataError("ordernet stage: needs at least 2 training caption pairs");

    ordernet::OrderNet net(ordernet_config(cfg, pc.vocab.size()));
    ordernet::OrderNetTrainConfig tc;
    tc.lr = cfg.emb_lr;
    tc.batch = cfg.emb_batch;
    tc.seed = cfg.seed;
    num::AdamState adam;
    Rng shuffle(cfg.seed);
    auto log = ordernet::train_ordernet(net, triples, tc, adam, shuffle, cfg.emb_epochs);
    if (log_line) {
        for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "stage=ordernet epoch=%zu loss=%.6f", e, log.epoch_loss[e]);
            log_line(buf);
        }
    }
    fs::path dir = stage_dir(Stage::OrderNet, cfg);
    fs::create_directories(dir);
    ckpt::save(dir / "ckpt", net.params(), &adam,
               {{"epochs_done", cfg.emb_epochs}, {"rng_state", shuffle.state()}, {"vocab_size", pc.vocab.size()}});
}

ordernet::OrderNet load_ordernet(const PipelineConfig& cfg, int vocab_size) {
    require_stage(Stage::OrderNet, cfg);
    ordernet::OrderNet net(ordernet_config(cfg, vocab_size));
    ckpt::load(stage_dir(Stage::OrderNet, cfg) / "ckpt", net.params(), nullptr);
    return net;
}

std::vector<decoder::DecoderExample> build_decoder_examples(const PreparedCorpus& pc,
                                                            const TopicStageOutput& topics_out,
                                                            const ordernet::OrderNet* net,
                                                            const PipelineConfig& cfg, const std::string& split) {
    const bool raw_mode = cfg.mode == "topic";
    std::vector<decoder::DecoderExample> out;
    // one guidance pair per image, reused across its captions
    std::map<std::string, decoder::Guidance> guidance;
    for (std::size_t i = 0; i < pc.manifest.images.size(); ++i) {
        const auto& im = pc.manifest.images[i];
        if (im.split != split) continue;
        decoder::Guidance g;
        num::Tensor probs = topics_out.probs_of(im.image_id);
        if (raw_mode) {
            g.image_vec = pc.features[i].fc;
            g.topic_vec = probs;
        } else {
            g.image_vec = net->encode_image(pc.features[i].fc).vec;
            g.topic_vec = net->encode_topic(probs).vec;
        }
        guidance[im.image_id] = std::move(g);
    }
    for (const auto& ann : pc.manifest.annotations) {
        auto git = guidance.find(ann.image_id);
        if (git == guidance.end()) continue;
        std::size_t idx = 0;
        for (; idx < pc.manifest.images.size(); ++idx) {
            if (pc.manifest.images[idx].image_id == ann.image_id) break;
        }
        decoder::DecoderExample ex;
        ex.image = pc.features[idx];
        ex.guidance = git->second;
        ex.caption = corpus::encode_caption(ann.caption, pc.vocab, cfg.max_len);
        ex.image_id = ann.image_id;
        out.push_back(std::move(ex));
    }
    return out;
}

void run_decoder_stage(const PipelineConfig& cfg, const std::function<void(const std::string&)>& log_line) {
    require_stage(Stage::TopicClf, cfg);
    PreparedCorpus pc = prepare_corpus(cfg);
    TopicStageOutput topics_out = load_topic_stage(cfg);

    std::optional<ordernet::OrderNet> net;
    if (cfg.mode != "topic") net.emplace(load_ordernet(cfg, pc.vocab.size()));

    auto examples = build_decoder_examples(pc, topics_out, net ? &*net : nullptr, cfg, "train");
    if (examples.empty()) throw DataError("decoder stage: no training captions");

    decoder::Decoder dec(decoder_config(cfg, pc.vocab.size()));
    decoder::DecoderTrainConfig tc;
    tc.lr = cfg.dec_lr;
    tc.batch = cfg.dec_batch;
    tc.seed = cfg.seed;
    num::AdamState adam;
    Rng shuffle(cfg.seed);
    auto log = decoder::train_decoder(dec, examples, tc, adam, shuffle, cfg.dec_epochs, log_line);

    fs::path dir = stage_dir(Stage::Decoder, cfg);
    fs::create_directories(dir);
    ckpt::save(dir / "ckpt", dec.params(), &adam,
               {{"epochs_done", cfg.dec_epochs}, {"rng_state", shuffle.state()}, {"vocab_size", pc.vocab.size()}});
    std::ofstream csv(dir / "train_log.csv");
    csv << "epoch,loss,lambda_eff,mu_eff\n";
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
        csv << e << "," << log.epoch_loss[e] << "," << log.lambda_eff[e] << "," << log.mu_eff[e] << "\n";
    }
}

decoder::Decoder load_decoder(const PipelineConfig& cfg, int vocab_size) {
    require_stage(Stage::Decoder, cfg);
    decoder::Decoder dec(decoder_config(cfg, vocab_size));
    ckpt::load(stage_dir(Stage::Decoder, cfg) / "ckpt", dec.params(), nullptr);
    return dec;
}

void run_eval_stage(const PipelineConfig& cfg) {
    require_stage(Stage::Decoder, cfg);
    SampledCaptions sampled = sample_captions(cfg, cfg.eval_split);
    metrics::EvalReport report = evaluate_captions(cfg, cfg.eval_split, sampled);

    fs::path dir = stage_dir(Stage::Eval, cfg);
    fs::create_directories(dir);
    json caps = json::array();
    for (std::size_t i = 0; i < sampled.image_ids.size(); ++i) {
        caps.push_back({{"image_id", sampled.image_ids[i]}, {"caption", sampled.captions[i]}});
    }
    std::ofstream cf(dir / "captions.json");
    cf << caps.dump(2) << "\n";
    std::ofstream rf(dir / "report.json");
    rf << metrics::report_to_json(report).dump(2) << "\n";
}

} // namespace

void run_stage(Stage stage, const PipelineConfig& cfg, bool force,
               const std::function<void(const std::string&)>& log_line) {
    cfg.validate();
    if (cfg.out_dir.empty()) throw UsageError("run_stage: out_dir is not set");
    if (!force && stage_fresh(stage, cfg)) {
        if (log_line) log_line("stage=" + stage_to_string(stage) + " status=fresh");
        return;
    }
    fs::create_directories(stage_dir(stage, cfg));
    switch (stage) {
    case Stage::Lda: run_lda_stage(cfg); break;
    case Stage::TopicClf: run_topic_clf_stage(cfg, log_line); break;
    case Stage::OrderNet: run_ordernet_stage(cfg, log_line); break;
    case Stage::Decoder: run_decoder_stage(cfg, log_line); break;
    case Stage::Eval: run_eval_stage(cfg); break;
    }
    write_stage_meta(stage, cfg);
    if (log_line) log_line("stage=" + stage_to_string(stage) + " status=done");
}

SampledCaptions sample_captions(const PipelineConfig& cfg, const std::string& split) {
    require_stage(Stage::Decoder, cfg);
    PreparedCorpus pc = prepare_corpus(cfg);
    TopicStageOutput topics_out = load_topic_stage(cfg);
    std::optional<ordernet::OrderNet> net;
    if (cfg.mode != "topic") net.emplace(load_ordernet(cfg, pc.vocab.size()));
    decoder::Decoder dec = load_decoder(cfg, pc.vocab.size());

    std::vector<int> indices = split_image_indices(pc.manifest, split);
    if (indices.empty()) throw DataError("no images in split '" + split + "'");

    SampledCaptions out;
    out.image_ids.resize(indices.size());
    out.sequences.resize(indices.size());
    out.captions.resize(indices.size());
    out.traces.resize(indices.size());
    parallel_for(static_cast<int>(indices.size()), cfg.threads, [&](int i) {
        const int img = indices[static_cast<std::size_t>(i)];
        const auto& entry = pc.manifest.images[static_cast<std::size_t>(img)];
        decoder::Guidance g;
        num::Tensor probs = topics_out.probs_of(entry.image_id);
        if (cfg.mode == "topic") {
            g.image_vec = pc.features[static_cast<std::size_t>(img)].fc;
            g.topic_vec = probs;
        } else {
            g.image_vec = net->encode_image(pc.features[static_cast<std::size_t>(img)].fc).vec;
            g.topic_vec = net->encode_topic(probs).vec;
        }
        auto [seq, trace] = dec.generate(pc.features[static_cast<std::size_t>(img)], g, cfg.max_len);
        out.image_ids[static_cast<std::size_t>(i)] = entry.image_id;
        out.sequences[static_cast<std::size_t>(i)] = seq;
        out.captions[static_cast<std::size_t>(i)] = corpus::decode_caption(seq, pc.vocab);
        out.traces[static_cast<std::size_t>(i)] = trace;
    });
    return out;
}

metrics::EvalReport evaluate_captions(const PipelineConfig& cfg, const std::string& split,
                                      const SampledCaptions& sampled) {
    corpus::CorpusManifest manifest = corpus::load_manifest(cfg.manifest_path);
    std::vector<metrics::TokenList> cands;
    std::vector<std::vector<metrics::TokenList>> refs;
    for (std::size_t i = 0; i < sampled.image_ids.size(); ++i) {
        std::vector<metrics::TokenList> image_refs;
        for (const auto& cap : manifest.captions_of(sampled.image_ids[i])) {
            image_refs.push_back(corpus::tokenize(cap));
        }
        if (image_refs.empty()) continue; // images without captions cannot be scored
        cands.push_back(corpus::tokenize(sampled.captions[i]));
        refs.push_back(std::move(image_refs));
    }
    if (cands.empty()) throw DataError("evaluate: split '" + split + "' has no referenced images");
    return metrics::evaluate(cands, refs, sampled.image_ids);
}

std::vector<AblationRow> ablation(const PipelineConfig& base, const std::vector<std::string>& modes,
                                  const std::function<void(const std::string&)>& log_line) {
    if (modes.empty()) throw UsageError("ablation: modes list is empty");
    for (const auto& m : modes) decoder::mode_from_string(m);

    run_stage(Stage::Lda, base, false, log_line);
    run_stage(Stage::TopicClf, base, false, log_line);
    bool needs_embeddings = false;
    for (const auto& m : modes) needs_embeddings = needs_embeddings || m != "topic";
    if (needs_embeddings) run_stage(Stage::OrderNet, base, false, log_line);

    std::vector<AblationRow> rows;
    for (const auto& m : modes) {
        PipelineConfig cfg = base;
        cfg.mode = m;
        run_stage(Stage::Decoder, cfg, false, log_line);
        run_stage(Stage::Eval, cfg, false, log_line);
        std::ifstream in(stage_dir(Stage::Eval, cfg) / "report.json");
        json report;
        in >> report;
        AblationRow row;
        row.mode = m;
        row.bleu = {report.at("bleu1").get<double>(), report.at("bleu2").get<double>(),
                    report.at("bleu3").get<double>(), report.at("bleu4").get<double>()};
        row.rouge_l = report.at("rouge_l").get<double>();
        row.cider = report.at("cider").get<double>();
        rows.push_back(row);
    }

    fs::path out(base.out_dir);
    std::ofstream csv(out / "ablation.csv");
    csv << "mode,bleu1,bleu2,bleu3,bleu4,rouge_l,cider\n";
    json jrows = json::array();
    for (const auto& r : rows) {
        csv << r.mode << "," << r.bleu[0] << "," << r.bleu[1] << "," << r.bleu[2] << "," << r.bleu[3] << ","
            << r.rouge_l << "," << r.cider << "\n";
        jrows.push_back({{"mode", r.mode},
                         {"bleu1", r.bleu[0]},
                         {"bleu2", r.bleu[1]},
                         {"bleu3", r.bleu[2]},
                         {"bleu4", r.bleu[3]},
                         {"rouge_l", r.rouge_l},
                         {"cider", r.cider}});
    }
    std::ofstream jf(out / "ablation.json");
    jf << jrows.dump(2) << "\n";
    return rows;
}

json embed_eval(const PipelineConfig& cfg, const std::vector<int>& ks) {
    if (ks.empty()) throw UsageError("embed-eval: no k values given");
    PreparedCorpus pc = prepare_corpus(cfg);
    TopicStageOutput topics_out = load_topic_stage(cfg);
    ordernet::OrderNet net = load_ordernet(cfg, pc.vocab.size());

    std::vector<int> indices = split_image_indices(pc.manifest, cfg.eval_split);
    if (indices.empty()) throw DataError("no images in split '" + cfg.eval_split + "'");

    std::vector<num::Tensor> queries;
    std::vector<num::Tensor> gallery;
    std::map<int, std::set<int>> gold;
    for (std::size_t q = 0; q < indices.size(); ++q) {
        const auto& entry = pc.manifest.images[static_cast<std::size_t>(indices[q])];
        queries.push_back(net.encode_image(pc.features[static_cast<std::size_t>(indices[q])].fc).vec);
        for (const auto& cap : pc.manifest.captions_of(entry.image_id)) {
            gallery.push_back(net.encode_caption(corpus::encode_caption(cap, pc.vocab, cfg.max_len)).vec);
            gold[static_cast<int>(q)].insert(static_cast<int>(gallery.size()) - 1);
        }
        if (!gold.count(static_cast<int>(q))) {
            throw DataError("embed-eval: image '" + entry.image_id + "' has no captions");
        }
    }
    json out;
    for (int k : ks) {
        out["r@" + std::to_string(k)] = ordernet::recall_at_k(queries, gallery, gold, k);
    }
    return out;
}

json topic_eval(const PipelineConfig& cfg, const std::string& split, double beta) {
    require_stage(Stage::Lda, cfg);
    topics::LdaModel lda = topics::load_lda(stage_dir(Stage::Lda, cfg));
    TopicStageOutput topics_out = load_topic_stage(cfg);
    corpus::CorpusManifest manifest = corpus::load_manifest(cfg.manifest_path);

    std::vector<std::vector<int>> pred, gold;
    for (const auto& im : manifest.images) {
        if (im.split != split) continue;
        const int d = lda.doc_index(im.image_id);
        if (d < 0) continue;
        num::Tensor row({lda.n_topics});
        for (int k = 0; k < lda.n_topics; ++k) row[k] = lda.doc_topic.at(d, k);
        gold.push_back(topics::threshold_topics(row));
        num::Tensor probs = topics_out.probs_of(im.image_id);
        std::vector<int> p(static_cast<std::size_t>(probs.size()));
        for (std::int64_t k = 0; k < probs.size(); ++k) p[static_cast<std::size_t>(k)] = probs[k] >= 0.5 ? 1 : 0;
        pred.push_back(std::move(p));
    }
    if (pred.empty()) throw DataError("topic-eval: split '" + split + "' has no images");
    topics::Prf prf = topics::eval_prf(pred, gold, beta);
    return json{{"split", split}, {"beta", beta}, {"precision", prf.precision}, {"recall", prf.recall},
                {"f_beta", prf.f_beta}, {"images", pred.size()}};
}

MuSweepOutput mu_sweep(const PipelineConfig& cfg, const std::vector<double>& mu_values) {
    if (cfg.mode != "t-oe-att") throw UsageError("mu-sweep applies only to mode t-oe-att");
    PreparedCorpus pc = prepare_corpus(cfg);
    TopicStageOutput topics_out = load_topic_stage(cfg);
    ordernet::OrderNet net = load_ordernet(cfg, pc.vocab.size());
    decoder::Decoder dec = load_decoder(cfg, pc.vocab.size());

    std::vector<int> indices = split_image_indices(pc.manifest, cfg.eval_split);
    if (indices.empty()) throw DataError("no images in split '" + cfg.eval_split + "'");

    std::vector<decoder::DecoderExample> eval_set;
    for (int img : indices) {
        const auto& entry = pc.manifest.images[static_cast<std::size_t>(img)];
        decoder::DecoderExample ex;
        ex.image = pc.features[static_cast<std::size_t>(img)];
        ex.guidance.image_vec = net.encode_image(ex.image.fc).vec;
        ex.guidance.topic_vec = net.encode_topic(topics_out.probs_of(entry.image_id)).vec;
        ex.image_id = entry.image_id;
        eval_set.push_back(std::move(ex));
    }
    MuSweepOutput out;
    out.rows = decoder::mu_sweep(dec, eval_set, mu_values, pc.vocab);

    corpus::CorpusManifest manifest = pc.manifest;
    for (double mu : mu_values) {
        std::vector<metrics::TokenList> cands;
        std::vector<std::vector<metrics::TokenList>> refs;
        for (const auto& row : out.rows) {
            if (row.mu != mu) continue;
            std::vector<metrics::TokenList> image_refs;
            for (const auto& cap : manifest.captions_of(row.image_id)) image_refs.push_back(corpus::tokenize(cap));
            if (image_refs.empty()) continue;
            cands.push_back(corpus::tokenize(row.caption));
            refs.push_back(std::move(image_refs));
        }
        if (!cands.empty()) out.reports.emplace_back(mu, metrics::evaluate(cands, refs));
    }
    return out;
}

} // namespace occap::pipeline
