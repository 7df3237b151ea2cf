#include "occap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "occap/checkpoint.hpp"
#include "occap/errors.hpp"

namespace occap::decoder {

DecoderMode mode_from_string(const std::string& s) {
    if (s == "topic") return DecoderMode::Topic;
    if (s == "t-oe") return DecoderMode::TOe;
    if (s == "t-oe-att") return DecoderMode::TOeAtt;
    throw UsageError("unknown decoder mode '" + s + "' (expected topic, t-oe or t-oe-att)");
}

std::string mode_to_string(DecoderMode m) {
    switch (m) {
    case DecoderMode::Topic: return "topic";
    case DecoderMode::TOe: return "t-oe";
    case DecoderMode::TOeAtt: return "t-oe-att";
    }
    return "?";
}

void write_trace_csv(const std::filesystem::path& path, const AttentionTrace& trace) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace file '" + path.string() + "'");
    out << "step,grid,weight\n";
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& a = trace.steps[t].alpha;
        for (std::size_t g = 0; g < a.size(); ++g) {
            out << t << "," << g << "," << a[g] << "\n";
        }
    }
}

num::Tensor fuse_embeddings(const num::Tensor& o_image, const num::Tensor& o_topic, double lambda_raw) {
    if (o_image.shape() != o_topic.shape()) {
        throw ContractError("fuse_embeddings: shape mismatch " + o_image.shape_str() + " vs " + o_topic.shape_str());
    }
    const double lam = 1.0 / (1.0 + std::exp(-lambda_raw));
    num::Tensor out = o_image;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = lam * o_image[i] + (1.0 - lam) * o_topic[i];
    return out;
}

namespace {

// One LSTM cell step with a packed gate matrix [4H x (in + H)], gate order
// input, forget, candidate, output.
std::pair<num::Var, num::Var> lstm_step(num::Tape& t, num::Var W, num::Var b, num::Var x, num::Var h_prev,
                                        num::Var c_prev, int hidden) {
    num::Var v = t.concat(x, h_prev);
    num::Var a = t.add(t.matvec(W, v), b);
    num::Var gi = t.sigmoid(t.slice(a, 0, hidden));
    num::Var gf = t.sigmoid(t.slice(a, hidden, hidden));
    num::Var gc = t.tanh_(t.slice(a, 2 * hidden, hidden));
    num::Var go = t.sigmoid(t.slice(a, 3 * hidden, hidden));
    num::Var c = t.add(t.mul(gf, c_prev), t.mul(gi, gc));
    num::Var h = t.mul(go, t.tanh_(c));
    return {h, c};
}

} // namespace

Decoder::Decoder(const DecoderConfig& cfg) : cfg_(cfg), params_(cfg.seed) {
    if (cfg.d_emb < 1 || cfg.d_fc < 1 || cfg.d_loc < 1 || cfg.grid_n < 1 || cfg.n_topics < 1 || cfg.d_h < 1 ||
        cfg.d_word < 1 || cfg.d_attn < 1 || cfg.fc_down < 1 || cfg.mlp_width < 1 || cfg.vocab_size < 1) {
        throw ContractError("decoder: all dimensions must be >= 1");
    }
    if (cfg.mode == DecoderMode::TOeAtt && cfg.d_loc != cfg.d_h) {
        throw ContractError("decoder: attention mode needs d_loc == d_h (spatial and temporal contexts are mixed)");
    }
    if (cfg.max_len < 2) throw ContractError("decoder: max_len must be >= 2");

    const int dx = cfg.d_word + cfg.fc_down;
    params_.matrix_glorot("dec/lstm_g_W", 4 * cfg.d_h, cfg.d_emb + cfg.d_h);
    params_.vector_zeros("dec/lstm_g_b", 4 * cfg.d_h);
    params_.matrix_glorot("dec/lstm_c_W", 4 * cfg.d_h, dx + cfg.d_h);
    params_.vector_zeros("dec/lstm_c_b", 4 * cfg.d_h);
    params_.matrix_glorot("dec/W_g", cfg.d_h, cfg.d_h);
    params_.matrix_glorot("dec/W_c", cfg.d_h, cfg.d_h);
    params_.matrix_glorot("dec/word_embed", cfg.vocab_size, cfg.d_word);
    params_.matrix_glorot("dec/fc_down_W", cfg.fc_down, cfg.d_fc);
    params_.matrix_glorot("dec/mlp_W1", cfg.mlp_width, cfg.d_h);
    params_.vector_zeros("dec/mlp_b1", cfg.mlp_width);
    params_.matrix_glorot("dec/mlp_W2", cfg.vocab_size, cfg.mlp_width);
    params_.vector_zeros("dec/mlp_b2", cfg.vocab_size);
    params_.scalar_value("dec/lambda_raw", 0.0); // sigmoid(0) = 0.5

    if (cfg.mode == DecoderMode::TOeAtt) {
        params_.matrix_glorot("dec/att_W_f", cfg.d_attn, cfg.d_loc);
        params_.matrix_glorot("dec/att_W_z", cfg.d_attn, cfg.d_h);
        num::Tensor walpha({cfg.d_attn});
        const double s = std::sqrt(6.0 / (1.0 + cfg.d_attn));
        for (auto& v : walpha.data()) v = params_.rng().uniform(-s, s);
        params_.declare("dec/att_w_alpha", std::move(walpha));
        params_.matrix_glorot("dec/tmp_W_x", cfg.d_h, dx);
        params_.matrix_glorot("dec/tmp_W_z", cfg.d_h, cfg.d_h);
        params_.scalar_value("dec/mu_raw", 0.0);
    }
    if (cfg.mode == DecoderMode::Topic) {
        params_.matrix_glorot("dec/proj_img", cfg.d_emb, cfg.d_fc);
        params_.matrix_glorot("dec/proj_topic", cfg.d_emb, cfg.n_topics);
    }
}

double Decoder::lambda_eff() const { return 1.0 / (1.0 + std::exp(-params_.at("dec/lambda_raw")[0])); }

double Decoder::mu_eff() const {
    if (cfg_.mode != DecoderMode::TOeAtt) throw ContractError("mu_eff: attention weights exist only in t-oe-att mode");
    return 1.0 / (1.0 + std::exp(-params_.at("dec/mu_raw")[0]));
}

void Decoder::validate_guidance(const Guidance& g) const {
    if (cfg_.mode == DecoderMode::Topic) {
        if (g.image_vec.shape() != std::vector<int>{cfg_.d_fc} || g.topic_vec.shape() != std::vector<int>{cfg_.n_topics}) {
            throw ContractError("decoder(topic): guidance must be raw fc [" + std::to_string(cfg_.d_fc) +
                                "] and topic probs [" + std::to_string(cfg_.n_topics) + "]");
        }
    } else {
        if (g.image_vec.shape() != std::vector<int>{cfg_.d_emb} || g.topic_vec.shape() != std::vector<int>{cfg_.d_emb}) {
            throw ContractError("decoder: guidance embeddings must both be [" + std::to_string(cfg_.d_emb) + "]");
        }
    }
}

Decoder::SeqContext Decoder::make_context(num::Tape& tape, const corpus::ImageFeatures& image) const {
    if (image.fc.shape() != std::vector<int>{cfg_.d_fc}) {
        throw ContractError("decoder: fc features " + image.fc.shape_str() + " do not match configured [" +
                            std::to_string(cfg_.d_fc) + "]");
    }
    SeqContext ctx;
    ctx.fc_raw = tape.input(image.fc);
    ctx.fc_small = tape.matvec(tape.param(params_, "dec/fc_down_W"), ctx.fc_raw);
    if (cfg_.mode == DecoderMode::TOeAtt) {
        if (image.spatial.shape() != std::vector<int>{cfg_.grid_n, cfg_.d_loc}) {
            throw ContractError("decoder: spatial features " + image.spatial.shape_str() +
                                " do not match configured [" + std::to_string(cfg_.grid_n) + "x" +
                                std::to_string(cfg_.d_loc) + "]");
        }
        ctx.spatial = tape.input(image.spatial);
    }
    return ctx;
}

num::Var Decoder::fuse_on_tape(num::Tape& tape, const Guidance& guidance) const {
    validate_guidance(guidance);
    num::Var gi = tape.input(guidance.image_vec);
    num::Var gt = tape.input(guidance.topic_vec);
    if (cfg_.mode == DecoderMode::Topic) {
        gi = tape.matvec(tape.param(params_, "dec/proj_img"), gi);
        gt = tape.matvec(tape.param(params_, "dec/proj_topic"), gt);
    }
    num::Var lam = tape.sigmoid(tape.param(params_, "dec/lambda_raw"));
    return tape.add(tape.scale_by(gi, lam), tape.scale_by(gt, tape.one_minus(lam)));
}

Decoder::StepVars Decoder::init_guiding_on_tape(num::Tape& tape, num::Var fused) const {
    num::Var zero_h = tape.input(num::Tensor({cfg_.d_h}));
    num::Var zero_c = tape.input(num::Tensor({cfg_.d_h}));
    auto [h_g, c_g] = lstm_step(tape, tape.param(params_, "dec/lstm_g_W"), tape.param(params_, "dec/lstm_g_b"), fused,
                                zero_h, zero_c, cfg_.d_h);
    StepVars sv;
    sv.h_g = h_g;
    sv.c_g = c_g;
    sv.h = h_g; // the guiding hidden state seeds the core LSTM
    sv.c = tape.input(num::Tensor({cfg_.d_h}));
    sv.z = tape.input(num::Tensor({cfg_.d_h}));
    return sv;
}

Decoder::StepVarsResult Decoder::step_on_tape(num::Tape& tape, const StepVars& state, int token,
                                              const SeqContext& ctx, std::optional<double> mu_override) const {
    if (token < 0 || token >= cfg_.vocab_size) {
        throw ContractError("decoder step: token id " + std::to_string(token) + " outside vocabulary of size " +
                            std::to_string(cfg_.vocab_size));
    }
    num::Var x = tape.concat(tape.row(tape.param(params_, "dec/word_embed"), token), ctx.fc_small);
    num::Var h_in = state.h;
    auto [h, c] = lstm_step(tape, tape.param(params_, "dec/lstm_c_W"), tape.param(params_, "dec/lstm_c_b"), x, h_in,
                            state.c, cfg_.d_h);
    num::Var z = tape.add(tape.matvec(tape.param(params_, "dec/W_g"), state.h_g),
                          tape.matvec(tape.param(params_, "dec/W_c"), cfg_.z_after_core ? h : h_in));

    StepVarsResult out;
    out.state.h_g = state.h_g;
    out.state.c_g = state.c_g;
    out.state.h = h;
    out.state.c = c;
    out.state.z = z;

    num::Var mlp_in = z;
    if (cfg_.mode == DecoderMode::TOeAtt) {
        num::Var scored = tape.add_row_broadcast(tape.matmul_nt(ctx.spatial, tape.param(params_, "dec/att_W_f")),
                                                 tape.matvec(tape.param(params_, "dec/att_W_z"), z));
        num::Var alpha = tape.softmax(tape.matvec(scored, tape.param(params_, "dec/att_w_alpha")));
        num::Var rho_s = tape.matvec_t(ctx.spatial, alpha);
        num::Var gate = tape.sigmoid(tape.add(tape.matvec(tape.param(params_, "dec/tmp_W_x"), x),
                                              tape.matvec(tape.param(params_, "dec/tmp_W_z"), z)));
        num::Var rho_t = tape.mul(tape.tanh_(c), gate);
        num::Var mu = mu_override ? tape.input_scalar(*mu_override)
                                  : tape.sigmoid(tape.param(params_, "dec/mu_raw"));
        num::Var att = tape.add(tape.scale_by(rho_s, mu), tape.scale_by(rho_t, tape.one_minus(mu)));
        mlp_in = tape.add(z, att);
        out.alpha = alpha;
        out.rho_s = rho_s;
        out.rho_t = rho_t;
        out.att_mix = att;
        out.has_attention = true;
    }
    num::Var hidden = tape.relu(tape.add(tape.matvec(tape.param(params_, "dec/mlp_W1"), mlp_in),
                                         tape.param(params_, "dec/mlp_b1")));
    out.logits = tape.add(tape.matvec(tape.param(params_, "dec/mlp_W2"), hidden), tape.param(params_, "dec/mlp_b2"));
    return out;
}

DecoderState Decoder::init_guiding(const num::Tensor& fused) const {
    if (!fused.all_finite()) throw NumericError("init_guiding: fused embedding is not finite");
    num::Tape tape;
    StepVars sv = init_guiding_on_tape(tape, tape.input(fused));
    DecoderState s;
    s.h_g = tape.val(sv.h_g);
    s.c_g = tape.val(sv.c_g);
    s.h = tape.val(sv.h);
    s.c = tape.val(sv.c);
    s.z = tape.val(sv.z);
    s.t = 0;
    return s;
}

Decoder::StepResult Decoder::step(const DecoderState& state, int token, const corpus::ImageFeatures& image) const {
    num::Tape tape;
    SeqContext ctx = make_context(tape, image);
    StepVars sv;
    sv.h_g = tape.input(state.h_g);
    sv.c_g = tape.input(state.c_g);
    sv.h = tape.input(state.h);
    sv.c = tape.input(state.c);
    sv.z = tape.input(state.z);
    StepVarsResult r = step_on_tape(tape, sv, token, ctx);
    StepResult out;
    out.state.h_g = tape.val(r.state.h_g);
    out.state.c_g = tape.val(r.state.c_g);
    out.state.h = tape.val(r.state.h);
    out.state.c = tape.val(r.state.c);
    out.state.z = tape.val(r.state.z);
    out.state.t = state.t + 1;
    if (r.has_attention) {
        out.attention.alpha = tape.val(r.alpha).data();
        out.attention.rho_s = tape.val(r.rho_s).data();
        out.attention.rho_t = tape.val(r.rho_t).data();
    }
    out.logits = tape.val(r.logits);
    return out;
}

std::pair<corpus::CaptionSequence, AttentionTrace> Decoder::generate(const corpus::ImageFeatures& image,
                                                                     const Guidance& guidance, int max_len,
                                                                     std::optional<double> mu_override) const {
    if (max_len < 2) throw ContractError("generate: max_len must be >= 2");
    num::Tape tape;
    SeqContext ctx = make_context(tape, image);
    StepVars sv = init_guiding_on_tape(tape, fuse_on_tape(tape, guidance));

    corpus::CaptionSequence seq;
    seq.token_ids.push_back(corpus::Vocabulary::kStart);
    AttentionTrace trace;
    while (static_cast<int>(seq.token_ids.size()) < max_len &&
           seq.token_ids.back() != corpus::Vocabulary::kEnd) {
        if (static_cast<int>(seq.token_ids.size()) == max_len - 1) {
            seq.token_ids.push_back(corpus::Vocabulary::kEnd);
            break;
        }
        StepVarsResult r = step_on_tape(tape, sv, seq.token_ids.back(), ctx, mu_override);
        sv = r.state;
        const auto& logits = tape.val(r.logits).data();
        int best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        seq.token_ids.push_back(best);
        if (r.has_attention) {
            AttentionStep step;
            step.alpha = tape.val(r.alpha).data();
            step.rho_s = tape.val(r.rho_s).data();
            step.rho_t = tape.val(r.rho_t).data();
            trace.steps.push_back(std::move(step));
        }
    }
    if (seq.token_ids.back() != corpus::Vocabulary::kEnd) {
        seq.token_ids.push_back(corpus::Vocabulary::kEnd);
    }
    return {seq, trace};
}

num::Var sequence_loss_on_tape(num::Tape& tape, const Decoder& dec, const DecoderExample& ex,
                               std::vector<Decoder::StepVarsResult>* step_out) {
    const auto& ids = ex.caption.token_ids;
    if (ids.size() < 2) throw ContractError("sequence_loss: caption must hold <start> and <end>");
    Decoder::SeqContext ctx = dec.make_context(tape, ex.image);
    Decoder::StepVars sv = dec.init_guiding_on_tape(tape, dec.fuse_on_tape(tape, ex.guidance));
    num::Var total = tape.input_scalar(0.0);
    const int steps = static_cast<int>(ids.size()) - 1;
    for (int t = 0; t < steps; ++t) {
        Decoder::StepVarsResult r = dec.step_on_tape(tape, sv, ids[static_cast<std::size_t>(t)], ctx);
        sv = r.state;
        total = tape.add(total, tape.cross_entropy_logits(r.logits, ids[static_cast<std::size_t>(t) + 1]));
        if (step_out) step_out->push_back(r);
    }
    return tape.scale(total, 1.0 / static_cast<double>(steps));
}

DecoderTrainLog train_decoder(Decoder& dec, const std::vector<DecoderExample>& data, const DecoderTrainConfig& cfg,
                              num::AdamState& adam, Rng& shuffle_rng, int epochs_to_run,
                              const std::function<void(const std::string&)>& log_line) {
    if (data.empty()) throw ContractError("train_decoder: no training examples");
    adam.config().lr = cfg.lr;

    DecoderTrainLog log;
    std::int64_t step = adam.step_count();
    const bool has_mu = dec.config().mode == DecoderMode::TOeAtt;

    for (int epoch = 0; epoch < epochs_to_run; ++epoch) {
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
            ++step;
            try {
                num::Tape tape;
                num::Var total = tape.input_scalar(0.0);
                for (std::size_t idx = start; idx < stop; ++idx) {
                    const DecoderExample& ex = data[order[idx]];
                    std::vector<Decoder::StepVarsResult> step_results;
                    num::Var loss = sequence_loss_on_tape(tape, dec, ex,
                                                          cfg.record_traces ? &step_results : nullptr);
                    total = tape.add(total, loss);
                    if (cfg.record_traces) {
                        for (const auto& r : step_results) {
                            if (!r.has_attention) continue;
                            AttentionStep s;
                            s.alpha = tape.val(r.alpha).data();
                            s.rho_s = tape.val(r.rho_s).data();
                            s.rho_t = tape.val(r.rho_t).data();
                            log.traces.push_back(std::move(s));
                            log.trace_example.push_back(static_cast<int>(order[idx]));
                        }
                    }
                }
                num::Var batch_loss = tape.scale(total, 1.0 / static_cast<double>(stop - start));
                tape.backward(batch_loss, dec.params());
                adam.step(dec.params());
                epoch_loss += tape.scalar(batch_loss);
            } catch (const NumericError& e) {
                throw NumericError("train_decoder: " + std::string(e.what()) + " at step " + std::to_string(step));
            }
            ++batches;
        }
        ckpt::quantize_f32(dec.params());
        ckpt::quantize_f32(adam);
        log.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
        log.lambda_eff.push_back(dec.lambda_eff());
        log.mu_eff.push_back(has_mu ? dec.mu_eff() : 0.0);
        if (log_line) {
            char buf[160];
            if (has_mu) {
                std::snprintf(buf, sizeof(buf), "epoch=%d loss=%.6f lambda_eff=%.6f mu_eff=%.6f", epoch,
                              log.epoch_loss.back(), log.lambda_eff.back(), log.mu_eff.back());
            } else {
                std::snprintf(buf, sizeof(buf), "epoch=%d loss=%.6f lambda_eff=%.6f", epoch, log.epoch_loss.back(),
                              log.lambda_eff.back());
            }
            log_line(buf);
        }
    }
    return log;
}

std::vector<MuSweepRow> mu_sweep(const Decoder& dec, const std::vector<DecoderExample>& eval_set,
                                 const std::vector<double>& mu_values, const corpus::Vocabulary& vocab) {
    if (dec.config().mode != DecoderMode::TOeAtt) {
        throw UsageError("mu-sweep applies only to the t-oe-att mode");
    }
    if (mu_values.empty()) throw UsageError("mu-sweep: no mu values given");
    for (double mu : mu_values) {
        if (mu < 0.0 || mu > 1.0) {
            throw UsageError("mu-sweep: mu must lie in [0, 1], got " + std::to_string(mu));
        }
    }
    std::vector<MuSweepRow> rows;
    for (double mu : mu_values) {
        for (const auto& ex : eval_set) {
            auto [seq, trace] = dec.generate(ex.image, ex.guidance, dec.config().max_len, mu);
            rows.push_back({mu, ex.image_id, corpus::decode_caption(seq, vocab)});
        }
    }
    return rows;
}

} // namespace occap::decoder
