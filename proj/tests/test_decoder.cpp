#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "occap/decoder.hpp"
#include "occap/errors.hpp"
#include "occap/synth.hpp"
#include "support/finite_diff.hpp"

using namespace occap;
using namespace occap::decoder;

namespace {

DecoderConfig toy_config(DecoderMode mode = DecoderMode::TOeAtt) {
    DecoderConfig cfg;
    cfg.mode = mode;
    cfg.d_emb = 6;
    cfg.d_fc = 5;
    cfg.d_loc = 8;
    cfg.grid_n = 3;
    cfg.n_topics = 3;
    cfg.d_h = 8;
    cfg.d_word = 4;
    cfg.d_attn = 6;
    cfg.fc_down = 3;
    cfg.mlp_width = 10;
    cfg.vocab_size = 14;
    cfg.seed = 11;
    return cfg;
}

corpus::ImageFeatures toy_image(std::uint64_t seed, int d_fc = 5, int grid_n = 3, int d_loc = 8) {
    Rng rng(seed);
    corpus::ImageFeatures f;
    f.fc = num::Tensor({d_fc});
    for (auto& v : f.fc.data()) v = rng.uniform(-1, 1);
    f.spatial = num::Tensor({grid_n, d_loc});
    for (auto& v : f.spatial.data()) v = rng.uniform(-1, 1);
    return f;
}

Guidance toy_guidance(std::uint64_t seed, int d_emb = 6) {
    Rng rng(seed);
    Guidance g;
    g.image_vec = num::Tensor({d_emb});
    g.topic_vec = num::Tensor({d_emb});
    for (auto& v : g.image_vec.data()) v = rng.uniform(0, 1);
    for (auto& v : g.topic_vec.data()) v = rng.uniform(0, 1);
    return g;
}

} // namespace

TEST_CASE("embedding fusion basics") {
    num::Tensor oi = num::Tensor::vec({2, 0});
    num::Tensor ot = num::Tensor::vec({0, 2});
    num::Tensor mid = fuse_embeddings(oi, ot, 0.0); // sigmoid(0) = 0.5
    CHECK(mid[0] == doctest::Approx(1.0));
    CHECK(mid[1] == doctest::Approx(1.0));

    num::Tensor near_img = fuse_embeddings(oi, ot, 40.0); // lambda_eff -> 1
    CHECK(near_img[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(near_img[1] == doctest::Approx(0.0));

    num::Tensor same = fuse_embeddings(oi, oi, -3.7);
    CHECK(same == oi);

    CHECK_THROWS_AS(fuse_embeddings(oi, num::Tensor::vec({1, 2, 3}), 0.0), ContractError);
}

TEST_CASE("zero params and zero fused input give a zero guiding state") {
    Decoder dec(toy_config());
    for (auto& [name, t] : dec.params()) {
        for (auto& v : t.data()) v = 0.0;
    }
    DecoderState s = dec.init_guiding(num::Tensor({6}));
    for (std::int64_t i = 0; i < s.h_g.size(); ++i) CHECK(s.h_g[i] == 0.0);
    for (std::int64_t i = 0; i < s.h.size(); ++i) CHECK(s.h[i] == 0.0);
}

TEST_CASE("init_guiding is deterministic and finite across random params") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        DecoderConfig cfg = toy_config();
        cfg.seed = seed;
        Decoder dec(cfg);
        Guidance g = toy_guidance(seed);
        num::Tape t;
        num::Tensor fused = t.val(dec.fuse_on_tape(t, g));
        DecoderState a = dec.init_guiding(fused);
        DecoderState b = dec.init_guiding(fused);
        CHECK(a.h_g == b.h_g);
        CHECK(a.h_g.all_finite());
        CHECK(a.c_g.all_finite());
    }
}

TEST_CASE("a single grid cell takes all the attention") {
    DecoderConfig cfg = toy_config();
    cfg.grid_n = 1;
    cfg.d_loc = cfg.d_h;
    Decoder dec(cfg);
    corpus::ImageFeatures img = toy_image(3, cfg.d_fc, 1, cfg.d_loc);
    Guidance g = toy_guidance(4, cfg.d_emb);
    num::Tape t;
    DecoderState s = dec.init_guiding(t.val(dec.fuse_on_tape(t, g)));
    auto r = dec.step(s, corpus::Vocabulary::kStart, img);
    REQUIRE(r.attention.alpha.size() == 1);
    CHECK(r.attention.alpha[0] == 1.0);
    for (int j = 0; j < cfg.d_loc; ++j) {
        CHECK(r.attention.rho_s[static_cast<std::size_t>(j)] == doctest::Approx(img.spatial.at(0, j)));
    }
}

TEST_CASE("attention mix hits its mu extremes and interpolates in between") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h;
    Decoder dec(cfg);
    corpus::ImageFeatures img = toy_image(5, cfg.d_fc, cfg.grid_n, cfg.d_loc);
    Guidance g = toy_guidance(6, cfg.d_emb);

    num::Tape tape;
    auto ctx = dec.make_context(tape, img);
    auto sv = dec.init_guiding_on_tape(tape, dec.fuse_on_tape(tape, g));

    auto at_mu = [&](double mu) {
        auto r = dec.step_on_tape(tape, sv, corpus::Vocabulary::kStart, ctx, mu);
        return std::tuple{tape.val(r.att_mix), tape.val(r.rho_s), tape.val(r.rho_t)};
    };
    auto [att1, rs1, rt1] = at_mu(1.0);
    for (std::int64_t i = 0; i < att1.size(); ++i) CHECK(att1[i] == doctest::Approx(rs1[i]).epsilon(1e-12));
    auto [att0, rs0, rt0] = at_mu(0.0);
    for (std::int64_t i = 0; i < att0.size(); ++i) CHECK(att0[i] == doctest::Approx(rt0[i]).epsilon(1e-12));
    auto [attm, rsm, rtm] = at_mu(0.3);
    for (std::int64_t i = 0; i < attm.size(); ++i) {
        double lo = std::min(att0[i], att1[i]) - 1e-12;
        double hi = std::max(att0[i], att1[i]) + 1e-12;
        CHECK(attm[i] >= lo);
        CHECK(attm[i] <= hi);
    }
}

TEST_CASE("attention weights normalize, rho_s stays in the hull, rho_t is bounded") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h;
    Decoder dec(cfg);
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        corpus::ImageFeatures img = toy_image(seed, cfg.d_fc, cfg.grid_n, cfg.d_loc);
        Guidance g = toy_guidance(seed + 100, cfg.d_emb);
        num::Tape t;
        DecoderState s = dec.init_guiding(t.val(dec.fuse_on_tape(t, g)));
        auto r = dec.step(s, corpus::Vocabulary::kStart, img);
        double total = 0.0;
        for (double a : r.attention.alpha) {
            CHECK(a >= 0.0);
            total += a;
        }
        CHECK(std::abs(total - 1.0) <= 1e-9);
        for (int j = 0; j < cfg.d_loc; ++j) {
            double lo = img.spatial.at(0, j), hi = img.spatial.at(0, j);
            for (int i = 1; i < cfg.grid_n; ++i) {
                lo = std::min(lo, img.spatial.at(i, j));
                hi = std::max(hi, img.spatial.at(i, j));
            }
            CHECK(r.attention.rho_s[static_cast<std::size_t>(j)] >= lo - 1e-12);
            CHECK(r.attention.rho_s[static_cast<std::size_t>(j)] <= hi + 1e-12);
        }
        for (double v : r.attention.rho_t) CHECK(std::abs(v) < 1.0);
        // per-step distribution over the vocabulary is a proper softmax
        num::Tensor p = num::softmax(r.logits);
        double psum = 0.0;
        for (std::int64_t i = 0; i < p.size(); ++i) psum += p[i];
        CHECK(std::abs(psum - 1.0) <= 1e-12);
    }
}

TEST_CASE("step rejects out-of-vocabulary tokens") {
    Decoder dec(toy_config());
    corpus::ImageFeatures img = toy_image(7);
    num::Tape t;
    DecoderState s = dec.init_guiding(t.val(dec.fuse_on_tape(t, toy_guidance(8))));
    CHECK_THROWS_AS(dec.step(s, 14, img), ContractError);
    CHECK_THROWS_AS(dec.step(s, -1, img), ContractError);
}

TEST_CASE("teacher-forced loss gradient matches finite differences") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        DecoderConfig cfg = toy_config();
        cfg.d_loc = cfg.d_h;
        cfg.seed = seed;
        Decoder dec(cfg);
        DecoderExample ex;
        ex.image = toy_image(seed + 40, cfg.d_fc, cfg.grid_n, cfg.d_loc);
        ex.guidance = toy_guidance(seed + 50, cfg.d_emb);
        ex.caption.token_ids = {1, 5, 9, 4, 2};
        ex.image_id = "x";

        auto forward = [&]() {
            num::Tape t;
            return t.scalar(sequence_loss_on_tape(t, dec, ex));
        };
        num::Tape t;
        num::Var loss = sequence_loss_on_tape(t, dec, ex);
        t.backward(loss, dec.params());
        auto report = testing::finite_diff_compare(
            dec.params(), forward,
            [&](const std::string& name, std::int64_t i) { return dec.params().at(name).grad()[static_cast<std::size_t>(i)]; });
        INFO("seed ", seed, " worst ", report.worst_param, "[", report.worst_index, "]");
        CHECK(report.max_rel_err < 1e-4);
    }
}

TEST_CASE("rigged logits end generation immediately") {
    Decoder dec(toy_config());
    for (auto& [name, t] : dec.params()) {
        for (auto& v : t.data()) v = 0.0;
    }
    dec.params().at("dec/mlp_b2")[corpus::Vocabulary::kEnd] = 10.0;
    auto [seq, trace] = dec.generate(toy_image(9), toy_guidance(10), 20);
    CHECK(seq.token_ids == std::vector<int>{corpus::Vocabulary::kStart, corpus::Vocabulary::kEnd});
}

TEST_CASE("generation is deterministic and respects max_len") {
    Decoder dec(toy_config());
    corpus::ImageFeatures img = toy_image(11);
    Guidance g = toy_guidance(12);
    auto [a, ta] = dec.generate(img, g, 8);
    auto [b, tb] = dec.generate(img, g, 8);
    CHECK(a == b);
    CHECK(a.token_ids.size() <= 8);
    CHECK(a.token_ids.front() == corpus::Vocabulary::kStart);
    CHECK(a.token_ids.back() == corpus::Vocabulary::kEnd);
}

namespace {

std::vector<DecoderExample> overfit_set(const DecoderConfig& cfg, int n) {
    std::vector<DecoderExample> out;
    for (int i = 0; i < n; ++i) {
        DecoderExample ex;
        ex.image = toy_image(static_cast<std::uint64_t>(200 + i), cfg.d_fc, cfg.grid_n, cfg.d_loc);
        ex.guidance = toy_guidance(static_cast<std::uint64_t>(300 + i), cfg.d_emb);
        // distinct short captions over a tiny vocabulary
        ex.caption.token_ids = {1, 4 + (i % 5), 4 + ((i + 2) % 5), 9 + (i % 4), 2};
        ex.image_id = "img_" + std::to_string(i);
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace

TEST_CASE("zero epochs leave the decoder at initialization") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h;
    Decoder dec(cfg);
    std::map<std::string, num::Tensor> init;
    for (auto& [name, t] : dec.params()) init.emplace(name, t);
    auto data = overfit_set(cfg, 3);
    DecoderTrainConfig tc;
    num::AdamState adam;
    Rng rng(1);
    auto log = train_decoder(dec, data, tc, adam, rng, 0);
    CHECK(log.epoch_loss.empty());
    for (auto& [name, t] : dec.params()) CHECK(t == init.at(name));
}

TEST_CASE("a five-pair overfit reproduces its training captions") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h;
    cfg.seed = 21;
    Decoder dec(cfg);
    auto data = overfit_set(cfg, 5);
    DecoderTrainConfig tc;
    tc.lr = 0.01;
    tc.batch = 5;
    tc.seed = 2;
    num::AdamState adam;
    Rng rng(tc.seed);
    auto log = train_decoder(dec, data, tc, adam, rng, 300);
    CHECK(log.epoch_loss.back() < log.epoch_loss.front());
    for (const auto& ex : data) {
        auto [seq, trace] = dec.generate(ex.image, ex.guidance, 8);
        INFO("image ", ex.image_id);
        CHECK(seq == ex.caption);
    }
    // fusion weights stay inside (0,1) and have moved off their 0.5 start
    for (std::size_t e = 0; e < log.lambda_eff.size(); ++e) {
        CHECK(log.lambda_eff[e] > 0.0);
        CHECK(log.lambda_eff[e] < 1.0);
        CHECK(log.mu_eff[e] > 0.0);
        CHECK(log.mu_eff[e] < 1.0);
    }
    CHECK(std::abs(log.lambda_eff.back() - 0.5) > 1e-3);
    CHECK(std::abs(log.mu_eff.back() - 0.5) > 1e-3);
}

TEST_CASE("all three ablation modes train and generate") {
    for (DecoderMode mode : {DecoderMode::Topic, DecoderMode::TOe, DecoderMode::TOeAtt}) {
        DecoderConfig cfg = toy_config(mode);
        cfg.d_loc = cfg.d_h;
        Decoder dec(cfg);
        std::vector<DecoderExample> data;
        for (int i = 0; i < 4; ++i) {
            DecoderExample ex;
            ex.image = toy_image(static_cast<std::uint64_t>(400 + i), cfg.d_fc, cfg.grid_n, cfg.d_loc);
            if (mode == DecoderMode::Topic) {
                ex.guidance.image_vec = ex.image.fc;
                ex.guidance.topic_vec = num::Tensor({cfg.n_topics}, {0.5, 0.3, 0.2});
            } else {
                ex.guidance = toy_guidance(static_cast<std::uint64_t>(500 + i), cfg.d_emb);
            }
            ex.caption.token_ids = {1, 4 + i, 5 + i, 2};
            ex.image_id = "img_" + std::to_string(i);
            data.push_back(std::move(ex));
        }
        DecoderTrainConfig tc;
        tc.lr = 0.01;
        tc.batch = 4;
        num::AdamState adam;
        Rng rng(3);
        auto log = train_decoder(dec, data, tc, adam, rng, 20);
        CHECK(log.epoch_loss.back() < log.epoch_loss.front());
        auto [seq, trace] = dec.generate(data[0].image, data[0].guidance, 8);
        CHECK(seq.token_ids.front() == corpus::Vocabulary::kStart);
        CHECK((mode == DecoderMode::TOeAtt ? !trace.steps.empty() : trace.steps.empty()));
    }
}

TEST_CASE("mode parsing accepts the three ablation rows") {
    CHECK(mode_from_string("topic") == DecoderMode::Topic);
    CHECK(mode_from_string("t-oe") == DecoderMode::TOe);
    CHECK(mode_from_string("t-oe-att") == DecoderMode::TOeAtt);
    CHECK_THROWS_AS(mode_from_string("full"), UsageError);
}

TEST_CASE("mu sweep validates inputs and covers the grid") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h;
    Decoder dec(cfg);
    corpus::Vocabulary vocab;
    vocab.id_to_token = {"<pad>", "<start>", "<end>", "<unk>"};
    for (int i = 4; i < cfg.vocab_size; ++i) {
        vocab.token_to_id["w" + std::to_string(i)] = i;
        vocab.id_to_token.push_back("w" + std::to_string(i));
    }
    std::vector<DecoderExample> eval_set;
    for (int i = 0; i < 3; ++i) {
        DecoderExample ex;
        ex.image = toy_image(static_cast<std::uint64_t>(600 + i), cfg.d_fc, cfg.grid_n, cfg.d_loc);
        ex.guidance = toy_guidance(static_cast<std::uint64_t>(700 + i), cfg.d_emb);
        ex.image_id = "img_" + std::to_string(i);
        eval_set.push_back(std::move(ex));
    }
    auto rows = mu_sweep(dec, eval_set, {0.3, 0.7}, vocab);
    CHECK(rows.size() == 6); // |mu| x |eval|
    CHECK(rows[0].mu == 0.3);
    CHECK(rows[3].mu == 0.7);

    // sweeping at the learned value reproduces plain generation
    auto at_learned = mu_sweep(dec, eval_set, {dec.mu_eff()}, vocab);
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        auto [seq, trace] = dec.generate(eval_set[i].image, eval_set[i].guidance, cfg.max_len);
        CHECK(at_learned[i].caption == corpus::decode_caption(seq, vocab));
    }

    CHECK_THROWS_AS(mu_sweep(dec, eval_set, {1.5}, vocab), UsageError);
    CHECK_THROWS_AS(mu_sweep(dec, eval_set, {}, vocab), UsageError);
}

TEST_CASE("attention mode requires matching context widths") {
    DecoderConfig cfg = toy_config();
    cfg.d_loc = cfg.d_h + 1;
    CHECK_THROWS_AS(Decoder{cfg}, ContractError);
}
