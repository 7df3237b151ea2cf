#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "occap/checkpoint.hpp"
#include "occap/errors.hpp"
#include "occap/ordernet.hpp"
#include "occap/synth.hpp"
#include "support/finite_diff.hpp"

using namespace occap;
using namespace occap::ordernet;
namespace fs = std::filesystem;

namespace {

OrderNetConfig tiny_config() {
    OrderNetConfig cfg;
    cfg.d_fc = 4;
    cfg.n_topics = 3;
    cfg.d_emb = 4;
    cfg.d_gru = 3;
    cfg.d_word = 3;
    cfg.vocab_size = 10;
    cfg.seed = 7;
    return cfg;
}

corpus::CaptionSequence seq(std::initializer_list<int> ids) {
    corpus::CaptionSequence s;
    s.token_ids = ids;
    return s;
}

} // namespace

TEST_CASE("order similarity hand values") {
    CHECK(order_similarity(num::Tensor::vec({2, 3}), num::Tensor::vec({1, 1})) == 0.0);
    CHECK(order_similarity(num::Tensor::vec({2, 3}), num::Tensor::vec({3, 1})) == doctest::Approx(-1.0));
    num::Tensor x = num::Tensor::vec({0.3, 1.7, 0.2});
    CHECK(order_similarity(x, x) == 0.0);
    CHECK_THROWS_AS(order_similarity(num::Tensor::vec({1, 2}), num::Tensor::vec({1, 2, 3})), ContractError);
}

TEST_CASE("order similarity algebra on random pairs") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        num::Tensor x({5}), y({5});
        for (auto& v : x.data()) v = rng.uniform(0, 2);
        for (auto& v : y.data()) v = rng.uniform(0, 2);
        double s = order_similarity(x, y);
        CHECK(s <= 0.0);
        bool dominates = true;
        for (int i = 0; i < 5; ++i) dominates = dominates && x[i] >= y[i];
        CHECK((s == 0.0) == dominates);
    }
}

TEST_CASE("satisfied order is transitive") {
    Rng rng(18);
    for (int trial = 0; trial < 1000; ++trial) {
        // build a guaranteed chain x >= y >= z
        num::Tensor z({4}), y({4}), x({4});
        for (int i = 0; i < 4; ++i) {
            z[i] = rng.uniform(0, 1);
            y[i] = z[i] + rng.uniform(0, 1);
            x[i] = y[i] + rng.uniform(0, 1);
        }
        CHECK(order_similarity(x, y) == 0.0);
        CHECK(order_similarity(y, z) == 0.0);
        CHECK(order_similarity(x, z) == 0.0);
    }
}

TEST_CASE("pair loss at the hinge boundaries") {
    const double alpha = 0.05;
    num::Tensor x = num::Tensor::vec({2, 2});
    num::Tensor y = num::Tensor::vec({1, 1});
    REQUIRE(order_similarity(x, y) == 0.0);

    // contrastives violated beyond the margin: loss vanishes
    const double s = std::sqrt(alpha + 1.0);
    num::Tensor xneg = num::Tensor::vec({1 - s, 1});
    num::Tensor yneg = num::Tensor::vec({2 + s, 2});
    REQUIRE(order_similarity(xneg, y) == doctest::Approx(-(alpha + 1.0)));
    REQUIRE(order_similarity(x, yneg) == doctest::Approx(-(alpha + 1.0)));
    CHECK(pair_loss({{x, y}}, {xneg}, {yneg}, alpha) == doctest::Approx(0.0));

    // contrastives exactly satisfied: each hinge sits at the margin
    num::Tensor xdom = num::Tensor::vec({5, 5});
    num::Tensor ydom = num::Tensor::vec({0, 0});
    CHECK(pair_loss({{x, y}}, {xdom}, {ydom}, alpha) == doctest::Approx(2 * alpha));

    CHECK_THROWS_AS(pair_loss({}, {x}, {y}, alpha), ContractError);
}

TEST_CASE("pair loss is non-negative on random inputs") {
    Rng rng(19);
    for (int trial = 0; trial < 1000; ++trial) {
        auto rand_vec = [&]() {
            num::Tensor t({3});
            for (auto& v : t.data()) v = rng.uniform(0, 1.5);
            return t;
        };
        CHECK(pair_loss({{rand_vec(), rand_vec()}}, {rand_vec()}, {rand_vec()}, 0.05) >= 0.0);
    }
}

TEST_CASE("zero weights give zero embeddings") {
    OrderNet net(tiny_config());
    for (auto& [name, t] : net.params()) {
        for (auto& v : t.data()) v = 0.0;
    }
    OrderEmbedding e = net.encode_image(num::Tensor::vec({1, -2, 3, 4}));
    for (std::int64_t i = 0; i < e.vec.size(); ++i) CHECK(e.vec[i] == 0.0);
    OrderEmbedding t = net.encode_topic(num::Tensor::vec({0.2, 0.3, 0.5}));
    for (std::int64_t i = 0; i < t.vec.size(); ++i) CHECK(t.vec[i] == 0.0);
}

TEST_CASE("embeddings are componentwise non-negative on random inputs") {
    OrderNet net(tiny_config());
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        num::Tensor fc({4});
        for (auto& v : fc.data()) v = rng.uniform(-3, 3);
        OrderEmbedding e = net.encode_image(fc);
        for (std::int64_t i = 0; i < e.vec.size(); ++i) CHECK(e.vec[i] >= 0.0);

        corpus::CaptionSequence cap = seq({1, static_cast<int>(4 + rng.uniform_int(6)), 2});
        OrderEmbedding c = net.encode_caption(cap);
        for (std::int64_t i = 0; i < c.vec.size(); ++i) CHECK(c.vec[i] >= 0.0);
    }
}

TEST_CASE("abs map also lands in the non-negative orthant") {
    OrderNetConfig cfg = tiny_config();
    cfg.map = NonnegMap::Abs;
    OrderNet net(cfg);
    OrderEmbedding e = net.encode_image(num::Tensor::vec({1, -2, 3, -4}));
    for (std::int64_t i = 0; i < e.vec.size(); ++i) CHECK(e.vec[i] >= 0.0);
}

TEST_CASE("unknown token ids are rejected") {
    OrderNet net(tiny_config());
    CHECK_THROWS_AS(net.encode_caption(seq({1, 99, 2})), ContractError);
}

TEST_CASE("single-token caption matches the one-step GRU closed form") {
    OrderNetConfig cfg = tiny_config();
    cfg.d_gru = 2;
    cfg.d_word = 2;
    cfg.vocab_size = 5;
    OrderNet net(cfg);
    auto& ps = net.params();
    // hand-set weights
    auto set = [&](const std::string& name, std::vector<double> v) { ps.at(name).data() = std::move(v); };
    set("ordernet/word_embed", {0, 0, 0, 0, 0, 0, 0.4, -0.3, 0, 0});       // token 3 -> [0.4, -0.3]
    set("ordernet/gru_Wz", {0.1, 0.2, 0.3, 0.4, -0.1, 0.5, 0.2, -0.2});    // [2 x 4]
    set("ordernet/gru_bz", {0.05, -0.05});
    set("ordernet/gru_Wr", {0.2, 0.1, -0.3, 0.4, 0.3, -0.1, 0.2, 0.1});
    set("ordernet/gru_br", {0.0, 0.1});
    set("ordernet/gru_Wh", {0.5, -0.5, 0.1, 0.2, -0.4, 0.3, 0.2, 0.0});
    set("ordernet/gru_bh", {0.1, -0.1});
    set("ordernet/W_C", {1, 0, 0, 1, 0.5, 0.5, 0, 0}); // [4 x 2]

    // hand computation: h0 = 0, x = [0.4, -0.3], v = [x, 0, 0]
    auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
    const double x0 = 0.4, x1 = -0.3;
    const double z0 = sig(0.1 * x0 + 0.2 * x1 + 0.05);
    const double z1 = sig(-0.1 * x0 + 0.5 * x1 - 0.05);
    const double cand0 = std::tanh(0.5 * x0 - 0.5 * x1 + 0.1);
    const double cand1 = std::tanh(-0.4 * x0 + 0.3 * x1 - 0.1);
    const double h0 = z0 * cand0; // (1-z)*0 + z*cand
    const double h1 = z1 * cand1;
    const double p0 = h0, p1 = h1, p2 = 0.5 * h0 + 0.5 * h1, p3 = 0.0;
    const double norm = std::sqrt(p0 * p0 + p1 * p1 + p2 * p2 + p3 * p3 + 1e-24);

    OrderEmbedding c = net.encode_caption(seq({3}));
    CHECK(c.vec[0] == doctest::Approx((p0 / norm) * (p0 / norm)).epsilon(1e-12));
    CHECK(c.vec[1] == doctest::Approx((p1 / norm) * (p1 / norm)).epsilon(1e-12));
    CHECK(c.vec[2] == doctest::Approx((p2 / norm) * (p2 / norm)).epsilon(1e-12));
    CHECK(c.vec[3] == doctest::Approx(0.0));
}

TEST_CASE("batch with all orders satisfied by the margin has zero loss") {
    num::Tape tape;
    auto triple = [&](double off) {
        EmbeddingTriple t;
        std::vector<double> img(4, 0.0), cap(4, 0.0), top(4, 0.0);
        int base = off > 0 ? 2 : 0;
        img[base] = img[base + 1] = 4;
        cap[base] = cap[base + 1] = 3;
        top[base] = top[base + 1] = 2;
        t.image = tape.input(img);
        t.caption = tape.input(cap);
        t.topic = tape.input(top);
        return t;
    };
    num::Var loss = total_loss_from_embeddings(tape, {triple(0), triple(1)}, 0.05);
    CHECK(tape.scalar(loss) == doctest::Approx(0.0));
}

TEST_CASE("batch of one is rejected") {
    num::Tape tape;
    EmbeddingTriple t;
    t.image = tape.input({1.0, 1.0});
    t.caption = tape.input({0.5, 0.5});
    t.topic = tape.input({0.1, 0.1});
    CHECK_THROWS_AS(total_loss_from_embeddings(tape, {t}, 0.05), ContractError);
}

namespace {

// Brute-force per-positive contribution, straight from the hinge formula.
double positive_contribution(const std::vector<std::array<num::Tensor, 3>>& batch, std::size_t i, double alpha) {
    double loss = 0.0;
    const std::array<std::pair<int, int>, 3> orders{{{0, 1}, {0, 2}, {1, 2}}};
    for (auto [hi, lo] : orders) {
        const double spos = order_similarity(batch[i][static_cast<std::size_t>(hi)], batch[i][static_cast<std::size_t>(lo)]);
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (j == i) continue;
            loss += std::max(0.0, alpha - spos +
                                      order_similarity(batch[j][static_cast<std::size_t>(hi)],
                                                       batch[i][static_cast<std::size_t>(lo)]));
            loss += std::max(0.0, alpha - spos +
                                      order_similarity(batch[i][static_cast<std::size_t>(hi)],
                                                       batch[j][static_cast<std::size_t>(lo)]));
        }
    }
    return loss;
}

} // namespace

TEST_CASE("duplicating a triple never decreases the others' contributions") {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        auto rand_vec = [&]() {
            num::Tensor t({3});
            for (auto& v : t.data()) v = rng.uniform(0, 1);
            return t;
        };
        std::vector<std::array<num::Tensor, 3>> batch;
        for (int i = 0; i < 3; ++i) batch.push_back({rand_vec(), rand_vec(), rand_vec()});
        std::vector<std::array<num::Tensor, 3>> duped = batch;
        duped.push_back(batch[0]);
        for (std::size_t i = 1; i < 3; ++i) {
            CHECK(positive_contribution(duped, i, 0.05) >= positive_contribution(batch, i, 0.05) - 1e-12);
        }
    }
}

TEST_CASE("brute-force contributions sum to the taped total loss") {
    Rng rng(31);
    std::vector<std::array<num::Tensor, 3>> batch;
    auto rand_vec = [&]() {
        num::Tensor t({3});
        for (auto& v : t.data()) v = rng.uniform(0, 1);
        return t;
    };
    for (int i = 0; i < 3; ++i) batch.push_back({rand_vec(), rand_vec(), rand_vec()});
    double brute = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) brute += positive_contribution(batch, i, 0.05);
    // the taped loss counts each (i, j) hinge pair once
    num::Tape tape;
    std::vector<EmbeddingTriple> triples;
    for (const auto& b : batch) {
        triples.push_back({tape.input(b[0]), tape.input(b[1]), tape.input(b[2])});
    }
    CHECK(tape.scalar(total_loss_from_embeddings(tape, triples, 0.05)) == doctest::Approx(brute));
}

namespace {

std::vector<TripleExample> toy_triples(int n, const OrderNetConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TripleExample> out;
    for (int i = 0; i < n; ++i) {
        TripleExample ex;
        ex.fc = num::Tensor({cfg.d_fc});
        for (auto& v : ex.fc.data()) v = rng.uniform(-1, 1);
        ex.topic_probs = num::Tensor({cfg.n_topics});
        double total = 0.0;
        for (auto& v : ex.topic_probs.data()) {
            v = rng.uniform(0.01, 1.0);
            total += v;
        }
        for (auto& v : ex.topic_probs.data()) v /= total;
        ex.caption.token_ids = {1};
        const int len = 2 + rng.uniform_int(3);
        for (int w = 0; w < len; ++w) ex.caption.token_ids.push_back(4 + rng.uniform_int(cfg.vocab_size - 4));
        ex.caption.token_ids.push_back(2);
        ex.image_id = "img_" + std::to_string(i);
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace

TEST_CASE("total loss gradient matches finite differences") {
    OrderNetConfig cfg = tiny_config();
    OrderNet net(cfg);
    auto batch = toy_triples(3, cfg, 77);

    num::Tape tape;
    num::Var loss = total_loss_on_tape(tape, net, batch, cfg.margin);
    tape.backward(loss, net.params());
    auto report = testing::finite_diff_compare(
        net.params(), [&]() { return total_loss(net, batch, cfg.margin); },
        [&](const std::string& name, std::int64_t i) { return net.params().at(name).grad()[static_cast<std::size_t>(i)]; });
    INFO("worst ", report.worst_param, "[", report.worst_index, "] analytic ", report.analytic, " numeric ",
         report.numeric);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("training shrinks the loss and zero epochs change nothing") {
    OrderNetConfig cfg;
    cfg.d_fc = 8;
    cfg.n_topics = 3;
    cfg.d_emb = 8;
    cfg.d_gru = 8;
    cfg.d_word = 8;
    cfg.vocab_size = 20;
    cfg.seed = 3;
    OrderNet net(cfg);

    std::map<std::string, num::Tensor> init;
    for (auto& [name, t] : net.params()) init.emplace(name, t);

    auto data = toy_triples(16, cfg, 99);
    OrderNetTrainConfig tc;
    tc.lr = 0.01;
    tc.batch = 8;
    tc.seed = 5;

    num::AdamState adam;
    Rng shuffle(tc.seed);
    auto log0 = train_ordernet(net, data, tc, adam, shuffle, 0);
    CHECK(log0.epoch_loss.empty());
    for (auto& [name, t] : net.params()) CHECK(t == init.at(name));

    auto log = train_ordernet(net, data, tc, adam, shuffle, 100);
    REQUIRE(log.epoch_loss.size() == 100);
    CHECK(log.epoch_loss.back() < 0.1 * log.epoch_loss.front());
}

TEST_CASE("resumed training equals an uninterrupted run") {
    OrderNetConfig cfg = tiny_config();
    cfg.seed = 11;
    auto data = toy_triples(10, cfg, 55);
    OrderNetTrainConfig tc;
    tc.lr = 0.005;
    tc.batch = 4;
    tc.seed = 21;

    OrderNet straight(cfg);
    num::AdamState adam_a;
    Rng rng_a(tc.seed);
    train_ordernet(straight, data, tc, adam_a, rng_a, 6);

    OrderNet first(cfg);
    num::AdamState adam_b;
    Rng rng_b(tc.seed);
    train_ordernet(first, data, tc, adam_b, rng_b, 3);

    fs::path dir = fs::temp_directory_path() / "occap_test_ordernet_ckpt";
    fs::remove_all(dir);
    ckpt::save(dir, first.params(), &adam_b,
               {{"epochs_done", 3}, {"rng_state", rng_b.state()}});

    OrderNet resumed(cfg);
    num::AdamState adam_c;
    auto meta = ckpt::load(dir, resumed.params(), &adam_c);
    Rng rng_c(0);
    rng_c.set_state(meta.at("rng_state").get<std::uint64_t>());
    train_ordernet(resumed, data, tc, adam_c, rng_c, 3);

    for (auto& [name, t] : straight.params()) {
        INFO("param ", name);
        CHECK(t.data() == resumed.params().at(name).data());
    }
}

TEST_CASE("divergent training reports the failing step") {
    OrderNetConfig cfg = tiny_config();
    OrderNet net(cfg);
    auto data = toy_triples(6, cfg, 55);
    OrderNetTrainConfig tc;
    tc.lr = 1e155; // blows the parameters up within a couple of steps
    tc.batch = 3;
    tc.seed = 1;
    num::AdamState adam;
    Rng rng(1);
    try {
        train_ordernet(net, data, tc, adam, rng, 5);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("at step") != std::string::npos);
    }
}

TEST_CASE("recall basics") {
    Rng rng(37);
    std::vector<num::Tensor> pts;
    for (int i = 0; i < 10; ++i) {
        num::Tensor t({8});
        for (auto& v : t.data()) v = rng.uniform(0, 1);
        pts.push_back(t);
    }
    // no accidental cross dominance with this seed
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = 0; b < pts.size(); ++b) {
            if (a != b) REQUIRE(order_similarity(pts[a], pts[b]) < 0.0);
        }
    }
    std::map<int, std::set<int>> identity;
    for (int i = 0; i < 10; ++i) identity[i] = {i};
    CHECK(recall_at_k(pts, pts, identity, 1) == doctest::Approx(1.0));
    CHECK(recall_at_k(pts, pts, identity, 50) == doctest::Approx(1.0));
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
        double r = recall_at_k(pts, pts, identity, k);
        CHECK(r >= prev);
        prev = r;
    }
    CHECK_THROWS_AS(recall_at_k(pts, pts, identity, 0), ContractError);
}
