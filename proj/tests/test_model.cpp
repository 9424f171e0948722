#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "attnlab/corpus.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/model.hpp"
#include "attnlab/rng.hpp"
#include "oracles.hpp"

using namespace attnlab;

namespace {

ModelParams scaled_params(const ModelConfig& mc, uint64_t seed, double factor) {
    ModelParams params = init_params(mc, seed);
    for (auto span : mutable_param_spans(params))
        for (double& x : span) x *= factor;
    return params;
}

TokenSeq random_tokens(size_t n, const ModelConfig& mc, Rng& rng) {
    TokenSeq seq(n);
    for (Token& t : seq) t = static_cast<Token>(rng.index(mc.vocab_size - 1));
    return seq;
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig mc{6, 8, 2, 2, 5};
    mc.validate();
    CHECK(mc.mask_id() == 5);
    CHECK(mc.head_dim() == 4);
    ModelConfig bad = mc;
    bad.dim = 6;  // not divisible by heads = 2... 6 % 2 == 0, so break differently
    bad.heads = 4;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
    ModelConfig tiny = mc;
    tiny.vocab_size = 1;
    CHECK_THROWS_AS(tiny.validate(), InvalidInput);
}

TEST_CASE("forward matches the straight-line oracle") {
    Rng rng(41);
    for (auto [layers, heads] : {std::pair<size_t, size_t>{1, 1}, {3, 2}}) {
        ModelConfig mc;
        mc.vocab_size = 7;
        mc.dim = 8;
        mc.layers = layers;
        mc.heads = heads;
        mc.max_len = 6;
        ModelParams params = scaled_params(mc, rng.next_u64(), 20.0);
        TokenSeq tokens = random_tokens(6, mc, rng);
        ForwardResult fr = forward(params, tokens);
        Matrix expected = oracle::straight_forward_logits(params, tokens);
        CHECK(max_abs_diff(fr.logits, expected) < 1e-10);

        auto probs = oracle::straight_forward_probs(params, tokens);
        for (size_t i = 0; i < tokens.size(); ++i)
            for (size_t t = 0; t < mc.vocab_size; ++t)
                CHECK(std::fabs(fr.probs[i][t] - probs[i][t]) < 1e-12);
    }
}

TEST_CASE("attention rows sum to one on arbitrary inputs") {
    Rng rng(42);
    for (int t = 0; t < 10; ++t) {
        ModelConfig mc;
        mc.vocab_size = 4 + rng.index(10);
        mc.dim = 4 * (1 + rng.index(3));
        mc.layers = 1 + rng.index(3);
        mc.heads = 1 + rng.index(2);
        mc.max_len = 2 + rng.index(7);
        ModelParams params = scaled_params(mc, rng.next_u64(), rng.uniform(1.0, 40.0));
        TokenSeq tokens = random_tokens(mc.max_len, mc, rng);
        ForwardResult fr = forward(params, tokens);
        validate_attention(fr.attention);  // row-sum-1 within 1e-9, shape checks
        CHECK(fr.attention.layers == mc.layers);
        CHECK(fr.attention.heads == mc.heads);
    }
}

TEST_CASE("forward with its own attention as override reproduces the logits") {
    Rng rng(43);
    ModelConfig mc;
    mc.vocab_size = 9;
    mc.dim = 8;
    mc.layers = 2;
    mc.heads = 2;
    mc.max_len = 7;
    ModelParams params = scaled_params(mc, 4, 25.0);
    TokenSeq tokens = random_tokens(7, mc, rng);
    ForwardResult fr = forward(params, tokens);
    ForwardResult again = forward(params, tokens, &fr.attention);
    CHECK(max_abs_diff(fr.logits, again.logits) < 1e-12);
}

TEST_CASE("forward rejects bad inputs") {
    ModelConfig mc{5, 4, 1, 1, 4};
    ModelParams params = init_params(mc, 1);
    CHECK_THROWS_AS(forward(params, TokenSeq{}), InvalidInput);
    CHECK_THROWS_AS(forward(params, TokenSeq{0, 1, 2, 3, 0}), SequenceTooLong);
    CHECK_THROWS_AS(forward(params, TokenSeq{0, 5}), InvalidToken);
    CHECK_THROWS_AS(forward(params, TokenSeq{0, -1}), InvalidToken);
}

TEST_CASE("a readout of zeros scores every token uniformly") {
    ModelConfig mc{6, 4, 1, 1, 5};
    ModelParams params = init_params(mc, 9);
    for (double& x : params.out_w.data) x = 0.0;
    for (double& x : params.out_b) x = 0.0;
    TokenSeq tokens{0, 1, 2, 3, 4};
    std::vector<size_t> positions{1, 3};
    double loss = masked_loss(params, tokens, positions);
    CHECK(loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("masked_loss validates positions") {
    ModelConfig mc{5, 4, 1, 1, 4};
    ModelParams params = init_params(mc, 2);
    TokenSeq tokens{0, 1, 2, 3};
    CHECK_THROWS_AS(masked_loss(params, tokens, std::vector<size_t>{}), InvalidInput);
    CHECK_THROWS_AS(masked_loss(params, tokens, std::vector<size_t>{4}), InvalidInput);
    CHECK_THROWS_AS(masked_loss(params, tokens, std::vector<size_t>{1, 1}), InvalidInput);
    TokenSeq masked{0, 4, 2, 3};  // position 1 already holds the mask id
    CHECK_THROWS_AS(masked_loss(params, masked, std::vector<size_t>{1}), InvalidToken);
}

TEST_CASE("masked_loss is covariant under vocabulary relabeling") {
    ModelConfig mc{6, 8, 2, 2, 6};
    ModelParams params = scaled_params(mc, 31, 25.0);
    Rng rng(32);
    TokenSeq tokens = random_tokens(6, mc, rng);
    std::vector<size_t> positions{0, 2, 5};
    double base = masked_loss(params, tokens, positions);

    // Relabel data tokens with a cyclic shift; the mask id stays put.
    size_t data_vocab = mc.vocab_size - 1;
    auto relabel = [&](Token t) {
        return static_cast<Token>((static_cast<size_t>(t) + 1) % data_vocab);
    };
    ModelParams permuted = params;
    for (size_t t = 0; t < data_vocab; ++t) {
        size_t target = static_cast<size_t>(relabel(static_cast<Token>(t)));
        for (size_t d = 0; d < mc.dim; ++d) {
            permuted.embed.at(target, d) = params.embed.at(t, d);
            permuted.out_w.at(target, d) = params.out_w.at(t, d);
        }
        permuted.out_b[target] = params.out_b[t];
    }
    TokenSeq relabeled = tokens;
    for (Token& t : relabeled) t = relabel(t);

    double permuted_loss = masked_loss(permuted, relabeled, positions);
    CHECK(std::fabs(base - permuted_loss) < 1e-12);
}

TEST_CASE("analytic gradients match finite differences per parameter block") {
    ModelConfig mc{5, 4, 1, 1, 5};
    ModelParams params = scaled_params(mc, 7, 25.0);
    TokenSeq tokens{0, 3, 1, 2, 0};
    std::vector<size_t> positions{1, 4};

    BackwardResult br = backward(params, tokens, positions);
    CHECK(br.loss == doctest::Approx(masked_loss(params, tokens, positions)).epsilon(1e-12));

    std::vector<double> analytic = flatten(br.grads);
    std::vector<double> x = flatten(params);
    auto f = [&](const std::vector<double>& v) {
        ModelParams probe = params;
        unflatten(probe, v);
        return masked_loss(probe, tokens, positions);
    };
    std::vector<double> fd = finite_diff_grad(f, x, 1e-5);

    size_t offset = 0;
    for (const auto& [name, span] : param_blocks(br.grads)) {
        double diff = 0.0, a2 = 0.0, f2 = 0.0;
        for (size_t i = 0; i < span.size(); ++i) {
            double d = analytic[offset + i] - fd[offset + i];
            diff += d * d;
            a2 += analytic[offset + i] * analytic[offset + i];
            f2 += fd[offset + i] * fd[offset + i];
        }
        offset += span.size();
        double rel = std::sqrt(diff) / std::max({std::sqrt(a2), std::sqrt(f2), 1e-12});
        INFO("block ", name);
        CHECK(rel < 1e-4);
    }
    CHECK(offset == analytic.size());
}

TEST_CASE("flatten and unflatten round-trip and validate sizes") {
    ModelConfig mc{5, 4, 2, 2, 3};
    ModelParams params = init_params(mc, 3);
    std::vector<double> x = flatten(params);
    CHECK(x.size() == param_count(params));
    ModelParams copy = zeros_like(params);
    unflatten(copy, x);
    CHECK(flatten(copy) == x);
    x.pop_back();
    CHECK_THROWS_AS(unflatten(copy, x), InvalidInput);
}

TEST_CASE("training is deterministic and steps=0 preserves initialization") {
    Corpus corpus = gen_copy(6, 3, 60, 5);
    ModelConfig mc{6, 8, 1, 1, 6};
    TrainOptions opts;
    opts.steps = 15;
    opts.learning_rate = 0.2;
    opts.seed = 77;

    ModelParams a = init_params(mc, 1);
    ModelParams b = init_params(mc, 1);
    TrainResult ra = train(a, corpus, opts);
    TrainResult rb = train(b, corpus, opts);
    CHECK(flatten(a) == flatten(b));
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(ra.loss_trace.size() == 15);

    ModelParams frozen = init_params(mc, 1);
    ModelParams untouched = init_params(mc, 1);
    TrainOptions none;
    none.steps = 0;
    TrainResult rz = train(frozen, corpus, none);
    CHECK(rz.loss_trace.empty());
    CHECK(flatten(frozen) == flatten(untouched));
}

TEST_CASE("training on the copy task halves the loss") {
    Corpus corpus = gen_copy(6, 3, 220, 11);
    ModelConfig mc{6, 16, 1, 1, 6};
    ModelParams params = init_params(mc, 13);
    TrainOptions opts;
    opts.steps = 9600;
    opts.learning_rate = 0.1;
    opts.batch_size = 16;
    opts.seed = 21;
    TrainResult r = train(params, corpus, opts);
    REQUIRE(r.loss_trace.size() == 9600);
    CHECK(r.loss_trace.back() < 0.5 * r.loss_trace.front());
}

TEST_CASE("absurd learning rates diverge loudly") {
    Corpus corpus = gen_copy(5, 2, 30, 1);
    ModelConfig mc{5, 4, 1, 1, 4};
    ModelParams params = init_params(mc, 1);
    TrainOptions opts;
    opts.steps = 50;
    opts.learning_rate = 1e12;
    opts.seed = 1;
    CHECK_THROWS_AS(train(params, corpus, opts), TrainingDiverged);
}

TEST_CASE("train validates corpus and options") {
    Corpus corpus = gen_copy(6, 3, 10, 2);
    ModelConfig mc{5, 4, 1, 1, 6};  // vocab mismatch with corpus
    ModelParams params = init_params(mc, 1);
    TrainOptions opts;
    opts.steps = 1;
    opts.learning_rate = 0.1;
    CHECK_THROWS_AS(train(params, corpus, opts), InvalidInput);
}

TEST_CASE("aggregate_attention averages exactly the selected maps") {
    AttentionTensor t;
    t.layers = 2;
    t.heads = 2;
    t.n = 2;
    for (int i = 0; i < 4; ++i) {
        Matrix m(2, 2);
        double p = 0.1 + 0.2 * i;
        m.at(0, 0) = p;
        m.at(0, 1) = 1.0 - p;
        m.at(1, 0) = 1.0 - p;
        m.at(1, 1) = p;
        t.maps.push_back(m);
    }
    std::vector<size_t> all{0, 1};
    Matrix mean = aggregate_attention(t, all, all);
    CHECK(mean.at(0, 0) == doctest::Approx(0.4).epsilon(1e-15));  // mean of 0.1 0.3 0.5 0.7

    Matrix layer1 = aggregate_attention(t, std::vector<size_t>{1}, all);
    CHECK(layer1.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));

    CHECK_THROWS_AS(aggregate_attention(t, std::vector<size_t>{}, all), InvalidInput);
    CHECK_THROWS_AS(aggregate_attention(t, std::vector<size_t>{2}, all), InvalidInput);
    CHECK_THROWS_AS(aggregate_attention(t, std::vector<size_t>{0, 0}, all), InvalidInput);
}

TEST_CASE("index_range enumerates 0..n-1") {
    std::vector<size_t> r = index_range(3);
    CHECK(r == std::vector<size_t>{0, 1, 2});
    CHECK(index_range(0).empty());
}

TEST_CASE("init_params is seed-deterministic and has the documented spread") {
    ModelConfig mc{8, 16, 2, 2, 10};
    ModelParams a = init_params(mc, 5);
    ModelParams b = init_params(mc, 5);
    CHECK(flatten(a) == flatten(b));
    ModelParams c = init_params(mc, 6);
    CHECK(flatten(a) != flatten(c));

    std::vector<double> x = flatten(a);
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    CHECK(std::fabs(mean) < 0.005);
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.15));
}
