#include "attnlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "attnlab/kernels.hpp"
#include "attnlab/numerics.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

namespace {

constexpr double kBoundTol = 1e-9;
constexpr double kEntropyTol = 1e-12;
constexpr double kEqualityTol = 1e-15;
constexpr double kNormTol = 1e-12;
constexpr double kRampTol = 1e-3;
constexpr double kGradTol = 1e-4;

std::string format(const char* fmt, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, a, b, c);
    return buf;
}

Matrix random_row_stochastic(size_t n, Rng& rng) {
    Matrix a(n, n);
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> row = rng.dirichlet(n, 1.0);
        for (size_t j = 0; j < n; ++j) a.at(i, j) = row[j];
    }
    return a;
}

void scale_params(ModelParams& params, Rng& rng, double lo, double hi) {
    for (auto span : mutable_param_spans(params)) {
        double factor = rng.uniform(lo, hi);
        for (double& x : span) x *= factor;
    }
}

TokenSeq random_data_tokens(size_t n, const ModelConfig& config, Rng& rng) {
    TokenSeq seq(n);
    for (Token& t : seq) t = static_cast<Token>(rng.index(config.vocab_size - 1));
    return seq;
}

}  // namespace

CheckResult check_descending_order_matches_brute_force(size_t trials, uint64_t seed,
                                                       const OrderFn& order_fn) {
    OrderFn order = order_fn ? order_fn : OrderFn(best_order);
    CheckResult r;
    r.name = "descending_order_matches_brute_force";
    r.trials = trials;
    Rng root(seed);
    for (size_t t = 0; t < trials; ++t) {
        Rng rng = root.fork(t);
        size_t b = 2 + rng.index(5);
        size_t n = b + rng.index(4);
        size_t start = rng.index(n - b + 1);
        BlockRange block{start, b};
        Matrix a = random_row_stochastic(n, rng);

        double candidate = pdg_surrogate(block_submatrix(a, block), order(a, block));
        double optimum = brute_force_min_surrogate(a, block).second;
        double viol = candidate - optimum;  // the optimum enumerates every order
        r.max_violation = std::max(r.max_violation, viol);
        if (viol != 0.0 && r.detail.empty())
            r.detail = "trial " + std::to_string(t) +
                       format(": b=%.0f, order value %.17g vs brute force %.17g",
                              static_cast<double>(b), candidate, optimum);
    }
    r.pass = r.max_violation == 0.0;
    if (r.pass) r.detail = "surrogate of the descending order equals the exhaustive minimum";
    return r;
}

CheckResult check_frozen_attention_bound_holds(size_t trials, uint64_t seed) {
    CheckResult r;
    r.name = "frozen_attention_bound_holds";
    r.trials = trials;
    r.max_violation = -1e300;
    Rng root(seed);
    for (size_t t = 0; t < trials; ++t) {
        Rng rng = root.fork(t);
        ModelConfig mc;
        mc.vocab_size = 4 + rng.index(13);  // 4..16
        mc.dim = 2 + rng.index(5);          // 2..6
        mc.layers = 1;
        mc.heads = 1;
        size_t n = 2 + rng.index(7);  // 2..8
        mc.max_len = n;
        ModelParams params = init_params(mc, rng.next_u64());
        scale_params(params, rng, 0.5, 25.0);

        TokenSeq seq = random_data_tokens(n, mc, rng);
        size_t b = 1 + rng.index(n);
        size_t start = rng.index(n - b + 1);
        BlockRange block{start, b};
        Permutation perm = Permutation::identity(b);
        rng.shuffle(perm.order);

        AttentionTensor frozen = block_masked_attention(params, seq, block);
        double exact = pdg_exact(params, seq, block, perm, true).value;
        double bound = pdg_bound(params, seq, block, perm, frozen.at(0, 0)).value;
        double viol = exact - bound;
        r.max_violation = std::max(r.max_violation, viol);
        if (viol > kBoundTol && r.detail.empty())
            r.detail = "trial " + std::to_string(t) +
                       format(": exact %.17g exceeds bound %.17g", exact, bound);
    }
    r.pass = r.max_violation <= kBoundTol;
    if (r.pass) r.detail = format("largest exact-minus-bound gap %.3g", r.max_violation);
    return r;
}

CheckResult check_adjacent_swap_decreases_surrogate(size_t trials, uint64_t seed) {
    CheckResult r;
    r.name = "adjacent_swap_decreases_surrogate";
    r.trials = trials;
    r.max_violation = -1e300;
    Rng root(seed);
    for (size_t t = 0; t < trials; ++t) {
        Rng rng = root.fork(t);
        size_t b = 2 + rng.index(7);  // 2..8
        Matrix a = random_row_stochastic(b, rng);
        std::vector<double> s = total_attention(a, BlockRange{0, b});

        // Draw orders until one places a strictly lower-scored position
        // immediately before a higher-scored one.
        Permutation perm = Permutation::identity(b);
        std::vector<size_t> inversions;
        for (int attempt = 0; attempt < 1000 && inversions.empty(); ++attempt) {
            rng.shuffle(perm.order);
            for (size_t k = 0; k + 1 < b; ++k)
                if (s[perm.order[k]] + 1e-9 < s[perm.order[k + 1]]) inversions.push_back(k);
        }
        if (inversions.empty()) continue;  // all scores tied; cannot happen with dirichlet rows

        size_t k = inversions[rng.index(inversions.size())];
        Permutation swapped = perm;
        std::swap(swapped.order[k], swapped.order[k + 1]);
        double before = pdg_surrogate(a, perm);
        double after = pdg_surrogate(a, swapped);
        double viol = after - before;  // strict decrease required
        r.max_violation = std::max(r.max_violation, viol);
        if (viol >= 0.0 && r.detail.empty())
            r.detail = "trial " + std::to_string(t) +
                       format(": swap moved surrogate from %.17g to %.17g", before, after);
    }
    r.pass = r.max_violation < 0.0;
    if (r.pass) r.detail = format("largest post-swap change %.3g (all negative)", r.max_violation);
    return r;
}

CheckResult check_negative_entropy_floor_holds(size_t trials, uint64_t seed) {
    CheckResult r;
    r.name = "negative_entropy_floor_holds";
    r.trials = trials;

    std::vector<double> slack(trials, 0.0);
    ptrdiff_t count = static_cast<ptrdiff_t>(trials);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (ptrdiff_t t = 0; t < count; ++t) {
        Rng rng = Rng(seed).fork(static_cast<uint64_t>(t));
        size_t v = 2 + rng.index(49);  // 2..50
        double concentration = rng.uniform(0.1, 3.0);
        ProbVector p = ProbVector::checked(rng.dirichlet(v, concentration));
        slack[static_cast<size_t>(t)] = check_entropy_bound(p).slack;
    }
    double min_slack = *std::min_element(slack.begin(), slack.end());
    r.max_violation = -min_slack;

    std::vector<double> onehot(5, 0.0);
    onehot[2] = 1.0;
    double onehot_slack = check_entropy_bound(ProbVector::checked(onehot)).slack;
    double uniform2_slack = check_entropy_bound(ProbVector::checked({0.5, 0.5})).slack;

    r.pass = r.max_violation <= kEntropyTol && std::fabs(onehot_slack) <= kEqualityTol &&
             std::fabs(uniform2_slack) <= kEqualityTol;
    r.detail = format("min slack %.3g; equality slack %.3g (one-hot), %.3g (uniform-2)",
                      min_slack, onehot_slack, uniform2_slack);
    return r;
}

CheckResult check_logit_gradient_norm_below_sqrt2(size_t trials, uint64_t seed) {
    CheckResult r;
    r.name = "logit_gradient_norm_below_sqrt2";
    r.trials = trials;

    const size_t vocabs[] = {2, 3, 10, 50};
    size_t per = std::max<size_t>(1, trials / 4);
    double observed = 0.0;
    for (size_t i = 0; i < 4; ++i)
        observed = std::max(observed, check_lipschitz_constant(per, vocabs[i], seed + i));

    // Two-class logits with a growing gap drive the norm toward its supremum.
    double ramp = 0.0;
    for (int t = 0; t <= 200; ++t) {
        double logits[2] = {0.0, 0.1 * t};
        ProbVector p = softmax(logits);
        double d0 = p[0] - 1.0;
        ramp = std::max(ramp, std::sqrt(d0 * d0 + p[1] * p[1]));
    }

    r.max_violation =
        std::max(observed - kLogSoftmaxLipschitz, (kLogSoftmaxLipschitz - kRampTol) - ramp);
    r.pass = observed <= kLogSoftmaxLipschitz + kNormTol &&
             ramp >= kLogSoftmaxLipschitz - kRampTol;
    r.detail = format("max norm %.17g; ramp peak %.17g", observed, ramp);
    return r;
}

namespace {

std::vector<size_t> ascending_positions(size_t count, Rng& rng) {
    std::vector<size_t> pos(count, 0);
    size_t cursor = rng.index(10);
    for (size_t i = 0; i < count; ++i) {
        pos[i] = cursor;
        cursor += 1 + rng.index(3);
    }
    return pos;
}

std::vector<double> spread_distribution(size_t vocab, double peak_prob, size_t peak) {
    std::vector<double> p(vocab, (1.0 - peak_prob) / static_cast<double>(vocab - 1));
    p[peak] = peak_prob;
    return p;
}

// Winner holds probability 1 exactly; everything else stays below 1.
StepInput build_certain_winner(Rng& rng) {
    StepInput input;
    size_t m = 2 + rng.index(5);
    size_t v = 3 + rng.index(8);
    size_t wi = rng.index(m);
    input.positions = ascending_positions(m, rng);
    input.step = rng.index(100);
    for (size_t i = 0; i < m; ++i) {
        if (i == wi) {
            std::vector<double> p(v, 0.0);
            p[rng.index(v)] = 1.0;
            input.probs.push_back(ProbVector::checked(p));
        } else {
            std::vector<double> p = rng.dirichlet(v, 1.0);
            while (*std::max_element(p.begin(), p.end()) > 1.0 - 1e-6)
                p = rng.dirichlet(v, 1.0);
            input.probs.push_back(ProbVector::checked(p));
        }
        input.attn_scores.push_back(rng.uniform01());
    }
    return input;
}

// Strict confidence winner; every position spreads its non-peak mass
// uniformly, which pins its negative entropy to the floor value, so the
// winner's clearance of the other floors forces entropy agreement.
StepInput build_dominant_winner(Rng& rng) {
    StepInput input;
    size_t m = 2 + rng.index(5);
    size_t v = 3 + rng.index(8);
    size_t wi = rng.index(m);
    input.positions = ascending_positions(m, rng);
    input.step = rng.index(100);
    double lo = 1.0 / static_cast<double>(v);
    double winner_prob = rng.uniform(lo + 0.05, 0.95);
    for (size_t i = 0; i < m; ++i) {
        double peak = i == wi ? winner_prob : rng.uniform(lo + 0.001, winner_prob - 0.02);
        input.probs.push_back(ProbVector::checked(spread_distribution(v, peak, rng.index(v))));
        input.attn_scores.push_back(rng.uniform01());
    }
    return input;
}

}  // namespace

CheckResult check_entropy_confidence_agreement(size_t trials, uint64_t seed) {
    CheckResult r;
    r.name = "entropy_confidence_agreement";
    r.trials = trials;

    std::vector<uint8_t> ok(trials, 0);
    ptrdiff_t count = static_cast<ptrdiff_t>(trials);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (ptrdiff_t t = 0; t < count; ++t) {
        Rng rng = Rng(seed).fork(static_cast<uint64_t>(t));
        bool want_certain = t % 2 == 0;
        StepInput input = want_certain ? build_certain_winner(rng) : build_dominant_winner(rng);
        SelectionAgreement sa = check_entropy_confidence_conditions(input);
        bool condition = want_certain ? sa.winner_certain : sa.winner_dominates;
        ok[static_cast<size_t>(t)] = condition && sa.agree;
    }
    size_t violations = 0;
    size_t first_bad = trials;
    for (size_t t = 0; t < trials; ++t)
        if (!ok[t]) {
            ++violations;
            first_bad = std::min(first_bad, t);
        }
    r.max_violation = static_cast<double>(violations);
    r.pass = violations == 0;
    r.detail = r.pass ? "selection agreement held on every constructed instance"
                      : "first violating trial " + std::to_string(first_bad);
    return r;
}

CheckResult check_analytic_gradient_matches_finite_diff(uint64_t seed) {
    CheckResult r;
    r.name = "analytic_gradient_matches_finite_diff";
    r.trials = 1;

    ModelConfig mc;
    mc.vocab_size = 11;
    mc.dim = 16;
    mc.layers = 3;
    mc.heads = 2;
    mc.max_len = 10;
    ModelParams params = init_params(mc, seed);
    Rng rng(seed + 1);
    scale_params(params, rng, 1.0, 3.0);

    TokenSeq tokens = random_data_tokens(mc.max_len, mc, rng);
    std::vector<size_t> positions = rng.sample_distinct(4, mc.max_len);

    BackwardResult br = backward(params, tokens, positions);
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
        double diff_sq = 0.0, a_sq = 0.0, f_sq = 0.0;
        for (size_t i = 0; i < span.size(); ++i) {
            double a = analytic[offset + i];
            double g = fd[offset + i];
            diff_sq += (a - g) * (a - g);
            a_sq += a * a;
            f_sq += g * g;
        }
        offset += span.size();
        // Denominator floor 1e-5: a block whose gradient norm sits below it is
        // indistinguishable from zero by central differences at h=1e-5 (the
        // quotient's roundoff noise alone reaches ~3e-10 per block), so such
        // blocks are held to the absolute tolerance kGradTol * 1e-5 instead.
        double rel = std::sqrt(diff_sq) / std::max({std::sqrt(a_sq), std::sqrt(f_sq), 1e-5});
        if (rel > r.max_violation) {
            r.max_violation = rel;
            r.detail = name + format(": relative error %.3g", rel);
        }
    }
    r.pass = r.max_violation <= kGradTol;
    return r;
}

std::vector<CheckResult> run_all_checks(const VerifyOptions& options) {
    auto n = [&](size_t dflt) { return options.trials ? options.trials : dflt; };
    std::vector<CheckResult> out;
    out.push_back(check_descending_order_matches_brute_force(n(1000), options.seed, options.order_fn));
    out.push_back(check_frozen_attention_bound_holds(n(500), options.seed + 101));
    out.push_back(check_adjacent_swap_decreases_surrogate(n(1000), options.seed + 202));
    out.push_back(check_negative_entropy_floor_holds(n(100000), options.seed + 303));
    out.push_back(check_logit_gradient_norm_below_sqrt2(n(100000), options.seed + 404));
    out.push_back(check_entropy_confidence_agreement(n(10000), options.seed + 505));
    out.push_back(check_analytic_gradient_matches_finite_diff(options.seed + 606));
    return out;
}

}  // namespace attnlab
