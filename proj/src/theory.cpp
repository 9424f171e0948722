#include "attnlab/theory.hpp"

#include <algorithm>
#include <cmath>

#include "attnlab/kernels.hpp"
#include "attnlab/numerics.hpp"

namespace attnlab {

namespace {

constexpr double kEntropySlackTol = 1e-12;
constexpr size_t kSurrogateBruteForceCap = 8;  // 8! = 40320 evaluations
constexpr size_t kExactBruteForceCap = 6;      // each permutation costs b forwards

void require_reference_sequence(const ModelParams& params, std::span<const Token> sequence,
                                BlockRange block) {
    params.config.validate();
    if (sequence.empty()) throw InvalidInput("reference sequence is empty");
    if (sequence.size() > params.config.max_len)
        throw SequenceTooLong("reference sequence exceeds max_len");
    if (block.size == 0 || block.end() > sequence.size())
        throw InvalidInput("block outside the reference sequence");
    for (Token t : sequence) {
        if (t < 0 || t >= static_cast<Token>(params.config.vocab_size))
            throw InvalidToken("reference sequence token outside vocabulary");
        if (t == params.config.mask_id())
            throw InvalidToken("reference sequence contains the mask id");
    }
}

std::vector<double> full_terms(const ModelParams& params, std::span<const Token> sequence,
                               BlockRange block, const AttentionTensor* frozen) {
    std::vector<double> terms(block.size, 0.0);
    TokenSeq buf(sequence.begin(), sequence.end());
    for (size_t i = 0; i < block.size; ++i) {
        size_t pos = block.start + i;
        Token truth = buf[pos];
        buf[pos] = params.config.mask_id();
        ForwardResult fr = forward(params, buf, frozen);
        terms[i] = std::log(fr.probs[pos][static_cast<size_t>(truth)]);
        buf[pos] = truth;
    }
    return terms;
}

std::vector<double> chain_terms(const ModelParams& params, std::span<const Token> sequence,
                                BlockRange block, const Permutation& perm,
                                const AttentionTensor* frozen) {
    std::vector<double> terms(block.size, 0.0);
    TokenSeq buf(sequence.begin(), sequence.end());
    for (size_t i = block.start; i < block.end(); ++i) buf[i] = params.config.mask_id();
    for (size_t k = 0; k < block.size; ++k) {
        size_t pos = block.start + perm.order[k];
        ForwardResult fr = forward(params, buf, frozen);
        terms[k] = std::log(fr.probs[pos][static_cast<size_t>(sequence[pos])]);
        buf[pos] = sequence[pos];
    }
    return terms;
}

double sum_terms(const std::vector<double>& terms) {
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

}  // namespace

std::vector<double> total_attention(const Matrix& attention, BlockRange block) {
    if (block.size == 0 || block.end() > attention.rows || block.end() > attention.cols)
        throw InvalidInput("total_attention: block outside the attention matrix");
    std::vector<double> scores(block.size, 0.0);
    for (size_t i = 0; i < block.size; ++i) {
        double s = 0.0;
        for (size_t j = block.start; j < block.end(); ++j) s += attention.at(j, block.start + i);
        scores[i] = s;
    }
    return scores;
}

Matrix block_submatrix(const Matrix& m, BlockRange block) {
    if (block.size == 0 || block.end() > m.rows || block.end() > m.cols)
        throw InvalidInput("block_submatrix: block outside the matrix");
    Matrix out(block.size, block.size);
    for (size_t i = 0; i < block.size; ++i)
        for (size_t j = 0; j < block.size; ++j)
            out.at(i, j) = m.at(block.start + i, block.start + j);
    return out;
}

double pdg_surrogate(const Matrix& block_attention, const Permutation& perm,
                     const std::optional<GapConstants>& constants) {
    if (block_attention.rows != block_attention.cols)
        throw InvalidInput("pdg_surrogate: attention must be square");
    size_t b = block_attention.rows;
    perm.validate(b);
    std::vector<double> s = total_attention(block_attention, BlockRange{0, b});
    std::vector<size_t> ranks = perm.ranks();
    double inv_b = 1.0 / static_cast<double>(b);
    double value = 0.0;
    for (size_t j = 0; j < b; ++j)
        value += static_cast<double>(ranks[j] - 1) * inv_b * s[j];
    if (constants) value *= kLogSoftmaxLipschitz * constants->b_const * constants->w_norm;
    return value;
}

Permutation best_order(const Matrix& attention, BlockRange block) {
    std::vector<double> s = total_attention(attention, block);
    Permutation p = Permutation::identity(block.size);
    std::stable_sort(p.order.begin(), p.order.end(),
                     [&](size_t a, size_t b) { return s[a] > s[b]; });
    return p;
}

std::pair<Permutation, double> brute_force_min_surrogate(const Matrix& attention,
                                                         BlockRange block) {
    if (block.size > kSurrogateBruteForceCap)
        throw BlockTooLarge("brute_force_min_surrogate: block larger than 8");
    Matrix sub = block_submatrix(attention, block);

    Permutation perm = Permutation::identity(block.size);
    Permutation best = perm;
    double best_value = pdg_surrogate(sub, perm);
    while (std::next_permutation(perm.order.begin(), perm.order.end())) {
        double value = pdg_surrogate(sub, perm);
        if (value < best_value) {
            best_value = value;
            best = perm;
        }
    }
    return {best, best_value};
}

AttentionTensor block_masked_attention(const ModelParams& params,
                                       std::span<const Token> sequence, BlockRange block) {
    require_reference_sequence(params, sequence, block);
    TokenSeq buf(sequence.begin(), sequence.end());
    for (size_t i = block.start; i < block.end(); ++i) buf[i] = params.config.mask_id();
    return forward(params, buf).attention;
}

std::vector<double> full_context_log_probs(const ModelParams& params,
                                           std::span<const Token> sequence, BlockRange block,
                                           bool frozen_attention) {
    require_reference_sequence(params, sequence, block);
    std::optional<AttentionTensor> frozen;
    if (frozen_attention) frozen = block_masked_attention(params, sequence, block);
    return full_terms(params, sequence, block, frozen ? &*frozen : nullptr);
}

PdgResult pdg_exact(const ModelParams& params, std::span<const Token> sequence,
                    BlockRange block, const Permutation& perm, bool frozen_attention) {
    require_reference_sequence(params, sequence, block);
    perm.validate(block.size);
    std::optional<AttentionTensor> frozen;
    if (frozen_attention) frozen = block_masked_attention(params, sequence, block);
    const AttentionTensor* fa = frozen ? &*frozen : nullptr;

    PdgResult r;
    r.full_terms = full_terms(params, sequence, block, fa);
    r.chain_terms = chain_terms(params, sequence, block, perm, fa);
    r.value = sum_terms(r.full_terms) - sum_terms(r.chain_terms);
    return r;
}

GapBound pdg_bound(const ModelParams& params, std::span<const Token> sequence, BlockRange block,
                   const Permutation& perm, const Matrix& attention) {
    require_reference_sequence(params, sequence, block);
    perm.validate(block.size);
    if (params.config.layers != 1 || params.config.heads != 1)
        throw UnsupportedModel("pdg_bound: derived for single-layer single-head models only");
    if (attention.rows != sequence.size() || attention.cols != sequence.size())
        throw InvalidInput("pdg_bound: attention shape does not match the sequence");

    ForwardResult fr = forward(params, sequence);
    GapBound gb;
    for (size_t i = 0; i < block.size; ++i) {
        size_t pos = block.start + i;
        gb.b_const = std::max(gb.b_const,
                              l2_distance(fr.values[0].row(pos), fr.mask_values[0].row(pos)));
    }
    gb.w_norm = spectral_norm(params.out_w);
    double sum = 0.0;
    for (size_t k = 0; k < block.size; ++k)
        for (size_t l = k + 1; l < block.size; ++l)
            sum += attention.at(block.start + perm.order[k], block.start + perm.order[l]);
    gb.attn_sum = sum;
    gb.value = kLogSoftmaxLipschitz * gb.b_const * gb.w_norm * sum;
    return gb;
}

std::pair<Permutation, double> brute_force_min_exact_pdg(const ModelParams& params,
                                                         std::span<const Token> sequence,
                                                         BlockRange block,
                                                         bool frozen_attention) {
    if (block.size > kExactBruteForceCap)
        throw BlockTooLarge("brute_force_min_exact_pdg: block larger than 6");
    require_reference_sequence(params, sequence, block);
    std::optional<AttentionTensor> frozen;
    if (frozen_attention) frozen = block_masked_attention(params, sequence, block);
    const AttentionTensor* fa = frozen ? &*frozen : nullptr;

    double full_sum = sum_terms(full_terms(params, sequence, block, fa));
    Permutation perm = Permutation::identity(block.size);
    Permutation best = perm;
    double best_value = full_sum - sum_terms(chain_terms(params, sequence, block, perm, fa));
    while (std::next_permutation(perm.order.begin(), perm.order.end())) {
        double value = full_sum - sum_terms(chain_terms(params, sequence, block, perm, fa));
        if (value < best_value) {
            best_value = value;
            best = perm;
        }
    }
    return {best, best_value};
}

double neg_entropy_floor(double max_probability, size_t vocab_size) {
    if (vocab_size < 2)
        throw InvalidInput("neg_entropy_floor: vocabulary must have at least 2 symbols");
    double lo = 1.0 / static_cast<double>(vocab_size);
    if (!std::isfinite(max_probability) || max_probability < lo - 1e-9 ||
        max_probability > 1.0 + 1e-9)
        throw InvalidInput("neg_entropy_floor: max probability out of range");
    double m = std::clamp(max_probability, lo, 1.0);
    double rest = 1.0 - m;
    double value = m * std::log(m);
    if (rest > 0.0) value += rest * std::log(rest / static_cast<double>(vocab_size - 1));
    return value;
}

EntropyBoundCheck check_entropy_bound(const ProbVector& p) {
    if (p.size() < 2)
        throw InvalidInput("check_entropy_bound: vocabulary must have at least 2 symbols");
    EntropyBoundCheck c;
    c.lhs = -entropy(p);
    c.rhs = neg_entropy_floor(max_prob(p), p.size());
    c.slack = c.lhs - c.rhs;
    c.holds = c.slack >= -kEntropySlackTol;
    return c;
}

BalanceReport check_symmetric_balance(const Matrix& attention,
                                      const std::vector<uint8_t>& masked) {
    size_t n = attention.rows;
    if (attention.cols != n) throw InvalidInput("check_symmetric_balance: attention must be square");
    if (masked.size() != n) throw InvalidInput("check_symmetric_balance: flag buffer mismatch");

    std::vector<double> col_sum(n, 0.0);
    std::vector<double> unmasked_row_sum(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            col_sum[i] += attention.at(j, i);
            if (!masked[j]) unmasked_row_sum[i] += attention.at(i, j);
        }
    }

    // A strictly increasing link survives pairs tied on both sides but not
    // pairs tied on one side only, and never discordant pairs.
    BalanceReport rep;
    for (size_t a = 0; a < n; ++a) {
        for (size_t b = a + 1; b < n; ++b) {
            double dc = col_sum[a] - col_sum[b];
            double du = unmasked_row_sum[a] - unmasked_row_sum[b];
            bool tie_c = dc == 0.0;
            bool tie_u = du == 0.0;
            if (tie_c != tie_u) {
                ++rep.violations;
                ++rep.cross_ties;
            } else if (!tie_c && (dc > 0.0) != (du > 0.0)) {
                ++rep.violations;
            }
        }
    }
    rep.balanced = rep.violations == 0;
    return rep;
}

std::vector<AgreementStep> check_confidence_attention_agreement(const ModelParams& params,
                                                                DecodeState state,
                                                                const DecodeOptions& options) {
    state.validate(params.config);
    auto layers = options.layer_set.empty() ? index_range(params.config.layers) : options.layer_set;
    auto heads = options.head_set.empty() ? index_range(params.config.heads) : options.head_set;

    std::vector<AgreementStep> rows;
    while (!state.block_done()) {
        ForwardResult fr = forward(params, state.tokens);
        StepInput input = make_step_input(fr, state, options);
        size_t attn_pick = attn_sequential(input).positions.front();
        size_t conf_pick = confidence_select(input).positions.front();
        BalanceReport bal =
            check_symmetric_balance(aggregate_attention(fr.attention, layers, heads), state.masked);

        AgreementStep row;
        row.step = state.step_counter;
        row.agree = attn_pick == conf_pick;
        row.balanced = bal.balanced;
        row.violations = bal.violations;
        rows.push_back(row);

        state.tokens[attn_pick] = greedy_token(fr.probs[attn_pick]);
        state.masked[attn_pick] = 0;
        ++state.step_counter;
    }
    return rows;
}

SelectionAgreement check_entropy_confidence_conditions(const StepInput& input) {
    input.validate();
    SelectionAgreement out;
    size_t conf = confidence_select(input).positions.front();
    size_t ent = entropy_select(input).positions.front();
    out.agree = conf == ent;

    size_t n = input.positions.size();
    size_t wi = static_cast<size_t>(
        std::lower_bound(input.positions.begin(), input.positions.end(), conf) -
        input.positions.begin());
    double winner_prob = max_prob(input.probs[wi]);

    size_t certain = 0;
    for (size_t i = 0; i < n; ++i)
        if (max_prob(input.probs[i]) == 1.0) ++certain;
    out.winner_certain = certain == 1 && winner_prob == 1.0;

    bool strict = true;
    bool dominates = true;
    double winner_neg_entropy = -entropy(input.probs[wi]);
    for (size_t i = 0; i < n; ++i) {
        if (i == wi) continue;
        double mp = max_prob(input.probs[i]);
        if (mp >= winner_prob) strict = false;
        if (winner_neg_entropy < neg_entropy_floor(mp, input.probs[i].size())) dominates = false;
    }
    out.winner_dominates = strict && dominates;
    return out;
}

AssumptionDiagnostics diagnose_assumptions(const ModelParams& params,
                                           std::span<const Token> sequence, BlockRange block,
                                           const SamplerFn& sampler,
                                           const DecodeOptions& options) {
    require_reference_sequence(params, sequence, block);
    DecodeState state =
        DecodeState::for_block_eval(sequence, block, block.size, params.config.mask_id());
    state.validate(params.config);
    auto layers = options.layer_set.empty() ? index_range(params.config.layers) : options.layer_set;
    auto heads = options.head_set.empty() ? index_range(params.config.heads) : options.head_set;

    AssumptionDiagnostics diag;
    std::optional<AttentionTensor> frozen;
    std::optional<Matrix> first;
    std::vector<size_t> decoded;  // absolute positions, decode order
    double inv_b = 1.0 / static_cast<double>(block.size);

    size_t guard = 0;
    while (!state.block_done()) {
        if (++guard > state.block_size)
            throw SamplerStalled("decode loop exceeded the block size");  // defensive; unreachable
        // The diagnostics describe the attention the decode actually used, so
        // frozen mode pins the map here too (and reports zero drift).
        ForwardResult fr = forward(params, state.tokens, frozen ? &*frozen : nullptr);
        if (options.frozen_attention && !frozen) frozen = fr.attention;
        Matrix agg = aggregate_attention(fr.attention, layers, heads);
        if (!first) {
            first = agg;
            diag.balance_violations = check_symmetric_balance(agg, state.masked).violations;
        } else {
            diag.attn_drift = std::max(diag.attn_drift, max_abs_diff(agg, *first));
        }

        StepInput input = make_step_input(fr, state, options);
        std::vector<size_t> selected = validate_step_decision(sampler(input), state);
        for (size_t p : selected) {
            if (!decoded.empty()) {
                double all_rows = 0.0;
                for (size_t i = block.start; i < block.end(); ++i) all_rows += agg.at(i, p);
                double decoded_rows = 0.0;
                for (size_t i : decoded) decoded_rows += agg.at(i, p);
                diag.mean_attention_gap.push_back(std::fabs(
                    all_rows * inv_b - decoded_rows / static_cast<double>(decoded.size())));
            }
        }
        for (size_t p : selected) {
            state.tokens[p] = greedy_token(fr.probs[p]);
            state.masked[p] = 0;
            decoded.push_back(p);
        }
        ++state.step_counter;
    }
    return diag;
}

double check_lipschitz_constant(size_t num_trials, size_t vocab_size, uint64_t seed) {
    if (num_trials == 0) throw InvalidInput("check_lipschitz_constant: need at least one trial");
    if (vocab_size < 2)
        throw InvalidInput("check_lipschitz_constant: vocabulary must have at least 2 symbols");

    std::vector<double> norms(num_trials, 0.0);
    ptrdiff_t count = static_cast<ptrdiff_t>(num_trials);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (ptrdiff_t t = 0; t < count; ++t) {
        Rng rng = Rng(seed).fork(static_cast<uint64_t>(t));
        std::vector<double> logits(vocab_size);
        for (double& x : logits) x = rng.uniform(-10.0, 10.0);
        ProbVector p = softmax(logits);
        size_t target = rng.index(vocab_size);
        double sq = 0.0;
        for (size_t j = 0; j < vocab_size; ++j) {
            double d = p[j] - (j == target ? 1.0 : 0.0);
            sq += d * d;
        }
        norms[static_cast<size_t>(t)] = std::sqrt(sq);
    }
    return *std::max_element(norms.begin(), norms.end());
}

}  // namespace attnlab
