#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "attnlab/diffusion.hpp"
#include "attnlab/model.hpp"
#include "attnlab/samplers.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

// How much attention each block position receives from inside the block:
// score[i] = sum over block rows j of attention[j][block.start + i].
std::vector<double> total_attention(const Matrix& attention, BlockRange block);

Matrix block_submatrix(const Matrix& m, BlockRange block);

// Scale constants for the decoding-order objective: sqrt(2) * b_const *
// w_norm, where b_const bounds the value-vector perturbation caused by
// masking and w_norm is the spectral norm of the readout.
struct GapConstants {
    double b_const = 0.0;
    double w_norm = 0.0;
};

inline constexpr double kLogSoftmaxLipschitz = 1.4142135623730951;  // sqrt(2)

// Order-dependence proxy of a decode order: sum over block positions of
// (rank - 1) / b * total_attention, optionally scaled by the constants.
// block_attention is the b x b attention submatrix over the block.
double pdg_surrogate(const Matrix& block_attention, const Permutation& perm,
                     const std::optional<GapConstants>& constants = std::nullopt);

// Decode order sorting total attention descending; ties keep the lower
// position first.
Permutation best_order(const Matrix& attention, BlockRange block);

// Exhaustive minimum of the surrogate over all orderings of the block.
// Blocks larger than 8 are refused.
std::pair<Permutation, double> brute_force_min_surrogate(const Matrix& attention,
                                                         BlockRange block);

// Permutation dependency gap: the block's full-context log-likelihood minus
// its chain log-likelihood under the given decode order, both teacher
// forced. frozen_attention replaces the attention of every forward pass with
// the all-masked-block attention.
struct PdgResult {
    double value = 0.0;
    std::vector<double> full_terms;   // log p(true) per block position
    std::vector<double> chain_terms;  // log p(true) per decode step
};
PdgResult pdg_exact(const ModelParams& params, std::span<const Token> sequence,
                    BlockRange block, const Permutation& perm, bool frozen_attention);

// Sum over block positions of log p(true token | everything else visible).
// Shared first term of the gap; independent of the decode order.
std::vector<double> full_context_log_probs(const ModelParams& params,
                                           std::span<const Token> sequence, BlockRange block,
                                           bool frozen_attention);

// The attention tensor at the all-masked-block state, used as the frozen map.
AttentionTensor block_masked_attention(const ModelParams& params,
                                       std::span<const Token> sequence, BlockRange block);

// Upper bound on the gap for single-layer single-head models under frozen
// attention: sqrt(2) * B * ||W||_2 * sum of attention mass from each position
// to the positions decoded after it. B is the largest distance between a true
// token's value vector and the mask token's value vector at the same
// position, over block positions. attention must be the frozen map.
struct GapBound {
    double value = 0.0;
    double b_const = 0.0;
    double w_norm = 0.0;
    double attn_sum = 0.0;
};
GapBound pdg_bound(const ModelParams& params, std::span<const Token> sequence, BlockRange block,
                   const Permutation& perm, const Matrix& attention);

// Exhaustive argmin of the exact gap. Blocks larger than 6 are refused.
std::pair<Permutation, double> brute_force_min_exact_pdg(const ModelParams& params,
                                                         std::span<const Token> sequence,
                                                         BlockRange block, bool frozen_attention);

// Negative entropy of the distribution that puts max_probability on one
// symbol and spreads the rest uniformly: the lowest -H(p) can go for a given
// maximum probability. The max_probability = 1 limit is 0.
double neg_entropy_floor(double max_probability, size_t vocab_size);

struct EntropyBoundCheck {
    double lhs = 0.0;    // -H(p)
    double rhs = 0.0;    // floor at max_prob(p)
    double slack = 0.0;  // lhs - rhs, nonnegative up to fp error
    bool holds = false;
};
EntropyBoundCheck check_entropy_bound(const ProbVector& p);

// Whether a strictly increasing map can link each position's attention mass
// from unmasked context (row sum over unmasked columns) to its total column
// sum. Discordant pairs and pairs tied on exactly one side both break strict
// monotonicity and count as violations; cross_ties reports the tied subset.
struct BalanceReport {
    size_t violations = 0;
    size_t cross_ties = 0;
    bool balanced = false;
};
BalanceReport check_symmetric_balance(const Matrix& attention,
                                      const std::vector<uint8_t>& masked);

// Decodes the block with the attention-sequential rule and records, at each
// step, whether confidence selection would have picked the same position,
// along with the balance diagnosis of the attention map at that step.
struct AgreementStep {
    size_t step = 0;
    bool agree = false;
    bool balanced = false;
    size_t violations = 0;
};
std::vector<AgreementStep> check_confidence_attention_agreement(const ModelParams& params,
                                                                DecodeState state,
                                                                const DecodeOptions& options = {});

// Conditions under which lowest-entropy and highest-confidence selection
// coincide: (i) the confidence winner is the unique one-hot, or (ii) it is a
// strict confidence winner whose negative entropy is at least every other
// position's spread-distribution value neg_entropy_floor(max_prob).
struct SelectionAgreement {
    bool winner_certain = false;    // condition (i)
    bool winner_dominates = false;  // condition (ii)
    bool agree = false;             // entropy_select == confidence_select
};
SelectionAgreement check_entropy_confidence_conditions(const StepInput& input);

// Measured departures from the two idealizations behind the surrogate: how
// much the attention map moves while decoding, and how far mean attention
// from already-decoded rows sits from the all-rows mean.
struct AssumptionDiagnostics {
    double attn_drift = 0.0;                 // max |A_step - A_first| over steps
    std::vector<double> mean_attention_gap;  // per decode step, from step 2 on
    size_t balance_violations = 0;           // on the first-step attention
};
AssumptionDiagnostics diagnose_assumptions(const ModelParams& params,
                                           std::span<const Token> sequence, BlockRange block,
                                           const SamplerFn& sampler,
                                           const DecodeOptions& options = {});

// Largest gradient norm ||softmax(logits) - onehot(target)||_2 seen over
// random logits; never exceeds sqrt(2).
double check_lipschitz_constant(size_t num_trials, size_t vocab_size, uint64_t seed);

}  // namespace attnlab
