#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnlab/masking.hpp"
#include "attnlab/model.hpp"
#include "attnlab/samplers.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

// Which rows of the attention matrix contribute to a position's total
// attention score: the active block only, or every visible position.
enum class ScoringRegion { block, full_sequence };

ScoringRegion scoring_region_from_string(const std::string& name);
std::string to_string(ScoringRegion region);

// Decoding order over a block: order[k] is the block-relative position
// decoded at step k.
struct Permutation {
    std::vector<size_t> order;

    void validate(size_t block_size) const;     // bijection over [0, block_size)
    std::vector<size_t> ranks() const;          // ranks[pos] = 1-based decode step
    static Permutation identity(size_t block_size);
};

struct TraceStep {
    size_t step = 0;
    std::vector<size_t> positions;   // absolute buffer positions, ascending
    std::vector<Token> tokens;       // committed token ids
    std::vector<double> confidence;  // max prob at commit time
    std::vector<double> attn_score;
    std::optional<double> gamma;     // dynamic threshold, when the step formed one
};
using DecodeTrace = std::vector<TraceStep>;

bool traces_equal(const DecodeTrace& a, const DecodeTrace& b);

// Token buffer with one active block of masked positions.
struct DecodeState {
    TokenSeq tokens;
    std::vector<uint8_t> masked;  // per position; 1 iff tokens[i] is the mask id
    size_t block_start = 0;
    size_t block_size = 0;
    size_t sub_block_size = 0;  // divides block_size
    size_t step_counter = 0;
    DecodeTrace trace;

    // Prompt followed by one fully masked block.
    static DecodeState for_generation(std::span<const Token> prompt, size_t block_size,
                                      size_t sub_block_size, Token mask_id);
    // A full sequence with only the given block masked out.
    static DecodeState for_block_eval(std::span<const Token> sequence, BlockRange block,
                                      size_t sub_block_size, Token mask_id);

    BlockRange block() const { return {block_start, block_size}; }
    bool block_done() const;
    std::vector<size_t> masked_block_positions() const;  // ascending
    void append_block(size_t new_block_size, size_t new_sub_block_size, Token mask_id);
    void validate(const ModelConfig& config) const;
};

struct DecodeOptions {
    ScoringRegion scoring_region = ScoringRegion::block;
    // Reuse the attention captured at the first step of the block (all block
    // positions masked) for every later forward pass.
    bool frozen_attention = false;
    std::vector<size_t> layer_set;  // empty means all layers
    std::vector<size_t> head_set;   // empty means all heads
};

// Total attention score for every block position, summing attention rows
// within each sub-block (the whole block when sub_block_size == block_size).
// attention is the aggregated map over the full visible buffer.
std::vector<double> sub_block_scores(const Matrix& attention, const DecodeState& state);

// Assembles the sampler's view of one denoising step from a forward pass
// over the state's buffer.
StepInput make_step_input(const ForwardResult& fr, const DecodeState& state,
                          const DecodeOptions& options = {});

// The token a decode step commits: argmax over the data vocabulary. The mask
// id (always the last entry) never gets committed.
Token greedy_token(const ProbVector& probs);

// Selected positions, sorted ascending, after checking the sampler played by
// the rules. Throws SamplerStalled on an empty selection and SamplerViolation
// on duplicates or positions that are not masked block positions.
std::vector<size_t> validate_step_decision(const StepDecision& decision,
                                           const DecodeState& state);

// Runs the sampler until the active block holds no mask. Committed tokens
// are the argmax over the non-mask vocabulary. Throws SamplerStalled when a
// step selects nothing and SamplerViolation when it selects a position that
// is not currently masked.
void decode_block(const ModelParams& params, DecodeState& state, const SamplerFn& sampler,
                  const DecodeOptions& options = {});

struct GenerateResult {
    TokenSeq tokens;
    DecodeTrace trace;
    size_t blocks_decoded = 0;
};

// Appends and decodes up to num_blocks blocks; stops early once a decoded
// block contains eos.
GenerateResult generate(const ModelParams& params, std::span<const Token> prompt,
                        size_t num_blocks, size_t block_size, size_t sub_block_size,
                        const SamplerFn& sampler, std::optional<Token> eos,
                        const DecodeOptions& options = {});

struct BlockEval {
    DecodeTrace trace;
    double chain_log_likelihood = 0.0;  // sum of log p(true token) in decode order
    size_t steps = 0;                   // forward passes consumed
};

// Teacher-forced pass over one block of a reference sequence: the sampler
// chooses the order, but the true tokens are revealed, and their
// log-probabilities under the partially masked context are accumulated.
// sub_block_size 0 means the whole block.
BlockEval teacher_forced_decode(const ModelParams& params, std::span<const Token> sequence,
                                BlockRange block, const SamplerFn& sampler,
                                const DecodeOptions& options = {}, size_t sub_block_size = 0);

std::string trace_to_json(const DecodeTrace& trace);

}  // namespace attnlab
