#include "attnlab/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace attnlab {

ScoringRegion scoring_region_from_string(const std::string& name) {
    if (name == "block") return ScoringRegion::block;
    if (name == "full_sequence") return ScoringRegion::full_sequence;
    throw InvalidInput("unknown scoring region: " + name);
}

std::string to_string(ScoringRegion region) {
    return region == ScoringRegion::block ? "block" : "full_sequence";
}

void Permutation::validate(size_t block_size) const {
    if (order.size() != block_size) throw InvalidInput("permutation: wrong length");
    std::vector<bool> seen(block_size, false);
    for (size_t p : order) {
        if (p >= block_size) throw InvalidInput("permutation: entry out of range");
        if (seen[p]) throw InvalidInput("permutation: repeated entry");
        seen[p] = true;
    }
}

std::vector<size_t> Permutation::ranks() const {
    std::vector<size_t> r(order.size(), 0);
    for (size_t step = 0; step < order.size(); ++step) r[order[step]] = step + 1;
    return r;
}

Permutation Permutation::identity(size_t block_size) {
    Permutation p;
    p.order.resize(block_size);
    for (size_t i = 0; i < block_size; ++i) p.order[i] = i;
    return p;
}

bool traces_equal(const DecodeTrace& a, const DecodeTrace& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& x = a[i];
        const auto& y = b[i];
        if (x.step != y.step || x.positions != y.positions || x.tokens != y.tokens ||
            x.confidence != y.confidence || x.attn_score != y.attn_score)
            return false;
        if (x.gamma.has_value() != y.gamma.has_value()) return false;
        if (x.gamma && *x.gamma != *y.gamma) return false;
    }
    return true;
}

DecodeState DecodeState::for_generation(std::span<const Token> prompt, size_t block_size,
                                        size_t sub_block_size, Token mask_id) {
    if (block_size == 0) throw InvalidInput("decode state: block_size must be positive");
    if (sub_block_size == 0 || block_size % sub_block_size != 0)
        throw InvalidInput("decode state: sub_block_size must divide block_size");
    for (Token t : prompt)
        if (t == mask_id) throw InvalidToken("decode state: prompt contains the mask id");

    DecodeState s;
    s.tokens.assign(prompt.begin(), prompt.end());
    s.masked.assign(prompt.size(), 0);
    s.block_start = prompt.size();
    s.block_size = block_size;
    s.sub_block_size = sub_block_size;
    s.tokens.insert(s.tokens.end(), block_size, mask_id);
    s.masked.insert(s.masked.end(), block_size, 1);
    return s;
}

DecodeState DecodeState::for_block_eval(std::span<const Token> sequence, BlockRange block,
                                        size_t sub_block_size, Token mask_id) {
    if (block.size == 0) throw InvalidInput("decode state: block_size must be positive");
    if (block.end() > sequence.size()) throw InvalidInput("decode state: block outside sequence");
    if (sub_block_size == 0 || block.size % sub_block_size != 0)
        throw InvalidInput("decode state: sub_block_size must divide block_size");
    for (Token t : sequence)
        if (t == mask_id) throw InvalidToken("decode state: reference sequence contains the mask id");

    DecodeState s;
    s.tokens.assign(sequence.begin(), sequence.end());
    s.masked.assign(sequence.size(), 0);
    s.block_start = block.start;
    s.block_size = block.size;
    s.sub_block_size = sub_block_size;
    for (size_t i = block.start; i < block.end(); ++i) {
        s.tokens[i] = mask_id;
        s.masked[i] = 1;
    }
    return s;
}

bool DecodeState::block_done() const {
    for (size_t i = block_start; i < block_start + block_size; ++i)
        if (masked[i]) return false;
    return true;
}

std::vector<size_t> DecodeState::masked_block_positions() const {
    std::vector<size_t> out;
    for (size_t i = block_start; i < block_start + block_size; ++i)
        if (masked[i]) out.push_back(i);
    return out;
}

void DecodeState::append_block(size_t new_block_size, size_t new_sub_block_size, Token mask_id) {
    if (!block_done()) throw InvalidInput("decode state: previous block still has masks");
    if (new_block_size == 0) throw InvalidInput("decode state: block_size must be positive");
    if (new_sub_block_size == 0 || new_block_size % new_sub_block_size != 0)
        throw InvalidInput("decode state: sub_block_size must divide block_size");
    block_start = tokens.size();
    block_size = new_block_size;
    sub_block_size = new_sub_block_size;
    tokens.insert(tokens.end(), new_block_size, mask_id);
    masked.insert(masked.end(), new_block_size, 1);
}

void DecodeState::validate(const ModelConfig& config) const {
    if (tokens.empty()) throw InvalidInput("decode state: empty buffer");
    if (tokens.size() > config.max_len) throw SequenceTooLong("decode state: buffer exceeds max_len");
    if (masked.size() != tokens.size()) throw InvalidInput("decode state: flag buffer mismatch");
    if (block_size == 0 || block_start + block_size > tokens.size())
        throw InvalidInput("decode state: block outside buffer");
    if (sub_block_size == 0 || block_size % sub_block_size != 0)
        throw InvalidInput("decode state: sub_block_size must divide block_size");
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= static_cast<Token>(config.vocab_size))
            throw InvalidToken("decode state: token outside vocabulary");
        bool is_mask = tokens[i] == config.mask_id();
        if (is_mask != static_cast<bool>(masked[i]))
            throw InvalidInput("decode state: mask flags disagree with buffer");
        if (is_mask && !block().contains(i))
            throw InvalidInput("decode state: mask outside the active block");
    }
}

std::vector<double> sub_block_scores(const Matrix& attention, const DecodeState& state) {
    size_t n = state.tokens.size();
    if (attention.rows != n || attention.cols != n)
        throw InvalidInput("sub_block_scores: attention shape does not match buffer");
    if (state.sub_block_size == 0 || state.block_size % state.sub_block_size != 0)
        throw InvalidInput("sub_block_scores: sub_block_size must divide block_size");

    std::vector<double> scores(state.block_size, 0.0);
    size_t num_sub = state.block_size / state.sub_block_size;
    for (size_t sb = 0; sb < num_sub; ++sb) {
        size_t lo = state.block_start + sb * state.sub_block_size;
        size_t hi = lo + state.sub_block_size;
        for (size_t i = lo; i < hi; ++i) {
            double s = 0.0;
            for (size_t j = lo; j < hi; ++j) s += attention.at(j, i);
            scores[i - state.block_start] = s;
        }
    }
    return scores;
}

StepInput make_step_input(const ForwardResult& fr, const DecodeState& state,
                          const DecodeOptions& options) {
    auto layers = options.layer_set.empty() ? index_range(fr.attention.layers) : options.layer_set;
    auto heads = options.head_set.empty() ? index_range(fr.attention.heads) : options.head_set;
    Matrix agg = aggregate_attention(fr.attention, layers, heads);

    std::vector<double> scores(state.block_size, 0.0);
    if (options.scoring_region == ScoringRegion::block) {
        scores = sub_block_scores(agg, state);
    } else {
        for (size_t i = 0; i < state.block_size; ++i) {
            double s = 0.0;
            size_t col = state.block_start + i;
            for (size_t j = 0; j < agg.rows; ++j) s += agg.at(j, col);
            scores[i] = s;
        }
    }

    StepInput input;
    input.step = state.step_counter;
    input.positions = state.masked_block_positions();
    for (size_t p : input.positions) {
        input.probs.push_back(fr.probs[p]);
        input.attn_scores.push_back(scores[p - state.block_start]);
    }
    return input;
}

Token greedy_token(const ProbVector& probs) {
    std::span<const double> data(probs.p.data(), probs.p.size() - 1);
    return static_cast<Token>(argmax_index(data));
}

std::vector<size_t> validate_step_decision(const StepDecision& decision,
                                           const DecodeState& state) {
    if (decision.positions.empty())
        throw SamplerStalled("sampler selected no positions");
    std::vector<size_t> sel = decision.positions;
    std::sort(sel.begin(), sel.end());
    for (size_t i = 0; i < sel.size(); ++i) {
        size_t p = sel[i];
        if (i > 0 && sel[i - 1] == p)
            throw SamplerViolation("sampler selected the same position twice");
        if (!state.block().contains(p) || !state.masked[p])
            throw SamplerViolation("sampler selected a position that is not a masked block position");
    }
    return sel;
}

namespace {

struct StepPrep {
    ForwardResult fr;
    StepInput input;
};

StepPrep prepare_step(const ModelParams& params, const DecodeState& state,
                      const DecodeOptions& options, const AttentionTensor* frozen) {
    StepPrep prep;
    prep.fr = forward(params, state.tokens, frozen);
    prep.input = make_step_input(prep.fr, state, options);
    return prep;
}

void record_step(DecodeState& state, const StepPrep& prep, const StepDecision& decision,
                 const std::vector<size_t>& selected) {
    TraceStep ts;
    ts.step = state.step_counter;
    ts.gamma = decision.gamma;
    for (size_t p : selected) {
        size_t idx = static_cast<size_t>(
            std::lower_bound(prep.input.positions.begin(), prep.input.positions.end(), p) -
            prep.input.positions.begin());
        ts.positions.push_back(p);
        ts.tokens.push_back(state.tokens[p]);
        ts.confidence.push_back(max_prob(prep.input.probs[idx]));
        ts.attn_score.push_back(prep.input.attn_scores[idx]);
    }
    state.trace.push_back(std::move(ts));
}

}  // namespace

void decode_block(const ModelParams& params, DecodeState& state, const SamplerFn& sampler,
                  const DecodeOptions& options) {
    state.validate(params.config);
    std::optional<AttentionTensor> frozen;
    size_t guard = 0;
    while (!state.block_done()) {
        if (++guard > state.block_size)
            throw SamplerStalled("decode loop exceeded the block size");  // defensive; unreachable
        StepPrep prep = prepare_step(params, state, options, frozen ? &*frozen : nullptr);
        if (options.frozen_attention && !frozen) frozen = prep.fr.attention;

        StepDecision decision = sampler(prep.input);
        std::vector<size_t> selected = validate_step_decision(decision, state);
        for (size_t p : selected) {
            state.tokens[p] = greedy_token(prep.fr.probs[p]);
            state.masked[p] = 0;
        }
        record_step(state, prep, decision, selected);
        ++state.step_counter;
    }
}

GenerateResult generate(const ModelParams& params, std::span<const Token> prompt,
                        size_t num_blocks, size_t block_size, size_t sub_block_size,
                        const SamplerFn& sampler, std::optional<Token> eos,
                        const DecodeOptions& options) {
    params.config.validate();
    if (block_size == 0) throw InvalidInput("generate: block_size must be positive");
    if (sub_block_size == 0) sub_block_size = block_size;

    GenerateResult result;
    result.tokens.assign(prompt.begin(), prompt.end());
    if (num_blocks == 0) return result;

    if (prompt.size() + block_size > params.config.max_len)
        throw SequenceTooLong("generate: first block does not fit under max_len");
    DecodeState state = DecodeState::for_generation(prompt, block_size, sub_block_size,
                                                    params.config.mask_id());
    for (size_t b = 0; b < num_blocks; ++b) {
        if (b > 0) {
            if (state.tokens.size() + block_size > params.config.max_len)
                throw SequenceTooLong("generate: next block does not fit under max_len");
            state.append_block(block_size, sub_block_size, params.config.mask_id());
        }
        decode_block(params, state, sampler, options);
        ++result.blocks_decoded;
        bool saw_eos = false;
        if (eos) {
            for (size_t i = state.block_start; i < state.block_start + state.block_size; ++i)
                if (state.tokens[i] == *eos) saw_eos = true;
        }
        if (saw_eos) break;
    }
    result.tokens = state.tokens;
    result.trace = std::move(state.trace);
    return result;
}

BlockEval teacher_forced_decode(const ModelParams& params, std::span<const Token> sequence,
                                BlockRange block, const SamplerFn& sampler,
                                const DecodeOptions& options, size_t sub_block_size) {
    params.config.validate();
    if (sub_block_size == 0) sub_block_size = block.size;
    DecodeState state =
        DecodeState::for_block_eval(sequence, block, sub_block_size, params.config.mask_id());
    state.validate(params.config);

    BlockEval eval;
    std::optional<AttentionTensor> frozen;
    size_t guard = 0;
    while (!state.block_done()) {
        if (++guard > state.block_size)
            throw SamplerStalled("decode loop exceeded the block size");  // defensive; unreachable
        StepPrep prep = prepare_step(params, state, options, frozen ? &*frozen : nullptr);
        if (options.frozen_attention && !frozen) frozen = prep.fr.attention;

        StepDecision decision = sampler(prep.input);
        std::vector<size_t> selected = validate_step_decision(decision, state);
        for (size_t p : selected) {
            eval.chain_log_likelihood +=
                std::log(prep.fr.probs[p][static_cast<size_t>(sequence[p])]);
            state.tokens[p] = sequence[p];
            state.masked[p] = 0;
        }
        record_step(state, prep, decision, selected);
        ++state.step_counter;
        ++eval.steps;
    }
    eval.trace = std::move(state.trace);
    return eval;
}

std::string trace_to_json(const DecodeTrace& trace) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& ts : trace) {
        nlohmann::json j;
        j["step"] = ts.step;
        j["positions"] = ts.positions;
        j["tokens"] = ts.tokens;
        j["confidence"] = ts.confidence;
        j["attention_score"] = ts.attn_score;
        if (ts.gamma && std::isfinite(*ts.gamma))
            j["gamma"] = *ts.gamma;
        else
            j["gamma"] = nullptr;
        steps.push_back(std::move(j));
    }
    nlohmann::json root;
    root["steps"] = std::move(steps);
    return root.dump(2);
}

}  // namespace attnlab
