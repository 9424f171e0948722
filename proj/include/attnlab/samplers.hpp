#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attnlab/numerics.hpp"

namespace attnlab {

// Strategies for picking which masked positions to decode at a step.
// Sequential kinds return one position; parallel kinds may return several.
enum class SamplerKind {
    attn_sequential,
    attn_parallel,
    confidence,
    margin,
    entropy,
    confidence_threshold_parallel,
    attn_topk,
    attn_static_threshold,
    random,
};

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);  // InvalidInput on unknown

struct SamplerConfig {
    SamplerKind kind = SamplerKind::attn_sequential;
    double tau = 0.0;               // attn_parallel, confidence_threshold_parallel
    size_t top_k = 0;               // attn_topk
    double static_threshold = 0.0;  // attn_static_threshold
    uint64_t seed = 0;              // random

    void validate() const;
    std::string label() const;  // stable row label for reports
};

// What a sampler sees at one decode step: the currently masked positions of
// the active block (ascending), the model distribution and the attention
// score for each, and the step counter.
struct StepInput {
    std::vector<size_t> positions;
    std::vector<ProbVector> probs;
    std::vector<double> attn_scores;
    size_t step = 0;

    void validate() const;
};

struct StepDecision {
    std::vector<size_t> positions;  // ascending, nonempty subset of the input
    std::optional<double> gamma;    // dynamic threshold, when one was formed
};

// One position with the highest attention score (lowest index on ties).
StepDecision attn_sequential(const StepInput& input);

// Confident positions (max prob >= tau) whose attention score exceeds the
// best score among the unconfident ones; falls back to attn_sequential when
// that set is empty. tau above 1 therefore degenerates to sequential.
StepDecision attn_parallel(const StepInput& input, double tau);

StepDecision confidence_select(const StepInput& input);       // highest max prob
StepDecision margin_select(const StepInput& input);           // largest top-2 gap
StepDecision entropy_select(const StepInput& input);          // lowest entropy

// All positions with max prob >= tau; highest-confidence singleton if none.
StepDecision confidence_threshold_parallel(const StepInput& input, double tau);

// k highest-attention positions (all, if fewer remain).
StepDecision attn_topk(const StepInput& input, size_t k);

// Positions with attention score strictly above a fixed threshold;
// highest-attention singleton if none.
StepDecision attn_static_threshold(const StepInput& input, double threshold);

// Uniformly random masked position, deterministic in (seed, step).
StepDecision random_select(const StepInput& input, uint64_t seed);

using SamplerFn = std::function<StepDecision(const StepInput&)>;
SamplerFn make_sampler(const SamplerConfig& config);

}  // namespace attnlab
