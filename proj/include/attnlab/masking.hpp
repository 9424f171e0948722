#pragma once

#include <span>
#include <vector>

#include "attnlab/rng.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

// Mask-fraction source for corruption during training. uniform_fraction
// draws from [min_fraction, max_fraction] each call; per_step_linear ramps
// deterministically through (1/T, 2/T, ..., 1) and repeats.
struct MaskSchedule {
    enum class Kind { uniform_fraction, per_step_linear };

    Kind kind = Kind::uniform_fraction;
    double min_fraction = 0.15;
    double max_fraction = 1.0;
    size_t total_steps = 0;  // ramp period for per_step_linear

    void validate() const;
    double fraction(size_t step, Rng& rng) const;  // always in (0, 1]
};

// Number of positions to corrupt: ceil(fraction * n), computed with a small
// slack so that products like 0.3 * 10 do not round up spuriously.
size_t mask_count(double fraction, size_t n);

struct MaskedSequence {
    TokenSeq tokens;                 // input with mask ids substituted
    std::vector<size_t> positions;   // masked positions, ascending
};

// Masks exactly mask_count(fraction, n) uniformly chosen distinct positions.
MaskedSequence apply_forward_mask(std::span<const Token> tokens, Token mask_id,
                                  double fraction, Rng& rng);

}  // namespace attnlab
