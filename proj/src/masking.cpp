#include "attnlab/masking.hpp"

#include <cmath>

#include "attnlab/errors.hpp"

namespace attnlab {

void MaskSchedule::validate() const {
    if (kind == Kind::uniform_fraction) {
        if (!(min_fraction > 0.0) || !(max_fraction <= 1.0) || !(min_fraction <= max_fraction))
            throw InvalidInput("mask schedule: need 0 < min_fraction <= max_fraction <= 1");
    } else {
        if (total_steps == 0) throw InvalidInput("mask schedule: total_steps must be positive");
    }
}

double MaskSchedule::fraction(size_t step, Rng& rng) const {
    validate();
    if (kind == Kind::uniform_fraction) return rng.uniform(min_fraction, max_fraction);
    return static_cast<double>(step % total_steps + 1) / static_cast<double>(total_steps);
}

size_t mask_count(double fraction, size_t n) {
    if (!(fraction > 0.0) || !(fraction <= 1.0))
        throw InvalidInput("mask_count: fraction must lie in (0, 1]");
    if (n == 0) throw InvalidInput("mask_count: empty sequence");
    size_t count = static_cast<size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (count == 0) count = 1;
    if (count > n) count = n;
    return count;
}

MaskedSequence apply_forward_mask(std::span<const Token> tokens, Token mask_id,
                                  double fraction, Rng& rng) {
    size_t count = mask_count(fraction, tokens.size());
    MaskedSequence out;
    out.tokens.assign(tokens.begin(), tokens.end());
    out.positions = rng.sample_distinct(count, tokens.size());
    for (size_t p : out.positions) out.tokens[p] = mask_id;
    return out;
}

}  // namespace attnlab
