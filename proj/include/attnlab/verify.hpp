#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attnlab/theory.hpp"

namespace attnlab {

struct CheckResult {
    std::string name;
    size_t trials = 0;
    double max_violation = 0.0;  // > 0 means the property failed somewhere
    bool pass = false;
    std::string detail;  // counterexample on failure, summary numbers on success
};

using OrderFn = std::function<Permutation(const Matrix&, BlockRange)>;

struct VerifyOptions {
    uint64_t seed = 20252026;
    size_t trials = 0;     // 0 keeps each check's default count
    OrderFn order_fn;      // replaces best_order in the ordering check; hook for
                           // corrupting the implementation under test
};

// In run_all_checks order.
CheckResult check_descending_order_matches_brute_force(size_t trials, uint64_t seed,
                                                       const OrderFn& order_fn = {});
CheckResult check_frozen_attention_bound_holds(size_t trials, uint64_t seed);
CheckResult check_adjacent_swap_decreases_surrogate(size_t trials, uint64_t seed);
CheckResult check_negative_entropy_floor_holds(size_t trials, uint64_t seed);
CheckResult check_logit_gradient_norm_below_sqrt2(size_t trials, uint64_t seed);
CheckResult check_entropy_confidence_agreement(size_t trials, uint64_t seed);
CheckResult check_analytic_gradient_matches_finite_diff(uint64_t seed);

std::vector<CheckResult> run_all_checks(const VerifyOptions& options = {});

}  // namespace attnlab
