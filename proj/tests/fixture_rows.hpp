#pragma once

#include <vector>

#include "attnlab/report.hpp"

// Rows behind the golden scatter plot. The labels deliberately carry CSV and
// XML metacharacters; the fixture generator and the tests must agree on
// these values byte for byte.
namespace attnlab::testfx {

inline std::vector<ReportRow> scatter_rows() {
    return {
        {"base", {{"tokens_per_forward", 1.0}, {"mean_log_likelihood", -1.25}}},
        {"tau, small", {{"tokens_per_forward", 1.75}, {"mean_log_likelihood", -0.5}}},
        {"k<2>&\"drop\"", {{"tokens_per_forward", 3.5}, {"mean_log_likelihood", -2.0}}},
    };
}

}  // namespace attnlab::testfx
