#pragma once

#include <functional>
#include <span>
#include <vector>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Discrete distribution. Entries are in [0, 1] and sum to 1 within 1e-9.
struct ProbVector {
    std::vector<double> p;

    // Validating constructor for externally supplied values.
    static ProbVector checked(std::vector<double> values);

    size_t size() const { return p.size(); }
    double operator[](size_t i) const { return p[i]; }
};

double max_prob(const ProbVector& p);

// Max-subtracted softmax of logits / temperature. Logits must be finite and
// nonempty; temperature must be positive. The result sums to 1 within 1e-12.
ProbVector softmax(std::span<const double> logits, double temperature = 1.0);

// Shannon entropy in nats, with 0 * log 0 = 0. Validates the simplex
// invariant. Result lies in [0, log n].
double entropy(const ProbVector& p);

// Largest singular value, by power iteration on W^T W starting from a fixed
// pseudo-random vector. Stops when the relative change of the eigenvalue
// estimate drops below 1e-10 or after 1000 iterations.
double spectral_norm(const Matrix& w);

// Central finite differences: g_i = (f(x + h e_i) - f(x - h e_i)) / (2h).
// Throws EvaluationError when f returns a non-finite value.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double step);

}  // namespace attnlab
