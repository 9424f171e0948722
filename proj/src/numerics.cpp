#include "attnlab/numerics.hpp"

#include <cmath>

#include "attnlab/kernels.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

namespace {

constexpr double kSimplexTol = 1e-9;
constexpr uint64_t kPowerIterSeed = 0x5eedf00dULL;

void validate_simplex(const std::vector<double>& p) {
    if (p.empty()) throw InvalidInput("probability vector must be nonempty");
    double sum = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0 + 1e-12)
            throw InvalidInput("probability entries must lie in [0, 1]");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > kSimplexTol)
        throw InvalidInput("probability entries must sum to 1");
}

}  // namespace

ProbVector ProbVector::checked(std::vector<double> values) {
    validate_simplex(values);
    return ProbVector{std::move(values)};
}

double max_prob(const ProbVector& p) {
    if (p.p.empty()) throw InvalidInput("max_prob: empty distribution");
    double m = p.p[0];
    for (double x : p.p) m = std::max(m, x);
    return m;
}

ProbVector softmax(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw InvalidInput("softmax: empty logits");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw InvalidInput("softmax: temperature must be positive and finite");
    for (double v : logits)
        if (!std::isfinite(v)) throw InvalidInput("softmax: logits must be finite");

    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return ProbVector{std::move(out)};
}

double entropy(const ProbVector& pv) {
    validate_simplex(pv.p);
    double h = 0.0;
    for (double x : pv.p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

double spectral_norm(const Matrix& w) {
    if (w.rows == 0 || w.cols == 0) throw InvalidInput("spectral_norm: empty matrix");
    if (!w.all_finite()) throw InvalidInput("spectral_norm: entries must be finite");

    Matrix g = kernels::serial::matmul_tn(w, w);  // cols x cols, symmetric PSD

    Rng rng(kPowerIterSeed);
    std::vector<double> v(g.cols);
    for (double& x : v) x = rng.gaussian();
    double vn = l2_norm(v);
    for (double& x : v) x /= vn;

    double lambda_prev = -1.0;
    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<double> u(g.rows, 0.0);
        for (size_t i = 0; i < g.rows; ++i) {
            double s = 0.0;
            const double* row = g.data.data() + i * g.cols;
            for (size_t j = 0; j < g.cols; ++j) s += row[j] * v[j];
            u[i] = s;
        }
        double lambda = 0.0;  // Rayleigh quotient; v is unit norm
        for (size_t i = 0; i < v.size(); ++i) lambda += v[i] * u[i];
        double un = l2_norm(u);
        if (un == 0.0) return 0.0;
        for (size_t i = 0; i < v.size(); ++i) v[i] = u[i] / un;
        if (iter > 0) {
            double rel = std::fabs(lambda - lambda_prev) / std::max(std::fabs(lambda), 1e-300);
            if (rel < 1e-10) return std::sqrt(std::max(lambda, 0.0));
        }
        lambda_prev = lambda;
    }
    return std::sqrt(std::max(lambda_prev, 0.0));
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double step) {
    if (!(step > 0.0) || !std::isfinite(step))
        throw InvalidInput("finite_diff_grad: step must be positive and finite");
    std::vector<double> grad(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double orig = x[i];
        x[i] = orig + step;
        double fp = f(x);
        x[i] = orig - step;
        double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvaluationError("finite_diff_grad: objective returned a non-finite value");
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

}  // namespace attnlab
