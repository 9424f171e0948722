#include "attnlab/kernels.hpp"

#include <atomic>
#include <cmath>

namespace attnlab::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many output elements the OpenMP region is skipped; the models
// in this project are tiny and thread handoff would dominate.
constexpr size_t kParallelCutoff = 4096;

void check_matmul(const Matrix& a, const Matrix& b, size_t ak, size_t bk, const char* name) {
    if (ak != bk) throw InvalidInput(std::string(name) + ": inner dimensions do not match");
    if (a.data.empty() || b.data.empty()) throw InvalidInput(std::string(name) + ": empty operand");
}

}  // namespace

void set_parallel_enabled(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.cols, b.rows, "matmul");
    Matrix c(a.rows, b.cols);
    const bool par = g_parallel.load() && a.rows * b.cols >= kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(a.rows); ++i) {
        double* out = c.data.data() + i * c.cols;
        for (size_t k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.cols, b.cols, "matmul_nt");
    Matrix c(a.rows, b.rows);
    const bool par = g_parallel.load() && a.rows * b.rows >= kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(a.rows); ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* out = c.data.data() + i * c.cols;
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            out[j] = s;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.rows, b.rows, "matmul_tn");
    Matrix c(a.cols, b.cols);
    const bool par = g_parallel.load() && a.cols * b.cols >= kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(a.cols); ++i) {
        double* out = c.data.data() + i * c.cols;
        for (size_t k = 0; k < a.rows; ++k) {
            double aki = a.at(k, i);
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) out[j] += aki * brow[j];
        }
    }
    return c;
}

void softmax_rows_inplace(Matrix& m, double scale) {
    if (m.data.empty()) throw InvalidInput("softmax_rows_inplace: empty matrix");
    const bool par = g_parallel.load() && m.rows * m.cols >= kParallelCutoff;
#pragma omp parallel for schedule(static) if (par)
    for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(m.rows); ++i) {
        double* row = m.data.data() + i * m.cols;
        double mx = scale * row[0];
        for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, scale * row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(scale * row[j] - mx);
            sum += row[j];
        }
        for (size_t j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.cols, b.rows, "serial::matmul");
    Matrix c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        double* out = c.data.data() + i * c.cols;
        for (size_t k = 0; k < a.cols; ++k) {
            double aik = a.at(i, k);
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.cols, b.cols, "serial::matmul_nt");
    Matrix c(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* out = c.data.data() + i * c.cols;
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            out[j] = s;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_matmul(a, b, a.rows, b.rows, "serial::matmul_tn");
    Matrix c(a.cols, b.cols);
    for (size_t i = 0; i < a.cols; ++i) {
        double* out = c.data.data() + i * c.cols;
        for (size_t k = 0; k < a.rows; ++k) {
            double aki = a.at(k, i);
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) out[j] += aki * brow[j];
        }
    }
    return c;
}

void softmax_rows_inplace(Matrix& m, double scale) {
    if (m.data.empty()) throw InvalidInput("serial::softmax_rows_inplace: empty matrix");
    for (size_t i = 0; i < m.rows; ++i) {
        double* row = m.data.data() + i * m.cols;
        double mx = scale * row[0];
        for (size_t j = 1; j < m.cols; ++j) mx = std::max(mx, scale * row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < m.cols; ++j) {
            row[j] = std::exp(scale * row[j] - mx);
            sum += row[j];
        }
        for (size_t j = 0; j < m.cols; ++j) row[j] /= sum;
    }
}

}  // namespace serial

}  // namespace attnlab::kernels
