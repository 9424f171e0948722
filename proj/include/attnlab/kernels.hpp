#pragma once

#include "attnlab/matrix.hpp"

// Compute kernels used by the model stack. The parallel versions split work
// across OpenMP threads so that every output element is written by exactly
// one thread and the inner accumulation order never changes; results are
// therefore bit-identical to the serial reference for any thread count.
// kernels::serial holds the plain implementations, kept for equality tests
// and for the serial side of the kernel benchmark.

namespace attnlab::kernels {

// Process-wide switch, used by the benchmark to time the serial path through
// the exact same call sites. Defaults to enabled.
void set_parallel_enabled(bool enabled);
bool parallel_enabled();

Matrix matmul(const Matrix& a, const Matrix& b);     // a(m,k) * b(k,n)
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a(m,k) * b(n,k)^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a(k,m)^T * b(k,n)

// Row-wise softmax of scale * m, in place. Max-subtracted for stability.
void softmax_rows_inplace(Matrix& m, double scale);

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
void softmax_rows_inplace(Matrix& m, double scale);
}  // namespace serial

}  // namespace attnlab::kernels
