#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "attnlab/kernels.hpp"
#include "attnlab/rng.hpp"

using namespace attnlab;

namespace {

Matrix random_matrix(size_t rows, size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data) x = rng.gaussian();
    return m;
}

double time_ms(const std::function<void()>& fn, size_t reps) {
    fn();  // warm up
    auto t0 = std::chrono::steady_clock::now();
    for (size_t r = 0; r < reps; ++r) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(reps);
}

void report(const std::string& op, size_t n, double serial_ms, double parallel_ms,
            double mismatch) {
    std::printf("%-14s n=%-5zu serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   "
                "max|diff| %g\n",
                op.c_str(), n, serial_ms, parallel_ms, serial_ms / parallel_ms, mismatch);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial-reference vs OpenMP kernel timings"};
    std::vector<size_t> sizes{128, 256, 384};
    size_t reps = 5;
    app.add_option("--sizes", sizes, "Square matrix sizes to time");
    app.add_option("--reps", reps, "Timed repetitions per kernel")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    Rng rng(7);
    for (size_t n : sizes) {
        Matrix a = random_matrix(n, n, rng);
        Matrix b = random_matrix(n, n, rng);

        kernels::set_parallel_enabled(true);
        Matrix par = kernels::matmul(a, b);
        double par_ms = time_ms([&] { kernels::matmul(a, b); }, reps);

        Matrix ser = kernels::serial::matmul(a, b);
        kernels::set_parallel_enabled(false);
        double ser_ms = time_ms([&] { kernels::matmul(a, b); }, reps);
        kernels::set_parallel_enabled(true);

        report("matmul", n, ser_ms, par_ms, max_abs_diff(ser, par));

        Matrix par_nt = kernels::matmul_nt(a, b);
        double par_nt_ms = time_ms([&] { kernels::matmul_nt(a, b); }, reps);
        Matrix ser_nt = kernels::serial::matmul_nt(a, b);
        kernels::set_parallel_enabled(false);
        double ser_nt_ms = time_ms([&] { kernels::matmul_nt(a, b); }, reps);
        kernels::set_parallel_enabled(true);
        report("matmul_nt", n, ser_nt_ms, par_nt_ms, max_abs_diff(ser_nt, par_nt));

        Matrix sm_par = a;
        kernels::softmax_rows_inplace(sm_par, 1.0);
        double sm_par_ms = time_ms(
            [&] {
                Matrix tmp = a;
                kernels::softmax_rows_inplace(tmp, 1.0);
            },
            reps);
        Matrix sm_ser = a;
        kernels::serial::softmax_rows_inplace(sm_ser, 1.0);
        kernels::set_parallel_enabled(false);
        double sm_ser_ms = time_ms(
            [&] {
                Matrix tmp = a;
                kernels::softmax_rows_inplace(tmp, 1.0);
            },
            reps);
        kernels::set_parallel_enabled(true);
        report("softmax_rows", n, sm_ser_ms, sm_par_ms, max_abs_diff(sm_ser, sm_par));
    }
    std::puts("max|diff| must be 0: the parallel kernels are bit-identical to the serial path");
    return 0;
}
