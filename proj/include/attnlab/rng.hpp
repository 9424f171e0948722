#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "attnlab/errors.hpp"

namespace attnlab {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random source. The mt19937_64 engine is fully specified by
// the standard; every transform on top of it is hand-rolled here because the
// std::*_distribution classes are implementation-defined and would silently
// change golden files when the standard library changes.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t next_u64() { return engine_(); }

    // Independent child stream; stable under reordering of other draws.
    Rng fork(uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x7f4a7c15ULL)));
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform index in [0, n) via the multiply-shift mapping. No modulo bias
    // worth measuring at the sizes used here, and fully portable.
    size_t index(size_t n) {
        if (n == 0) throw InvalidInput("Rng::index requires n > 0");
        return static_cast<size_t>(
            (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    // Standard normal, Box-Muller cosine branch. Consumes two draws.
    double gaussian() {
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the boost transform.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw InvalidInput("Rng::gamma requires shape > 0");
        if (shape < 1.0) {
            double u = uniform01();
            while (u == 0.0) u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform01();
            if (u == 0.0) continue;
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    // Dirichlet draw with symmetric concentration. Tiny concentrations can
    // underflow every gamma draw to zero; that limit is a random one-hot.
    std::vector<double> dirichlet(size_t n, double concentration) {
        if (n == 0) throw InvalidInput("Rng::dirichlet requires n > 0");
        std::vector<double> w(n);
        double total = 0.0;
        for (auto& x : w) {
            x = gamma(concentration);
            total += x;
        }
        if (total <= 0.0) {
            std::fill(w.begin(), w.end(), 0.0);
            w[index(n)] = 1.0;
            return w;
        }
        for (auto& x : w) x /= total;
        return w;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), ascending.
    std::vector<size_t> sample_distinct(size_t k, size_t n);

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

inline std::vector<size_t> Rng::sample_distinct(size_t k, size_t n) {
    if (k > n) throw InvalidInput("Rng::sample_distinct requires k <= n");
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + index(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace attnlab
