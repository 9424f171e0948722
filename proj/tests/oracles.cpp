#include "oracles.hpp"

#include <cmath>

#include "attnlab/errors.hpp"

namespace attnlab::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw InvalidInput("naive_matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

Matrix naive_matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw InvalidInput("naive_matmul_nt: shape mismatch");
    Matrix c(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
            c.at(i, j) = s;
        }
    return c;
}

Matrix naive_matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw InvalidInput("naive_matmul_tn: shape mismatch");
    Matrix c(a.cols, b.cols);
    for (size_t i = 0; i < a.cols; ++i)
        for (size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < a.rows; ++k) s += a.at(k, i) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

double jacobi_spectral_norm(const Matrix& w) {
    size_t n = w.cols;
    // m = w^T w, symmetric positive semi-definite.
    Matrix m(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < w.rows; ++k) s += w.at(k, i) * w.at(k, j);
            m.at(i, j) = s;
        }

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
        if (off < 1e-26) break;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double mkp = m.at(k, p), mkq = m.at(k, q);
                    m.at(k, p) = c * mkp - s * mkq;
                    m.at(k, q) = s * mkp + c * mkq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double mpk = m.at(p, k), mqk = m.at(q, k);
                    m.at(p, k) = c * mpk - s * mqk;
                    m.at(q, k) = s * mpk + c * mqk;
                }
            }
    }
    double largest = 0.0;
    for (size_t i = 0; i < n; ++i) largest = std::max(largest, m.at(i, i));
    return std::sqrt(std::max(0.0, largest));
}

namespace {

std::vector<double> softmax_row(const std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    std::vector<double> p(z.size());
    double total = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace

Matrix straight_forward_logits(const ModelParams& params, std::span<const Token> tokens) {
    const ModelConfig& mc = params.config;
    size_t n = tokens.size();
    size_t dim = mc.dim;
    size_t hd = mc.head_dim();

    std::vector<std::vector<double>> h(n, std::vector<double>(dim));
    for (size_t i = 0; i < n; ++i)
        for (size_t d = 0; d < dim; ++d)
            h[i][d] = params.embed.at(static_cast<size_t>(tokens[i]), d) + params.pos.at(i, d);

    for (size_t layer = 0; layer < mc.layers; ++layer) {
        std::vector<std::vector<double>> next(n, std::vector<double>(dim));
        for (size_t head = 0; head < mc.heads; ++head) {
            const HeadParams& hp = params.attn[layer][head];
            std::vector<std::vector<double>> q(n, std::vector<double>(hd)), k = q, v = q;
            for (size_t i = 0; i < n; ++i)
                for (size_t r = 0; r < hd; ++r) {
                    double sq = 0.0, sk = 0.0, sv = 0.0;
                    for (size_t d = 0; d < dim; ++d) {
                        sq += hp.wq.at(r, d) * h[i][d];
                        sk += hp.wk.at(r, d) * h[i][d];
                        sv += hp.wv.at(r, d) * h[i][d];
                    }
                    q[i][r] = sq;
                    k[i][r] = sk;
                    v[i][r] = sv;
                }
            double scale = 1.0 / std::sqrt(static_cast<double>(hd));
            for (size_t i = 0; i < n; ++i) {
                std::vector<double> row(n);
                for (size_t j = 0; j < n; ++j) {
                    double dot = 0.0;
                    for (size_t r = 0; r < hd; ++r) dot += q[i][r] * k[j][r];
                    row[j] = dot * scale;
                }
                std::vector<double> a = softmax_row(row);
                for (size_t r = 0; r < hd; ++r) {
                    double s = 0.0;
                    for (size_t j = 0; j < n; ++j) s += a[j] * v[j][r];
                    next[i][head * hd + r] = s;
                }
            }
        }
        h = next;
    }

    Matrix logits(n, mc.vocab_size);
    for (size_t i = 0; i < n; ++i)
        for (size_t t = 0; t < mc.vocab_size; ++t) {
            double s = params.out_b[t];
            for (size_t d = 0; d < dim; ++d) s += params.out_w.at(t, d) * h[i][d];
            logits.at(i, t) = s;
        }
    return logits;
}

std::vector<std::vector<double>> straight_forward_probs(const ModelParams& params,
                                                        std::span<const Token> tokens) {
    Matrix logits = straight_forward_logits(params, tokens);
    std::vector<std::vector<double>> probs(logits.rows);
    for (size_t i = 0; i < logits.rows; ++i) {
        std::vector<double> row(logits.row(i).begin(), logits.row(i).end());
        probs[i] = softmax_row(row);
    }
    return probs;
}

double two_pass_pdg(const ModelParams& params, std::span<const Token> tokens, BlockRange block,
                    const std::vector<size_t>& order) {
    Token mask = params.config.mask_id();
    TokenSeq buf(tokens.begin(), tokens.end());

    double full = 0.0;
    for (size_t j = 0; j < block.size; ++j) {
        size_t pos = block.start + j;
        Token truth = buf[pos];
        buf[pos] = mask;
        auto probs = straight_forward_probs(params, buf);
        full += std::log(probs[pos][static_cast<size_t>(truth)]);
        buf[pos] = truth;
    }

    double chain = 0.0;
    TokenSeq masked(tokens.begin(), tokens.end());
    for (size_t j = 0; j < block.size; ++j) masked[block.start + j] = mask;
    for (size_t step = 0; step < order.size(); ++step) {
        size_t pos = block.start + order[step];
        auto probs = straight_forward_probs(params, masked);
        chain += std::log(probs[pos][static_cast<size_t>(tokens[pos])]);
        masked[pos] = tokens[pos];
    }
    return full - chain;
}

}  // namespace attnlab::oracle
