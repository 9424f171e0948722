#include "attnlab/model.hpp"

#include <cmath>
#include <cstdio>

#include "attnlab/kernels.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw InvalidInput("model: vocab_size must be at least 2");
    if (dim == 0) throw InvalidInput("model: dim must be positive");
    if (layers == 0) throw InvalidInput("model: layers must be positive");
    if (heads == 0) throw InvalidInput("model: heads must be positive");
    if (dim % heads != 0) throw InvalidInput("model: dim must be divisible by heads");
    if (max_len == 0) throw InvalidInput("model: max_len must be positive");
}

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(seed);
    auto fill = [&](Matrix& m, size_t r, size_t c) {
        m = Matrix(r, c);
        for (double& v : m.data) v = rng.gaussian(0.0, 0.02);
    };
    ModelParams p;
    p.config = config;
    fill(p.embed, config.vocab_size, config.dim);
    fill(p.pos, config.max_len, config.dim);
    p.attn.resize(config.layers);
    for (auto& layer : p.attn) {
        layer.resize(config.heads);
        for (auto& head : layer) {
            fill(head.wq, config.head_dim(), config.dim);
            fill(head.wk, config.head_dim(), config.dim);
            fill(head.wv, config.head_dim(), config.dim);
        }
    }
    fill(p.out_w, config.vocab_size, config.dim);
    p.out_b.assign(config.vocab_size, 0.0);
    for (double& v : p.out_b) v = rng.gaussian(0.0, 0.02);
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z;
    z.config = params.config;
    z.embed = Matrix(params.embed.rows, params.embed.cols);
    z.pos = Matrix(params.pos.rows, params.pos.cols);
    z.attn.resize(params.attn.size());
    for (size_t l = 0; l < params.attn.size(); ++l) {
        z.attn[l].resize(params.attn[l].size());
        for (size_t h = 0; h < params.attn[l].size(); ++h) {
            const auto& src = params.attn[l][h];
            z.attn[l][h].wq = Matrix(src.wq.rows, src.wq.cols);
            z.attn[l][h].wk = Matrix(src.wk.rows, src.wk.cols);
            z.attn[l][h].wv = Matrix(src.wv.rows, src.wv.cols);
        }
    }
    z.out_w = Matrix(params.out_w.rows, params.out_w.cols);
    z.out_b.assign(params.out_b.size(), 0.0);
    return z;
}

std::vector<std::span<double>> mutable_param_spans(ModelParams& p) {
    std::vector<std::span<double>> spans;
    spans.emplace_back(p.embed.data);
    spans.emplace_back(p.pos.data);
    for (auto& layer : p.attn)
        for (auto& head : layer) {
            spans.emplace_back(head.wq.data);
            spans.emplace_back(head.wk.data);
            spans.emplace_back(head.wv.data);
        }
    spans.emplace_back(p.out_w.data);
    spans.emplace_back(p.out_b);
    return spans;
}

std::vector<std::pair<std::string, std::span<const double>>> param_blocks(const ModelParams& p) {
    std::vector<std::pair<std::string, std::span<const double>>> blocks;
    blocks.emplace_back("embed", std::span<const double>(p.embed.data));
    blocks.emplace_back("pos", std::span<const double>(p.pos.data));
    char name[64];
    for (size_t l = 0; l < p.attn.size(); ++l)
        for (size_t h = 0; h < p.attn[l].size(); ++h) {
            const auto& head = p.attn[l][h];
            std::snprintf(name, sizeof(name), "layer%zu.head%zu.wq", l, h);
            blocks.emplace_back(name, std::span<const double>(head.wq.data));
            std::snprintf(name, sizeof(name), "layer%zu.head%zu.wk", l, h);
            blocks.emplace_back(name, std::span<const double>(head.wk.data));
            std::snprintf(name, sizeof(name), "layer%zu.head%zu.wv", l, h);
            blocks.emplace_back(name, std::span<const double>(head.wv.data));
        }
    blocks.emplace_back("out_w", std::span<const double>(p.out_w.data));
    blocks.emplace_back("out_b", std::span<const double>(p.out_b));
    return blocks;
}

size_t param_count(const ModelParams& p) {
    size_t n = 0;
    for (const auto& [name, span] : param_blocks(p)) n += span.size();
    return n;
}

std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> out;
    out.reserve(param_count(p));
    for (const auto& [name, span] : param_blocks(p)) out.insert(out.end(), span.begin(), span.end());
    return out;
}

void unflatten(ModelParams& p, std::span<const double> values) {
    size_t off = 0;
    for (auto span : mutable_param_spans(p)) {
        if (off + span.size() > values.size()) throw InvalidInput("unflatten: too few values");
        for (size_t i = 0; i < span.size(); ++i) span[i] = values[off + i];
        off += span.size();
    }
    if (off != values.size()) throw InvalidInput("unflatten: too many values");
}

void validate_attention(const AttentionTensor& attention) {
    if (attention.maps.size() != attention.layers * attention.heads)
        throw InvalidInput("attention tensor: map count does not match shape");
    for (const auto& m : attention.maps) {
        if (m.rows != attention.n || m.cols != attention.n)
            throw InvalidInput("attention tensor: map shape mismatch");
        for (size_t i = 0; i < m.rows; ++i) {
            double sum = 0.0;
            for (size_t j = 0; j < m.cols; ++j) {
                double v = m.at(i, j);
                if (!std::isfinite(v) || v < 0.0) throw InvalidInput("attention tensor: invalid weight");
                sum += v;
            }
            if (std::fabs(sum - 1.0) > 1e-9) throw InvalidInput("attention tensor: row does not sum to 1");
        }
    }
}

namespace {

void validate_tokens(const ModelConfig& config, std::span<const Token> tokens) {
    if (tokens.empty()) throw InvalidInput("forward: empty token sequence");
    if (tokens.size() > config.max_len) throw SequenceTooLong("forward: sequence exceeds max_len");
    for (Token t : tokens)
        if (t < 0 || t >= static_cast<Token>(config.vocab_size))
            throw InvalidToken("forward: token id outside vocabulary");
}

Matrix embed_sequence(const ModelParams& p, std::span<const Token> tokens) {
    size_t n = tokens.size();
    Matrix h(n, p.config.dim);
    for (size_t i = 0; i < n; ++i) {
        auto e = p.embed.row(static_cast<size_t>(tokens[i]));
        auto q = p.pos.row(i);
        auto out = h.row(i);
        for (size_t j = 0; j < p.config.dim; ++j) out[j] = e[j] + q[j];
    }
    return h;
}

void paste_columns(Matrix& dst, const Matrix& src, size_t col_offset) {
    for (size_t i = 0; i < src.rows; ++i) {
        auto s = src.row(i);
        auto d = dst.row(i);
        for (size_t j = 0; j < src.cols; ++j) d[col_offset + j] = s[j];
    }
}

Matrix slice_columns(const Matrix& src, size_t col_offset, size_t width) {
    Matrix out(src.rows, width);
    for (size_t i = 0; i < src.rows; ++i)
        for (size_t j = 0; j < width; ++j) out.at(i, j) = src.at(i, col_offset + j);
    return out;
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;            // h^0 .. h^{L-1}, each n x dim
    Matrix final_hidden;                         // h^L
    std::vector<std::vector<Matrix>> a, q, k, v; // [layer][head]
    Matrix logits;
};

ForwardCache run_forward(const ModelParams& p, std::span<const Token> tokens,
                         const AttentionTensor* attention_override) {
    const auto& cfg = p.config;
    size_t n = tokens.size();
    size_t dh = cfg.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardCache cache;
    cache.a.resize(cfg.layers);
    cache.q.resize(cfg.layers);
    cache.k.resize(cfg.layers);
    cache.v.resize(cfg.layers);

    Matrix h = embed_sequence(p, tokens);
    for (size_t l = 0; l < cfg.layers; ++l) {
        cache.layer_inputs.push_back(h);
        Matrix next(n, cfg.dim);
        for (size_t hd = 0; hd < cfg.heads; ++hd) {
            const auto& w = p.attn[l][hd];
            Matrix v = kernels::matmul_nt(h, w.wv);
            Matrix a;
            if (attention_override) {
                a = attention_override->at(l, hd);
            } else {
                Matrix q = kernels::matmul_nt(h, w.wq);
                Matrix k = kernels::matmul_nt(h, w.wk);
                a = kernels::matmul_nt(q, k);
                kernels::softmax_rows_inplace(a, scale);
                cache.q[l].push_back(std::move(q));
                cache.k[l].push_back(std::move(k));
            }
            Matrix z = kernels::matmul(a, v);
            paste_columns(next, z, hd * dh);
            cache.a[l].push_back(std::move(a));
            cache.v[l].push_back(std::move(v));
        }
        h = std::move(next);
    }
    cache.final_hidden = h;
    cache.logits = kernels::matmul_nt(cache.final_hidden, p.out_w);
    for (size_t i = 0; i < n; ++i) {
        auto row = cache.logits.row(i);
        for (size_t j = 0; j < cfg.vocab_size; ++j) row[j] += p.out_b[j];
    }
    return cache;
}

}  // namespace

ForwardResult forward(const ModelParams& p, std::span<const Token> tokens,
                      const AttentionTensor* attention_override) {
    p.config.validate();
    validate_tokens(p.config, tokens);
    const auto& cfg = p.config;
    size_t n = tokens.size();
    size_t dh = cfg.head_dim();

    if (attention_override) {
        if (attention_override->layers != cfg.layers || attention_override->heads != cfg.heads ||
            attention_override->n != n)
            throw InvalidInput("forward: attention override shape mismatch");
    }

    ForwardCache cache = run_forward(p, tokens, attention_override);

    ForwardResult r;
    r.logits = std::move(cache.logits);
    r.probs.reserve(n);
    for (size_t i = 0; i < n; ++i) r.probs.push_back(softmax(r.logits.row(i)));

    r.attention.layers = cfg.layers;
    r.attention.heads = cfg.heads;
    r.attention.n = n;
    for (size_t l = 0; l < cfg.layers; ++l)
        for (size_t hd = 0; hd < cfg.heads; ++hd) r.attention.maps.push_back(std::move(cache.a[l][hd]));

    // Mask-token embedding at every position, shared by all layers' value maps.
    Matrix mask_h(n, cfg.dim);
    auto me = p.embed.row(static_cast<size_t>(cfg.mask_id()));
    for (size_t i = 0; i < n; ++i) {
        auto q = p.pos.row(i);
        auto out = mask_h.row(i);
        for (size_t j = 0; j < cfg.dim; ++j) out[j] = me[j] + q[j];
    }
    for (size_t l = 0; l < cfg.layers; ++l) {
        Matrix vals(n, cfg.dim), mvals(n, cfg.dim);
        for (size_t hd = 0; hd < cfg.heads; ++hd) {
            paste_columns(vals, cache.v[l][hd], hd * dh);
            Matrix mv = kernels::matmul_nt(mask_h, p.attn[l][hd].wv);
            paste_columns(mvals, mv, hd * dh);
        }
        r.values.push_back(std::move(vals));
        r.mask_values.push_back(std::move(mvals));
    }
    return r;
}

namespace {

void validate_masked_positions(std::span<const Token> tokens, std::span<const size_t> positions,
                               Token mask_id) {
    if (positions.empty()) throw InvalidInput("masked positions must be nonempty");
    std::vector<bool> seen(tokens.size(), false);
    for (size_t p : positions) {
        if (p >= tokens.size()) throw InvalidInput("masked position out of range");
        if (seen[p]) throw InvalidInput("masked positions must be unique");
        seen[p] = true;
        if (tokens[p] == mask_id)
            throw InvalidToken("masked position already holds the mask id; no true token to score");
    }
}

}  // namespace

double masked_loss(const ModelParams& p, std::span<const Token> tokens,
                   std::span<const size_t> masked_positions) {
    p.config.validate();
    validate_tokens(p.config, tokens);
    validate_masked_positions(tokens, masked_positions, p.config.mask_id());

    TokenSeq input(tokens.begin(), tokens.end());
    for (size_t pos : masked_positions) input[pos] = p.config.mask_id();

    ForwardResult fr = forward(p, input);
    double loss = 0.0;
    for (size_t pos : masked_positions)
        loss -= std::log(fr.probs[pos][static_cast<size_t>(tokens[pos])]);
    return loss / static_cast<double>(masked_positions.size());
}

BackwardResult backward(const ModelParams& p, std::span<const Token> tokens,
                        std::span<const size_t> masked_positions) {
    p.config.validate();
    validate_tokens(p.config, tokens);
    validate_masked_positions(tokens, masked_positions, p.config.mask_id());

    const auto& cfg = p.config;
    size_t n = tokens.size();
    size_t dh = cfg.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    TokenSeq input(tokens.begin(), tokens.end());
    for (size_t pos : masked_positions) input[pos] = cfg.mask_id();

    ForwardCache cache = run_forward(p, input, nullptr);

    BackwardResult result;
    result.grads = zeros_like(p);
    ModelParams& g = result.grads;

    double inv_m = 1.0 / static_cast<double>(masked_positions.size());
    Matrix dlogits(n, cfg.vocab_size);
    for (size_t pos : masked_positions) {
        ProbVector probs = softmax(cache.logits.row(pos));
        result.loss -= std::log(probs[static_cast<size_t>(tokens[pos])]) * inv_m;
        auto out = dlogits.row(pos);
        for (size_t j = 0; j < cfg.vocab_size; ++j) out[j] = probs[j] * inv_m;
        out[static_cast<size_t>(tokens[pos])] -= inv_m;
    }

    g.out_w = kernels::matmul_tn(dlogits, cache.final_hidden);
    for (size_t i = 0; i < n; ++i) {
        auto row = dlogits.row(i);
        for (size_t j = 0; j < cfg.vocab_size; ++j) g.out_b[j] += row[j];
    }

    Matrix dh_cur = kernels::matmul(dlogits, p.out_w);  // n x dim

    for (size_t l = cfg.layers; l-- > 0;) {
        const Matrix& h_in = cache.layer_inputs[l];
        Matrix dh_prev(n, cfg.dim);
        for (size_t hd = 0; hd < cfg.heads; ++hd) {
            const auto& w = p.attn[l][hd];
            const Matrix& a = cache.a[l][hd];
            const Matrix& v = cache.v[l][hd];
            const Matrix& q = cache.q[l][hd];
            const Matrix& k = cache.k[l][hd];

            Matrix dz = slice_columns(dh_cur, hd * dh, dh);
            Matrix da = kernels::matmul_nt(dz, v);   // n x n
            Matrix dv = kernels::matmul_tn(a, dz);   // n x head_dim

            // Softmax rows: ds_ij = a_ij * (da_ij - sum_k a_ik da_ik), then
            // the score scale.
            Matrix ds(n, n);
            for (size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (size_t j = 0; j < n; ++j) dot += a.at(i, j) * da.at(i, j);
                for (size_t j = 0; j < n; ++j)
                    ds.at(i, j) = a.at(i, j) * (da.at(i, j) - dot) * scale;
            }

            Matrix dq = kernels::matmul(ds, k);     // n x head_dim
            Matrix dk = kernels::matmul_tn(ds, q);  // n x head_dim

            auto& gw = g.attn[l][hd];
            Matrix gwq = kernels::matmul_tn(dq, h_in);
            Matrix gwk = kernels::matmul_tn(dk, h_in);
            Matrix gwv = kernels::matmul_tn(dv, h_in);
            for (size_t i = 0; i < gwq.data.size(); ++i) {
                gw.wq.data[i] += gwq.data[i];
                gw.wk.data[i] += gwk.data[i];
                gw.wv.data[i] += gwv.data[i];
            }

            Matrix back_q = kernels::matmul(dq, w.wq);
            Matrix back_k = kernels::matmul(dk, w.wk);
            Matrix back_v = kernels::matmul(dv, w.wv);
            for (size_t i = 0; i < dh_prev.data.size(); ++i)
                dh_prev.data[i] += back_q.data[i] + back_k.data[i] + back_v.data[i];
        }
        dh_cur = std::move(dh_prev);
    }

    for (size_t i = 0; i < n; ++i) {
        auto src = dh_cur.row(i);
        auto ge = g.embed.row(static_cast<size_t>(input[i]));
        auto gp = g.pos.row(i);
        for (size_t j = 0; j < cfg.dim; ++j) {
            ge[j] += src[j];
            gp[j] += src[j];
        }
    }
    return result;
}

TrainResult train(ModelParams& params, const Corpus& corpus, const TrainOptions& options) {
    params.config.validate();
    corpus.validate();
    if (corpus.vocab_size != params.config.vocab_size)
        throw InvalidInput("train: corpus vocabulary does not match the model");
    if (corpus.seq_len > params.config.max_len)
        throw SequenceTooLong("train: corpus sequences exceed max_len");
    if (!(options.learning_rate >= 0.0) || !std::isfinite(options.learning_rate))
        throw InvalidInput("train: learning_rate must be finite and nonnegative");
    if (!(options.momentum >= 0.0) || !(options.momentum < 1.0))
        throw InvalidInput("train: momentum must lie in [0, 1)");
    if (options.batch_size == 0) throw InvalidInput("train: batch_size must be positive");
    options.schedule.validate();

    TrainResult result;
    if (options.steps == 0) return result;

    ModelParams velocity = zeros_like(params);
    Rng rng(options.seed);

    for (size_t step = 0; step < options.steps; ++step) {
        double fraction = options.schedule.fraction(step, rng);
        ModelParams grad_sum = zeros_like(params);
        double loss_sum = 0.0;
        for (size_t b = 0; b < options.batch_size; ++b) {
            const TokenSeq& seq = corpus.sequences[rng.index(corpus.sequences.size())];
            MaskedSequence masked =
                apply_forward_mask(seq, params.config.mask_id(), fraction, rng);
            BackwardResult br = backward(params, seq, masked.positions);
            loss_sum += br.loss;
            auto gs = mutable_param_spans(grad_sum);
            auto bs = mutable_param_spans(br.grads);
            for (size_t s = 0; s < gs.size(); ++s)
                for (size_t i = 0; i < gs[s].size(); ++i) gs[s][i] += bs[s][i];
        }
        double inv_b = 1.0 / static_cast<double>(options.batch_size);
        double loss = loss_sum * inv_b;
        if (!std::isfinite(loss)) {
            char msg[96];
            std::snprintf(msg, sizeof(msg), "train: loss became non-finite at step %zu", step);
            throw TrainingDiverged(msg);
        }
        result.loss_trace.push_back(loss);

        auto ps = mutable_param_spans(params);
        auto vs = mutable_param_spans(velocity);
        auto gs = mutable_param_spans(grad_sum);
        for (size_t s = 0; s < ps.size(); ++s)
            for (size_t i = 0; i < ps[s].size(); ++i) {
                vs[s][i] = options.momentum * vs[s][i] - options.learning_rate * gs[s][i] * inv_b;
                ps[s][i] += vs[s][i];
            }
    }
    return result;
}

Matrix aggregate_attention(const AttentionTensor& attention,
                           std::span<const size_t> layer_set,
                           std::span<const size_t> head_set) {
    if (layer_set.empty() || head_set.empty())
        throw InvalidInput("aggregate_attention: selection must be nonempty");
    auto check_unique = [](std::span<const size_t> set, size_t limit, const char* what) {
        std::vector<bool> seen(limit, false);
        for (size_t idx : set) {
            if (idx >= limit) throw InvalidInput(std::string("aggregate_attention: ") + what + " index out of range");
            if (seen[idx]) throw InvalidInput(std::string("aggregate_attention: duplicate ") + what + " index");
            seen[idx] = true;
        }
    };
    check_unique(layer_set, attention.layers, "layer");
    check_unique(head_set, attention.heads, "head");

    Matrix out(attention.n, attention.n);
    double inv = 1.0 / static_cast<double>(layer_set.size() * head_set.size());
    for (size_t l : layer_set)
        for (size_t h : head_set) {
            const Matrix& m = attention.at(l, h);
            for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += m.data[i];
        }
    for (double& v : out.data) v *= inv;
    return out;
}

std::vector<size_t> index_range(size_t count) {
    std::vector<size_t> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = i;
    return out;
}

}  // namespace attnlab
