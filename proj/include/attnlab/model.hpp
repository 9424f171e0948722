#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/masking.hpp"
#include "attnlab/matrix.hpp"
#include "attnlab/numerics.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

// Bidirectional attention stack: token + position embeddings, one or more
// attention layers (no residuals, no layer norm, no feed-forward block), and
// a linear readout to vocabulary logits. The mask token always has the
// largest id in the vocabulary.
struct ModelConfig {
    size_t vocab_size = 0;  // includes the mask token
    size_t dim = 0;         // model width, divisible by heads
    size_t layers = 1;
    size_t heads = 1;
    size_t max_len = 0;

    Token mask_id() const { return static_cast<Token>(vocab_size) - 1; }
    size_t head_dim() const { return dim / heads; }
    void validate() const;
};

struct HeadParams {
    Matrix wq, wk, wv;  // each head_dim x dim
};

struct ModelParams {
    ModelConfig config;
    Matrix embed;                               // vocab_size x dim
    Matrix pos;                                 // max_len x dim
    std::vector<std::vector<HeadParams>> attn;  // [layer][head]
    Matrix out_w;                               // vocab_size x dim
    std::vector<double> out_b;                  // vocab_size
};

// All parameters drawn i.i.d. Gaussian with standard deviation 0.02.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Same shapes as the source, every entry zero. Gradients reuse the
// ModelParams container so the flatten helpers below serve both.
ModelParams zeros_like(const ModelParams& params);

size_t param_count(const ModelParams& params);
std::vector<double> flatten(const ModelParams& params);
void unflatten(ModelParams& params, std::span<const double> values);

// Named parameter groups in flatten order, for per-block gradient checks.
std::vector<std::pair<std::string, std::span<const double>>> param_blocks(const ModelParams& params);
std::vector<std::span<double>> mutable_param_spans(ModelParams& params);

// One row-stochastic n x n map per (layer, head).
struct AttentionTensor {
    size_t layers = 0, heads = 0, n = 0;
    std::vector<Matrix> maps;  // layer-major

    Matrix& at(size_t layer, size_t head) { return maps[layer * heads + head]; }
    const Matrix& at(size_t layer, size_t head) const { return maps[layer * heads + head]; }
};

// Checks shape consistency and that every row sums to 1 within 1e-9.
void validate_attention(const AttentionTensor& attention);

struct ForwardResult {
    Matrix logits;                  // n x vocab_size
    std::vector<ProbVector> probs;  // one distribution per position
    AttentionTensor attention;
    // Per layer: the value vectors of the actual input (n x dim, heads
    // concatenated), and the value the mask token would get at each position
    // under that layer's value weights. The layer-0 entry of mask_values is
    // the quantity the single-layer gap bound consumes.
    std::vector<Matrix> values;
    std::vector<Matrix> mask_values;
};

// Full bidirectional forward pass. When attention_override is given, its
// maps replace the computed softmax weights everywhere (the returned tensor
// is the override); shapes must match.
ForwardResult forward(const ModelParams& params, std::span<const Token> tokens,
                      const AttentionTensor* attention_override = nullptr);

// Mean negative log-likelihood of the true tokens at masked_positions, with
// the mask id substituted at those positions before the forward pass.
double masked_loss(const ModelParams& params, std::span<const Token> tokens,
                   std::span<const size_t> masked_positions);

struct BackwardResult {
    double loss = 0.0;
    ModelParams grads;
};

// Analytic gradients of masked_loss with respect to every parameter.
BackwardResult backward(const ModelParams& params, std::span<const Token> tokens,
                        std::span<const size_t> masked_positions);

struct TrainOptions {
    size_t steps = 0;  // 0 leaves the parameters at initialization
    double learning_rate = 0.0;
    double momentum = 0.9;
    size_t batch_size = 8;
    MaskSchedule schedule;
    uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_trace;  // mean batch loss per step
};

// Gradient descent with momentum. Deterministic given the seed; throws
// TrainingDiverged when the loss stops being finite.
TrainResult train(ModelParams& params, const Corpus& corpus, const TrainOptions& options);

// Mean of the selected attention maps. Selections must be nonempty, unique
// and in range.
Matrix aggregate_attention(const AttentionTensor& attention,
                           std::span<const size_t> layer_set,
                           std::span<const size_t> head_set);

// Convenience: 0..count-1.
std::vector<size_t> index_range(size_t count);

}  // namespace attnlab
