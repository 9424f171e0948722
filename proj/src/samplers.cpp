#include "attnlab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "attnlab/errors.hpp"
#include "attnlab/rng.hpp"

namespace attnlab {

std::string to_string(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::attn_sequential: return "attn_sequential";
        case SamplerKind::attn_parallel: return "attn_parallel";
        case SamplerKind::confidence: return "confidence";
        case SamplerKind::margin: return "margin";
        case SamplerKind::entropy: return "entropy";
        case SamplerKind::confidence_threshold_parallel: return "confidence_threshold_parallel";
        case SamplerKind::attn_topk: return "attn_topk";
        case SamplerKind::attn_static_threshold: return "attn_static_threshold";
        case SamplerKind::random: return "random";
    }
    throw InvalidInput("unknown sampler kind");
}

SamplerKind sampler_kind_from_string(const std::string& name) {
    for (int k = 0; k <= static_cast<int>(SamplerKind::random); ++k)
        if (to_string(static_cast<SamplerKind>(k)) == name) return static_cast<SamplerKind>(k);
    throw InvalidInput("unknown sampler kind: " + name);
}

void SamplerConfig::validate() const {
    switch (kind) {
        case SamplerKind::attn_parallel:
        case SamplerKind::confidence_threshold_parallel:
            // The useful range is (0, 1]; larger values are legal and make the
            // confident set empty at every step.
            if (!(tau > 0.0) || !std::isfinite(tau))
                throw InvalidInput("sampler: tau must be positive and finite");
            break;
        case SamplerKind::attn_topk:
            if (top_k == 0) throw InvalidInput("sampler: top_k must be at least 1");
            break;
        case SamplerKind::attn_static_threshold:
            if (!std::isfinite(static_threshold))
                throw InvalidInput("sampler: static_threshold must be finite");
            break;
        default:
            break;
    }
}

std::string SamplerConfig::label() const {
    char buf[96];
    switch (kind) {
        case SamplerKind::attn_parallel:
        case SamplerKind::confidence_threshold_parallel:
            std::snprintf(buf, sizeof(buf), "%s(tau=%g)", to_string(kind).c_str(), tau);
            return buf;
        case SamplerKind::attn_topk:
            std::snprintf(buf, sizeof(buf), "attn_topk(k=%zu)", top_k);
            return buf;
        case SamplerKind::attn_static_threshold:
            std::snprintf(buf, sizeof(buf), "attn_static_threshold(threshold=%g)", static_threshold);
            return buf;
        case SamplerKind::random:
            std::snprintf(buf, sizeof(buf), "random(seed=%llu)", static_cast<unsigned long long>(seed));
            return buf;
        default:
            return to_string(kind);
    }
}

void StepInput::validate() const {
    if (positions.empty()) throw InvalidInput("step input: no masked positions");
    if (probs.size() != positions.size() || attn_scores.size() != positions.size())
        throw InvalidInput("step input: misaligned fields");
    for (size_t i = 1; i < positions.size(); ++i)
        if (positions[i] <= positions[i - 1])
            throw InvalidInput("step input: positions must be strictly ascending");
    for (const auto& pv : probs)
        if (pv.size() == 0) throw InvalidInput("step input: empty distribution");
    for (double s : attn_scores)
        if (!std::isfinite(s)) throw InvalidInput("step input: attention scores must be finite");
}

namespace {

// Index (into the input arrays) of the best value; lowest index on ties.
template <typename Score>
size_t best_index(size_t count, Score&& score) {
    size_t best = 0;
    double best_val = score(0);
    for (size_t i = 1; i < count; ++i) {
        double v = score(i);
        if (v > best_val) {
            best = i;
            best_val = v;
        }
    }
    return best;
}

StepDecision singleton(const StepInput& input, size_t idx) {
    return StepDecision{{input.positions[idx]}, std::nullopt};
}

}  // namespace

StepDecision attn_sequential(const StepInput& input) {
    input.validate();
    return singleton(input, best_index(input.positions.size(),
                                       [&](size_t i) { return input.attn_scores[i]; }));
}

StepDecision attn_parallel(const StepInput& input, double tau) {
    input.validate();
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("attn_parallel: bad tau");

    size_t m = input.positions.size();
    std::vector<size_t> confident;
    double gamma = -std::numeric_limits<double>::infinity();
    bool any_low = false;
    for (size_t i = 0; i < m; ++i) {
        if (max_prob(input.probs[i]) >= tau) {
            confident.push_back(i);
        } else {
            any_low = true;
            gamma = std::max(gamma, input.attn_scores[i]);
        }
    }

    StepDecision out;
    if (!any_low) {
        // No unconfident position left: the dynamic threshold is vacuous and
        // every confident position decodes.
        for (size_t i : confident) out.positions.push_back(input.positions[i]);
        out.gamma = gamma;  // -inf marker, serialized as null in traces
        return out;
    }
    for (size_t i : confident)
        if (input.attn_scores[i] > gamma) out.positions.push_back(input.positions[i]);
    if (out.positions.empty()) return attn_sequential(input);
    out.gamma = gamma;
    return out;
}

StepDecision confidence_select(const StepInput& input) {
    input.validate();
    return singleton(input, best_index(input.positions.size(),
                                       [&](size_t i) { return max_prob(input.probs[i]); }));
}

StepDecision margin_select(const StepInput& input) {
    input.validate();
    auto top2_gap = [&](size_t i) {
        const auto& p = input.probs[i].p;
        if (p.size() < 2) return p[0];
        double first = -1.0, second = -1.0;
        for (double v : p) {
            if (v > first) {
                second = first;
                first = v;
            } else if (v > second) {
                second = v;
            }
        }
        return first - second;
    };
    return singleton(input, best_index(input.positions.size(), top2_gap));
}

StepDecision entropy_select(const StepInput& input) {
    input.validate();
    return singleton(input, best_index(input.positions.size(),
                                       [&](size_t i) { return -entropy(input.probs[i]); }));
}

StepDecision confidence_threshold_parallel(const StepInput& input, double tau) {
    input.validate();
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw InvalidInput("confidence_threshold_parallel: bad tau");
    StepDecision out;
    for (size_t i = 0; i < input.positions.size(); ++i)
        if (max_prob(input.probs[i]) >= tau) out.positions.push_back(input.positions[i]);
    if (out.positions.empty()) return confidence_select(input);
    return out;
}

StepDecision attn_topk(const StepInput& input, size_t k) {
    input.validate();
    if (k == 0) throw InvalidInput("attn_topk: k must be at least 1");
    size_t m = input.positions.size();
    std::vector<size_t> idx(m);
    for (size_t i = 0; i < m; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        return input.attn_scores[a] > input.attn_scores[b];
    });
    idx.resize(std::min(k, m));
    std::sort(idx.begin(), idx.end());
    StepDecision out;
    for (size_t i : idx) out.positions.push_back(input.positions[i]);
    return out;
}

StepDecision attn_static_threshold(const StepInput& input, double threshold) {
    input.validate();
    if (!std::isfinite(threshold)) throw InvalidInput("attn_static_threshold: bad threshold");
    StepDecision out;
    for (size_t i = 0; i < input.positions.size(); ++i)
        if (input.attn_scores[i] > threshold) out.positions.push_back(input.positions[i]);
    if (out.positions.empty()) return attn_sequential(input);
    return out;
}

StepDecision random_select(const StepInput& input, uint64_t seed) {
    input.validate();
    Rng rng(splitmix64(seed ^ splitmix64(input.step)));
    return singleton(input, rng.index(input.positions.size()));
}

SamplerFn make_sampler(const SamplerConfig& config) {
    config.validate();
    switch (config.kind) {
        case SamplerKind::attn_sequential:
            return [](const StepInput& in) { return attn_sequential(in); };
        case SamplerKind::attn_parallel:
            return [tau = config.tau](const StepInput& in) { return attn_parallel(in, tau); };
        case SamplerKind::confidence:
            return [](const StepInput& in) { return confidence_select(in); };
        case SamplerKind::margin:
            return [](const StepInput& in) { return margin_select(in); };
        case SamplerKind::entropy:
            return [](const StepInput& in) { return entropy_select(in); };
        case SamplerKind::confidence_threshold_parallel:
            return [tau = config.tau](const StepInput& in) {
                return confidence_threshold_parallel(in, tau);
            };
        case SamplerKind::attn_topk:
            return [k = config.top_k](const StepInput& in) { return attn_topk(in, k); };
        case SamplerKind::attn_static_threshold:
            return [t = config.static_threshold](const StepInput& in) {
                return attn_static_threshold(in, t);
            };
        case SamplerKind::random:
            return [seed = config.seed](const StepInput& in) { return random_select(in, seed); };
    }
    throw InvalidInput("unknown sampler kind");
}

}  // namespace attnlab
