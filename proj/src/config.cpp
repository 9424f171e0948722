#include "attnlab/config.hpp"

#include <initializer_list>

#include "json.hpp"

#include "attnlab/errors.hpp"
#include "attnlab/io.hpp"

namespace attnlab {

using nlohmann::json;

size_t CorpusSpec::sequence_length() const {
    return generator == "copy" ? 2 * half_len : seq_len;
}

Corpus CorpusSpec::generate(size_t vocab_size) const {
    if (generator == "markov")
        return gen_markov(vocab_size, seq_len, num_sequences, concentration, seed);
    if (generator == "copy") return gen_copy(vocab_size, half_len, num_sequences, seed);
    throw ConfigError("$.corpus.generator", "unknown generator '" + generator + "'");
}

TrainOptions TrainingSpec::options() const {
    TrainOptions o;
    o.steps = steps;
    o.learning_rate = learning_rate;
    o.momentum = momentum;
    o.batch_size = batch_size;
    o.schedule = schedule;
    o.seed = seed;
    return o;
}

DecodeOptions DecodeSpec::options() const {
    DecodeOptions o;
    o.scoring_region = scoring_region;
    o.frozen_attention = frozen_attention;
    return o;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path, msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) fail(path + "." + key, "unknown key");
    }
}

const json& require(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) fail(path + "." + key, "required key is missing");
    return obj.at(key);
}

size_t get_count(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    if (!v.is_number_unsigned()) fail(path + "." + key, "expected a non-negative integer");
    return v.get<size_t>();
}

size_t get_count_or(const json& obj, const std::string& path, const char* key, size_t dflt) {
    if (!obj.contains(key)) return dflt;
    return get_count(obj, path, key);
}

uint64_t get_seed_or(const json& obj, const std::string& path, const char* key, uint64_t dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_number_unsigned()) fail(path + "." + key, "expected a non-negative integer");
    return v.get<uint64_t>();
}

double get_number(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

double get_number_or(const json& obj, const std::string& path, const char* key, double dflt) {
    if (!obj.contains(key)) return dflt;
    return get_number(obj, path, key);
}

std::string get_string(const json& obj, const std::string& path, const char* key) {
    const json& v = require(obj, path, key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

bool get_bool_or(const json& obj, const std::string& path, const char* key, bool dflt) {
    if (!obj.contains(key)) return dflt;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(path + "." + key, "expected true or false");
    return v.get<bool>();
}

ModelConfig parse_model(const json& obj, const std::string& path) {
    check_keys(obj, path, {"vocab_size", "dim", "layers", "heads", "max_len"});
    ModelConfig mc;
    mc.vocab_size = get_count(obj, path, "vocab_size");
    mc.dim = get_count(obj, path, "dim");
    mc.layers = get_count_or(obj, path, "layers", 1);
    mc.heads = get_count_or(obj, path, "heads", 1);
    mc.max_len = get_count(obj, path, "max_len");
    try {
        mc.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return mc;
}

CorpusSpec parse_corpus(const json& obj, const std::string& path) {
    CorpusSpec spec;
    spec.generator = get_string(obj, path, "generator");
    if (spec.generator == "markov") {
        check_keys(obj, path, {"generator", "seq_len", "num_sequences", "concentration", "seed"});
        spec.seq_len = get_count(obj, path, "seq_len");
        spec.concentration = get_number_or(obj, path, "concentration", 1.0);
        if (!(spec.concentration > 0.0)) fail(path + ".concentration", "must be positive");
    } else if (spec.generator == "copy") {
        check_keys(obj, path, {"generator", "half_len", "num_sequences", "seed"});
        spec.half_len = get_count(obj, path, "half_len");
    } else {
        fail(path + ".generator", "expected \"markov\" or \"copy\"");
    }
    spec.num_sequences = get_count(obj, path, "num_sequences");
    spec.seed = get_seed_or(obj, path, "seed", 0);
    return spec;
}

MaskSchedule parse_schedule(const json& obj, const std::string& path) {
    check_keys(obj, path, {"kind", "min_fraction", "max_fraction", "total_steps"});
    MaskSchedule s;
    std::string kind = get_string(obj, path, "kind");
    if (kind == "uniform_fraction") {
        s.kind = MaskSchedule::Kind::uniform_fraction;
        s.min_fraction = get_number_or(obj, path, "min_fraction", s.min_fraction);
        s.max_fraction = get_number_or(obj, path, "max_fraction", s.max_fraction);
    } else if (kind == "per_step_linear") {
        s.kind = MaskSchedule::Kind::per_step_linear;
        s.total_steps = get_count(obj, path, "total_steps");
    } else {
        fail(path + ".kind", "expected \"uniform_fraction\" or \"per_step_linear\"");
    }
    try {
        s.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return s;
}

TrainingSpec parse_training(const json& obj, const std::string& path) {
    check_keys(obj, path,
               {"steps", "learning_rate", "momentum", "batch_size", "schedule", "seed"});
    TrainingSpec spec;
    spec.steps = get_count(obj, path, "steps");
    spec.learning_rate = get_number_or(obj, path, "learning_rate", 0.0);
    if (spec.steps > 0 && !(spec.learning_rate > 0.0))
        fail(path + ".learning_rate", "must be positive when steps > 0");
    spec.momentum = get_number_or(obj, path, "momentum", spec.momentum);
    if (spec.momentum < 0.0 || spec.momentum >= 1.0) fail(path + ".momentum", "must be in [0, 1)");
    spec.batch_size = get_count_or(obj, path, "batch_size", spec.batch_size);
    if (spec.batch_size == 0) fail(path + ".batch_size", "must be positive");
    if (obj.contains("schedule")) spec.schedule = parse_schedule(obj.at("schedule"), path + ".schedule");
    spec.seed = get_seed_or(obj, path, "seed", 0);
    return spec;
}

DecodeSpec parse_decode(const json& obj, const std::string& path) {
    check_keys(obj, path,
               {"block_start", "block_size", "sub_block_size", "scoring_region",
                "frozen_attention"});
    DecodeSpec spec;
    spec.block_start = get_count_or(obj, path, "block_start", 0);
    spec.block_size = get_count(obj, path, "block_size");
    if (spec.block_size == 0) fail(path + ".block_size", "must be positive");
    spec.sub_block_size = get_count_or(obj, path, "sub_block_size", 0);
    if (spec.sub_block_size != 0 && spec.block_size % spec.sub_block_size != 0)
        fail(path + ".sub_block_size", "must divide block_size");
    if (obj.contains("scoring_region")) {
        std::string name = get_string(obj, path, "scoring_region");
        try {
            spec.scoring_region = scoring_region_from_string(name);
        } catch (const Error& e) {
            fail(path + ".scoring_region", e.what());
        }
    }
    spec.frozen_attention = get_bool_or(obj, path, "frozen_attention", false);
    return spec;
}

SamplerConfig parse_sampler(const json& obj, const std::string& path) {
    SamplerConfig sc;
    std::string kind = get_string(obj, path, "kind");
    try {
        sc.kind = sampler_kind_from_string(kind);
    } catch (const Error& e) {
        fail(path + ".kind", e.what());
    }
    switch (sc.kind) {
        case SamplerKind::attn_parallel:
        case SamplerKind::confidence_threshold_parallel:
            check_keys(obj, path, {"kind", "tau"});
            sc.tau = get_number(obj, path, "tau");
            break;
        case SamplerKind::attn_topk:
            check_keys(obj, path, {"kind", "top_k"});
            sc.top_k = get_count(obj, path, "top_k");
            break;
        case SamplerKind::attn_static_threshold:
            check_keys(obj, path, {"kind", "static_threshold"});
            sc.static_threshold = get_number(obj, path, "static_threshold");
            break;
        case SamplerKind::random:
            check_keys(obj, path, {"kind", "seed"});
            sc.seed = get_seed_or(obj, path, "seed", 0);
            break;
        default:
            check_keys(obj, path, {"kind"});
    }
    try {
        sc.validate();
    } catch (const Error& e) {
        fail(path, e.what());
    }
    return sc;
}

EvaluationSpec parse_evaluation(const json& obj, const std::string& path) {
    check_keys(obj, path, {"held_out", "num_blocks", "seed"});
    EvaluationSpec spec;
    spec.held_out = get_count(obj, path, "held_out");
    if (spec.held_out == 0) fail(path + ".held_out", "must be positive");
    spec.num_blocks = get_count_or(obj, path, "num_blocks", 1);
    if (spec.num_blocks == 0) fail(path + ".num_blocks", "must be positive");
    spec.seed = get_seed_or(obj, path, "seed", 0);
    return spec;
}

}  // namespace

void ExperimentConfig::validate() const {
    size_t seq_len = corpus.sequence_length();
    if (seq_len > model.max_len)
        fail("$.corpus", "sequence length " + std::to_string(seq_len) +
                             " exceeds model max_len " + std::to_string(model.max_len));
    size_t block_end = decode.block_start + evaluation.num_blocks * decode.block_size;
    if (block_end > seq_len)
        fail("$.decode", std::to_string(evaluation.num_blocks) + " block(s) of size " +
                             std::to_string(decode.block_size) + " starting at " +
                             std::to_string(decode.block_start) +
                             " do not fit in sequence length " + std::to_string(seq_len));
    if (evaluation.held_out >= corpus.num_sequences)
        fail("$.evaluation.held_out", "must leave at least one training sequence");
    if (samplers.empty()) fail("$.samplers", "at least one sampler is required");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded()) fail("$", "not valid JSON");
    check_keys(root, "$",
               {"model", "corpus", "training", "decode", "samplers", "evaluation", "out_dir"});

    ExperimentConfig config;
    config.model = parse_model(require(root, "$", "model"), "$.model");
    config.corpus = parse_corpus(require(root, "$", "corpus"), "$.corpus");
    config.training = parse_training(require(root, "$", "training"), "$.training");
    config.decode = parse_decode(require(root, "$", "decode"), "$.decode");

    const json& samplers = require(root, "$", "samplers");
    if (!samplers.is_array() || samplers.empty())
        fail("$.samplers", "expected a nonempty array");
    for (size_t i = 0; i < samplers.size(); ++i)
        config.samplers.push_back(
            parse_sampler(samplers.at(i), "$.samplers[" + std::to_string(i) + "]"));

    config.evaluation = parse_evaluation(require(root, "$", "evaluation"), "$.evaluation");
    if (root.contains("out_dir")) config.out_dir = get_string(root, "$", "out_dir");

    config.validate();
    return config;
}

ExperimentConfig load_config_file(const std::string& path) {
    return parse_config(read_text_file(path));
}

}  // namespace attnlab
