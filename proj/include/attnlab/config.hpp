#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/diffusion.hpp"
#include "attnlab/model.hpp"
#include "attnlab/samplers.hpp"

namespace attnlab {

// Data source for an experiment. Markov corpora carry local structure,
// copy corpora long-range structure; exactly one family per config.
struct CorpusSpec {
    std::string generator;  // "markov" or "copy"
    size_t seq_len = 0;     // markov
    size_t half_len = 0;    // copy
    size_t num_sequences = 0;
    double concentration = 1.0;  // markov transition sharpness
    uint64_t seed = 0;

    size_t sequence_length() const;
    Corpus generate(size_t vocab_size) const;
};

struct TrainingSpec {
    size_t steps = 0;
    double learning_rate = 0.0;
    double momentum = 0.9;
    size_t batch_size = 8;
    MaskSchedule schedule;
    uint64_t seed = 0;

    TrainOptions options() const;
};

struct DecodeSpec {
    size_t block_start = 0;
    size_t block_size = 0;
    size_t sub_block_size = 0;  // 0 means the whole block
    ScoringRegion scoring_region = ScoringRegion::block;
    bool frozen_attention = false;

    DecodeOptions options() const;
};

struct EvaluationSpec {
    size_t held_out = 0;    // sequences reserved for evaluation
    size_t num_blocks = 1;  // evaluated blocks per held-out sequence
    uint64_t seed = 0;
};

// One experiment, fully determined by a single JSON document. See the
// README for the schema; unknown keys are rejected.
struct ExperimentConfig {
    ModelConfig model;
    CorpusSpec corpus;
    TrainingSpec training;
    DecodeSpec decode;
    std::vector<SamplerConfig> samplers;
    EvaluationSpec evaluation;
    std::string out_dir = "out";

    void validate() const;  // ConfigError with the offending JSON path
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace attnlab
