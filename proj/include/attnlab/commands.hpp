#pragma once

#include <string>
#include <vector>

#include "attnlab/config.hpp"
#include "attnlab/report.hpp"
#include "attnlab/verify.hpp"

namespace attnlab {

// Deterministic split of the configured corpus: evaluation sequences are
// chosen by index with the evaluation seed, the rest trains. Both the train
// and compare commands derive the same partition from the same config.
struct CorpusPartition {
    Corpus train;
    std::vector<TokenSeq> eval;
};
CorpusPartition partition_corpus(const ExperimentConfig& config);

std::string checkpoint_path(const ExperimentConfig& config);

// Trains on the train partition and returns the parameters.
ModelParams train_model(const ExperimentConfig& config, std::vector<double>* loss_trace = nullptr);

// Teacher-forced evaluation of every configured sampler over the held-out
// blocks. Row fields: mean_log_likelihood (per decoded token), mean_pdg,
// tokens_per_forward, steps_per_block.
std::vector<ReportRow> comparison_rows(const ExperimentConfig& config, const ModelParams& params);

// Rows for one ablation axis: "layers" and "heads" sweep aggregation
// prefixes for the attention-driven samplers in the config; "strategy"
// sweeps the fixed top-k / static-threshold / dynamic-threshold grid.
std::vector<ReportRow> ablation_rows(const ExperimentConfig& config, const ModelParams& params,
                                     const std::string& axis);

struct PdgCommandOptions {
    std::string checkpoint_path;
    std::string sequence_path;  // JSON array of token ids
    size_t block_start = 0;
    size_t block_size = 0;
    std::string permutation = "best_order";  // "best_order" | "brute_force" | "i,j,k,..."
    bool frozen_attention = false;
};

// The pdg subcommand's JSON payload (trailing newline included).
std::string pdg_report_json(const PdgCommandOptions& options);

struct VerifyCommandOptions {
    uint64_t seed = 20252026;
    size_t trials = 0;  // 0 keeps per-check defaults
    // Self-test hook: replaces the order picker with an ascending sort,
    // which the brute-force sweep must catch.
    bool corrupt_order = false;
    std::string out_dir;  // when set, also writes verify_report.json there
};

// Command entry points. They write files under config.out_dir and print
// their primary artifact to stdout; timing goes to stderr only, so all
// streams and files are byte-deterministic for a fixed config. Errors are
// reported by throwing; the CLI maps exception types to exit codes.
void cmd_train(const ExperimentConfig& config);
void cmd_compare(const ExperimentConfig& config);
void cmd_ablate(const ExperimentConfig& config, const std::string& axis);
void cmd_pdg(const PdgCommandOptions& options);
size_t cmd_verify(const VerifyCommandOptions& options);  // returns failed-check count

}  // namespace attnlab
