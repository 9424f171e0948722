#include "attnlab/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "json.hpp"

#include "attnlab/errors.hpp"
#include "attnlab/io.hpp"
#include "attnlab/kernels.hpp"
#include "attnlab/rng.hpp"
#include "attnlab/theory.hpp"

namespace attnlab {

using nlohmann::json;

CorpusPartition partition_corpus(const ExperimentConfig& config) {
    Corpus corpus = config.corpus.generate(config.model.vocab_size);
    Rng rng(config.evaluation.seed);
    std::vector<size_t> eval_idx =
        rng.sample_distinct(config.evaluation.held_out, corpus.sequences.size());

    CorpusPartition part;
    part.train.vocab_size = corpus.vocab_size;
    part.train.seq_len = corpus.seq_len;
    part.train.generator_spec = corpus.generator_spec;
    size_t next_eval = 0;
    for (size_t i = 0; i < corpus.sequences.size(); ++i) {
        if (next_eval < eval_idx.size() && eval_idx[next_eval] == i) {
            part.eval.push_back(corpus.sequences[i]);
            ++next_eval;
        } else {
            part.train.sequences.push_back(corpus.sequences[i]);
        }
    }
    return part;
}

std::string checkpoint_path(const ExperimentConfig& config) {
    return config.out_dir + "/checkpoint.json";
}

ModelParams train_model(const ExperimentConfig& config, std::vector<double>* loss_trace) {
    CorpusPartition part = partition_corpus(config);
    ModelParams params = init_params(config.model, config.training.seed);
    TrainResult result = train(params, part.train, config.training.options());
    if (loss_trace) *loss_trace = result.loss_trace;
    return params;
}

namespace {

double steady_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void require_matching_model(const ModelConfig& a, const ModelConfig& b) {
    bool same = a.vocab_size == b.vocab_size && a.dim == b.dim && a.layers == b.layers &&
                a.heads == b.heads && a.max_len == b.max_len;
    if (!same) throw InvalidInput("checkpoint model shape does not match the config");
}

struct BlockOutcome {
    double ll_per_token = 0.0;
    double pdg = 0.0;
    double steps = 0.0;
};

ReportRow evaluate_sampler(const ExperimentConfig& config, const ModelParams& params,
                           const SamplerConfig& sc, const DecodeOptions& opts,
                           const std::vector<TokenSeq>& eval_seqs, const std::string& label) {
    SamplerFn sampler = make_sampler(sc);
    const DecodeSpec& d = config.decode;
    size_t per_seq = config.evaluation.num_blocks;
    size_t items = eval_seqs.size() * per_seq;
    std::vector<BlockOutcome> out(items);

    ptrdiff_t count = static_cast<ptrdiff_t>(items);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (ptrdiff_t item = 0; item < count; ++item) {
        size_t s = static_cast<size_t>(item) / per_seq;
        size_t k = static_cast<size_t>(item) % per_seq;
        BlockRange block{d.block_start + k * d.block_size, d.block_size};
        BlockEval be =
            teacher_forced_decode(params, eval_seqs[s], block, sampler, opts, d.sub_block_size);
        std::vector<double> full =
            full_context_log_probs(params, eval_seqs[s], block, opts.frozen_attention);
        double full_sum = 0.0;
        for (double t : full) full_sum += t;
        BlockOutcome& o = out[static_cast<size_t>(item)];
        o.ll_per_token = be.chain_log_likelihood / static_cast<double>(d.block_size);
        o.pdg = full_sum - be.chain_log_likelihood;
        o.steps = static_cast<double>(be.steps);
    }

    double mll = 0.0, mpdg = 0.0, mtpf = 0.0, msteps = 0.0;
    for (const BlockOutcome& o : out) {
        mll += o.ll_per_token;
        mpdg += o.pdg;
        mtpf += static_cast<double>(d.block_size) / o.steps;
        msteps += o.steps;
    }
    double n = static_cast<double>(items);
    ReportRow row;
    row.label = label;
    row.fields = {{"mean_log_likelihood", mll / n},
                  {"mean_pdg", mpdg / n},
                  {"tokens_per_forward", mtpf / n},
                  {"steps_per_block", msteps / n}};
    return row;
}

ModelParams load_checkpoint_for(const ExperimentConfig& config) {
    ModelParams params = load_checkpoint(checkpoint_path(config));
    require_matching_model(params.config, config.model);
    return params;
}

void write_rows(const ExperimentConfig& config, const std::vector<ReportRow>& rows,
                const std::string& stem) {
    std::filesystem::create_directories(config.out_dir);
    std::string csv = to_csv(rows);
    write_text_file(config.out_dir + "/" + stem + ".csv", csv);
    write_text_file(config.out_dir + "/" + stem + ".json", rows_to_json(rows));
    emit_svg_scatter(rows, "tokens_per_forward", "mean_log_likelihood",
                     config.out_dir + "/" + stem + ".svg");
    std::cout << csv;
}

}  // namespace

std::vector<ReportRow> comparison_rows(const ExperimentConfig& config, const ModelParams& params) {
    CorpusPartition part = partition_corpus(config);
    std::vector<ReportRow> rows;
    for (const SamplerConfig& sc : config.samplers) {
        double t0 = steady_ms();
        rows.push_back(evaluate_sampler(config, params, sc, config.decode.options(), part.eval,
                                        sc.label()));
        std::fprintf(stderr, "%s: %.1f ms\n", sc.label().c_str(), steady_ms() - t0);
    }
    return rows;
}

std::vector<ReportRow> ablation_rows(const ExperimentConfig& config, const ModelParams& params,
                                     const std::string& axis) {
    CorpusPartition part = partition_corpus(config);
    std::vector<ReportRow> rows;

    if (axis == "layers" || axis == "heads") {
        size_t total = axis == "layers" ? config.model.layers : config.model.heads;
        std::vector<size_t> prefix_sizes{1, (total + 1) / 2, total};
        prefix_sizes.erase(std::unique(prefix_sizes.begin(), prefix_sizes.end()),
                           prefix_sizes.end());

        bool any_attn = false;
        for (const SamplerConfig& sc : config.samplers) {
            bool uses_attention =
                sc.kind == SamplerKind::attn_sequential || sc.kind == SamplerKind::attn_parallel ||
                sc.kind == SamplerKind::attn_topk || sc.kind == SamplerKind::attn_static_threshold;
            if (!uses_attention) continue;
            any_attn = true;
            for (size_t size : prefix_sizes) {
                DecodeOptions opts = config.decode.options();
                std::vector<size_t> prefix(size);
                std::iota(prefix.begin(), prefix.end(), 0);
                (axis == "layers" ? opts.layer_set : opts.head_set) = prefix;
                std::string suffix = size == 1 ? "=1" : "=1.." + std::to_string(size);
                rows.push_back(evaluate_sampler(config, params, sc, opts, part.eval,
                                                sc.label() + "|" + axis + suffix));
            }
        }
        if (!any_attn)
            throw InvalidInput("ablation axis '" + axis +
                               "' needs at least one attention-driven sampler in the config");
        return rows;
    }

    if (axis == "strategy") {
        std::vector<SamplerConfig> grid;
        for (size_t k : {2, 3, 4}) {
            SamplerConfig sc;
            sc.kind = SamplerKind::attn_topk;
            sc.top_k = k;
            grid.push_back(sc);
        }
        for (double threshold : {1.0, 0.9, 0.8}) {
            SamplerConfig sc;
            sc.kind = SamplerKind::attn_static_threshold;
            sc.static_threshold = threshold;
            grid.push_back(sc);
        }
        for (double tau : {0.9, 0.8, 0.7}) {
            SamplerConfig sc;
            sc.kind = SamplerKind::attn_parallel;
            sc.tau = tau;
            grid.push_back(sc);
        }
        for (const SamplerConfig& sc : grid)
            rows.push_back(evaluate_sampler(config, params, sc, config.decode.options(), part.eval,
                                            sc.label()));
        return rows;
    }

    throw InvalidInput("unknown ablation axis '" + axis + "' (expected layers, heads, strategy)");
}

void cmd_train(const ExperimentConfig& config) {
    double t0 = steady_ms();
    std::vector<double> trace;
    ModelParams params = train_model(config, &trace);
    std::filesystem::create_directories(config.out_dir);

    std::string ckpt = checkpoint_path(config);
    save_checkpoint(ckpt, params);

    std::string csv = "step,loss\n";
    for (size_t i = 0; i < trace.size(); ++i)
        csv += std::to_string(i + 1) + "," + format_double(trace[i]) + "\n";
    std::string trace_path = config.out_dir + "/loss_trace.csv";
    write_text_file(trace_path, csv);

    std::fprintf(stderr, "training: %.1f ms\n", steady_ms() - t0);
    std::cout << "checkpoint " << ckpt << "\n";
    std::cout << "loss_trace " << trace_path << "\n";
    std::cout << "steps " << trace.size();
    if (!trace.empty())
        std::cout << " first_loss " << format_double(trace.front()) << " final_loss "
                  << format_double(trace.back());
    std::cout << "\n";
}

void cmd_compare(const ExperimentConfig& config) {
    ModelParams params = load_checkpoint_for(config);
    write_rows(config, comparison_rows(config, params), "comparison");
}

void cmd_ablate(const ExperimentConfig& config, const std::string& axis) {
    ModelParams params = load_checkpoint_for(config);
    write_rows(config, ablation_rows(config, params, axis), "ablation_" + axis);
}

std::string pdg_report_json(const PdgCommandOptions& options) {
    ModelParams params = load_checkpoint(options.checkpoint_path);

    json seq_json = json::parse(read_text_file(options.sequence_path), nullptr, false);
    if (seq_json.is_discarded() || !seq_json.is_array())
        throw InvalidInput("sequence file must hold a JSON array: " + options.sequence_path);
    TokenSeq sequence;
    try {
        sequence = seq_json.get<TokenSeq>();
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed sequence file: ") + e.what());
    }

    BlockRange block{options.block_start, options.block_size};
    AttentionTensor first_step = block_masked_attention(params, sequence, block);
    Matrix agg = aggregate_attention(first_step, index_range(first_step.layers),
                                     index_range(first_step.heads));

    Permutation perm;
    if (options.permutation == "best_order") {
        perm = best_order(agg, block);
    } else if (options.permutation == "brute_force") {
        perm = brute_force_min_surrogate(agg, block).first;
    } else {
        for (size_t pos = 0, next = 0; pos <= options.permutation.size(); ++pos) {
            if (pos == options.permutation.size() || options.permutation[pos] == ',') {
                std::string part = options.permutation.substr(next, pos - next);
                try {
                    perm.order.push_back(std::stoul(part));
                } catch (const std::exception&) {
                    throw InvalidInput("bad permutation entry '" + part + "'");
                }
                next = pos + 1;
            }
        }
        perm.validate(block.size);
    }

    double surrogate = pdg_surrogate(block_submatrix(agg, block), perm);
    PdgResult exact = pdg_exact(params, sequence, block, perm, options.frozen_attention);

    json report;
    report["block"] = {{"start", block.start}, {"size", block.size}};
    report["frozen_attention"] = options.frozen_attention;
    report["permutation"] = perm.order;
    report["exact_pdg"] = exact.value;
    report["surrogate"] = surrogate;
    json terms = json::array();
    for (size_t k = 0; k < perm.order.size(); ++k)
        terms.push_back(exact.full_terms[perm.order[k]] - exact.chain_terms[k]);
    report["per_step_terms"] = std::move(terms);
    if (params.config.layers == 1 && params.config.heads == 1) {
        GapBound gb = pdg_bound(params, sequence, block, perm, first_step.at(0, 0));
        report["bound"] = gb.value;
        report["B"] = gb.b_const;
        report["W_norm"] = gb.w_norm;
    } else {
        report["bound"] = nullptr;
        report["B"] = nullptr;
        report["W_norm"] = nullptr;
    }
    return report.dump(2) + "\n";
}

void cmd_pdg(const PdgCommandOptions& options) { std::cout << pdg_report_json(options); }

size_t cmd_verify(const VerifyCommandOptions& options) {
    VerifyOptions vo;
    vo.seed = options.seed;
    vo.trials = options.trials;
    if (options.corrupt_order) {
        vo.order_fn = [](const Matrix& attention, BlockRange block) {
            std::vector<double> s = total_attention(attention, block);
            Permutation perm = Permutation::identity(block.size);
            std::stable_sort(perm.order.begin(), perm.order.end(),
                             [&](size_t a, size_t b) { return s[a] < s[b]; });
            return perm;
        };
    }

    double t0 = steady_ms();
    std::vector<CheckResult> results = run_all_checks(vo);
    std::fprintf(stderr, "verification: %.1f ms\n", steady_ms() - t0);

    size_t failed = 0;
    for (const CheckResult& r : results) {
        if (!r.pass) ++failed;
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (trials="
                  << r.trials << ", max_violation=" << format_double(r.max_violation) << ")\n";
        if (!r.detail.empty()) std::cout << "       " << r.detail << "\n";
    }
    std::cout << (results.size() - failed) << "/" << results.size() << " checks passed\n";

    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        json arr = json::array();
        for (const CheckResult& r : results)
            arr.push_back({{"name", r.name},
                           {"trials", r.trials},
                           {"max_violation", r.max_violation},
                           {"pass", r.pass},
                           {"detail", r.detail}});
        write_text_file(options.out_dir + "/verify_report.json", arr.dump(2) + "\n");
    }
    return failed;
}

}  // namespace attnlab
