// Command-line entry point: prep, train, generate, sweep, analyze.

#include <iostream>

#include "CLI11.hpp"
#include "ltx/cli.hpp"
#include "ltx/errors.hpp"

namespace {

void add_common(CLI::App* cmd, ltx::cli::CommonArgs& common) {
    cmd->add_option("--config", common.config_path, "key = value configuration file");
    cmd->add_option("--set", common.overrides, "config override key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-then-explicit reasoning engine"};
    app.require_subcommand(1);

    ltx::cli::PrepArgs prep;
    auto* prep_cmd = app.add_subcommand("prep", "render a training corpus from source records");
    prep_cmd->add_option("--source", prep.source_path, "source records (jsonl)")->required();
    prep_cmd->add_option("--out", prep.out_dir, "output directory")->required();
    prep_cmd->add_option("--tokenizer", prep.tokenizer_path, "tokenizer spec (json)");
    prep_cmd->add_option("--model", prep.model_path, "checkpoint base carrying the tokenizer");
    prep_cmd->add_option("--teacher-model", prep.teacher_model_path,
                         "teacher checkpoint base; also writes the distribution sidecar");
    prep_cmd->add_flag("--curriculum", prep.curriculum,
                       "order records easy to hard, shuffled within buckets");
    add_common(prep_cmd, prep.common);

    ltx::cli::TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "run the supervised training stack");
    train_cmd->add_option("--corpus", train.corpus_path, "rendered corpus (jsonl)")->required();
    train_cmd->add_option("--out", train.out_dir, "output directory")->required();
    train_cmd->add_option("--model", train.model_path, "initial checkpoint base");
    train_cmd->add_option("--resume", train.resume_path, "checkpoint base to resume from");
    train_cmd->add_option("--teacher-sidecar", train.teacher_sidecar_path,
                          "precomputed teacher distributions (jsonl)");
    train_cmd->add_option("--tokenizer", train.tokenizer_path,
                          "tokenizer spec for fresh initialization");
    train_cmd->add_option("--epochs", train.epochs, "epochs to train")->required();
    add_common(train_cmd, train.common);

    ltx::cli::GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "generate traces for a prompt set");
    gen_cmd->add_option("--model", gen.model_path, "checkpoint base")->required();
    gen_cmd->add_option("--prompts", gen.prompts_path, "prompts (jsonl)")->required();
    gen_cmd->add_option("--out", gen.out_path, "output trace file (jsonl)")->required();
    gen_cmd->add_option("--mode", gen.mode, "cot | latent | trained");
    gen_cmd->add_flag("--log-hidden", gen.log_hidden, "record hidden-state trajectories");
    gen_cmd->add_flag("--log-entropy", gen.log_entropy, "record explicit-phase entropies");
    gen_cmd->add_flag("--timings", gen.timings,
                      "record wall-clock duration per trace (breaks byte reproducibility)");
    gen_cmd->add_flag("--paired", gen.paired_cot,
                      "also run the CoT baseline with shared prompts and seeds");
    add_common(gen_cmd, gen.common);

    ltx::cli::SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "sweep fixed budgets or entropy thresholds");
    sweep_cmd->add_option("--kind", sweep.kind, "fixed | entropy")->required();
    sweep_cmd->add_option("--grid", sweep.grid, "comma-separated grid values")->required();
    sweep_cmd->add_option("--model", sweep.model_path, "checkpoint base")->required();
    sweep_cmd->add_option("--prompts", sweep.prompts_path, "prompts (jsonl)")->required();
    sweep_cmd->add_option("--out", sweep.out_path, "output table (tsv)")->required();
    add_common(sweep_cmd, sweep.common);

    ltx::cli::AnalyzeArgs analyze;
    auto* analyze_cmd = app.add_subcommand("analyze", "post-hoc analysis of trace files");
    analyze_cmd->add_option("--traces", analyze.traces_path, "trace file (jsonl)")->required();
    analyze_cmd->add_option("--which", analyze.which, "fig3 | fig7 | fig4")->required();
    analyze_cmd->add_option("--out", analyze.out_path, "output table (tsv)")->required();
    add_common(analyze_cmd, analyze.common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep_cmd->parsed()) return ltx::cli::cmd_prep(prep);
        if (train_cmd->parsed()) return ltx::cli::cmd_train(train);
        if (gen_cmd->parsed()) return ltx::cli::cmd_generate(gen);
        if (sweep_cmd->parsed()) return ltx::cli::cmd_sweep(sweep);
        if (analyze_cmd->parsed()) return ltx::cli::cmd_analyze(analyze);
    } catch (const ltx::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
