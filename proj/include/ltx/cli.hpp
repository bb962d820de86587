#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ltx/run_config.hpp"

namespace ltx::cli {

// Shared options: optional config file plus key=value overrides.
struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;

    RunConfig load() const;
};

struct PrepArgs {
    CommonArgs common;
    std::string source_path;
    std::string out_dir;
    std::string tokenizer_path;      // JSON tokenizer spec (optional)
    std::string model_path;          // checkpoint base carrying a tokenizer (optional)
    std::string teacher_model_path;  // checkpoint base; enables sidecar output
    bool curriculum = false;
};
int cmd_prep(const PrepArgs& args);

struct TrainArgs {
    CommonArgs common;
    std::string corpus_path;
    std::string out_dir;
    std::string model_path;           // initial checkpoint base (optional)
    std::string resume_path;          // checkpoint base to resume from
    std::string teacher_sidecar_path; // precomputed distributions (optional)
    std::string tokenizer_path;       // for fresh initialization
    long epochs = 1;
};
int cmd_train(const TrainArgs& args);

struct GenerateArgs {
    CommonArgs common;
    std::string model_path;
    std::string prompts_path;
    std::string out_path;
    std::string mode;  // cot | latent | trained (empty: config key `mode`)
    bool log_hidden = false;
    bool log_entropy = false;
    bool timings = false;
    bool paired_cot = false;  // also run the CoT baseline with shared seeds
};
int cmd_generate(const GenerateArgs& args);

struct SweepArgs {
    CommonArgs common;
    std::string kind;  // fixed | entropy
    std::string grid;  // comma-separated budgets or thresholds
    std::string model_path;
    std::string prompts_path;
    std::string out_path;
};
int cmd_sweep(const SweepArgs& args);

struct AnalyzeArgs {
    CommonArgs common;
    std::string traces_path;
    std::string which;  // fig3 | fig7 | fig4
    std::string out_path;
};
int cmd_analyze(const AnalyzeArgs& args);

}  // namespace ltx::cli
