#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "ltx/projector.hpp"

namespace ltx {

enum class SwitchMode { fixed, adaptive };

struct SwitchConfig {
    SwitchMode mode = SwitchMode::adaptive;
    int fixed_steps = 0;               // N, fixed mode
    double entropy_threshold = 7.0;    // tau_H in nats, adaptive mode
    std::set<int> stop_tokens;         // T_stop
    int max_latent_steps = 128;        // hard cap, both modes
    int min_latent_steps = 0;

    void validate() const;
};

enum class SwitchReason {
    none,
    entropy,
    stop_token,
    fixed_budget,
    hard_cap,
    forced_min_not_reached,
};

const char* switch_reason_name(SwitchReason r);
SwitchReason switch_reason_from_name(const std::string& name);

struct SwitchDecision {
    bool do_switch = false;
    SwitchReason reason = SwitchReason::none;
};

// Exit rule evaluated after each completed latent step s >= 1.
// Fixed mode: switch iff s >= N or s >= max_latent_steps.
// Adaptive mode: no switch while s < min_latent_steps; otherwise switch on
// probe entropy strictly above the threshold, probe argmax in the stop set,
// or the hard cap. Reason precedence: stop_token, entropy, hard_cap.
SwitchDecision should_switch(const SwitchConfig& config, int step, const ProbeResult& probe);

// Aggregated sweep output. `parameter` is the budget or threshold.
// accuracy is the mean of per-task correctness proxies (NaN if none defined).
struct SweepRow {
    double parameter = 0.0;
    double accuracy = 0.0;
    double mean_total_tokens = 0.0;
    double mean_latent_steps = 0.0;
};

struct SweepTaskResult {
    double correct = 0.0;  // correctness proxy in [0,1]; NaN when undefined
    int total_tokens = 0;
    int latent_steps = 0;
};

using BudgetRunner = std::function<std::vector<SweepTaskResult>(int budget)>;
using ThresholdRunner = std::function<std::vector<SweepTaskResult>(double threshold)>;

std::vector<SweepRow> sweep_fixed_budgets(const std::vector<int>& budgets,
                                          const BudgetRunner& runner);
std::vector<SweepRow> sweep_entropy_thresholds(const std::vector<double>& thresholds,
                                               const ThresholdRunner& runner);

// Tab-separated table with a header row, ready for plotting.
std::string format_sweep_table(const std::vector<SweepRow>& rows, const std::string& param_name);

}  // namespace ltx
