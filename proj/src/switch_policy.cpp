#include "ltx/switch_policy.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace ltx {

void SwitchConfig::validate() const {
    if (max_latent_steps <= 0) throw ConfigError("switch: max_latent_steps must be positive");
    if (min_latent_steps < 0) throw ConfigError("switch: min_latent_steps must be nonnegative");
    if (min_latent_steps > max_latent_steps) {
        throw ConfigError("switch: min_latent_steps exceeds max_latent_steps");
    }
    if (mode == SwitchMode::fixed && fixed_steps < 0) {
        throw ConfigError("switch: fixed_steps must be nonnegative");
    }
}

const char* switch_reason_name(SwitchReason r) {
    switch (r) {
        case SwitchReason::none: return "none";
        case SwitchReason::entropy: return "entropy";
        case SwitchReason::stop_token: return "stop_token";
        case SwitchReason::fixed_budget: return "fixed_budget";
        case SwitchReason::hard_cap: return "hard_cap";
        case SwitchReason::forced_min_not_reached: return "forced_min_not_reached";
    }
    return "none";
}

SwitchReason switch_reason_from_name(const std::string& name) {
    for (SwitchReason r : {SwitchReason::none, SwitchReason::entropy, SwitchReason::stop_token,
                           SwitchReason::fixed_budget, SwitchReason::hard_cap,
                           SwitchReason::forced_min_not_reached}) {
        if (name == switch_reason_name(r)) return r;
    }
    throw DataError("unknown switch reason: " + name);
}

SwitchDecision should_switch(const SwitchConfig& config, int step, const ProbeResult& probe) {
    if (config.mode == SwitchMode::fixed) {
        if (step >= config.fixed_steps) return {true, SwitchReason::fixed_budget};
        if (step >= config.max_latent_steps) return {true, SwitchReason::hard_cap};
        return {false, SwitchReason::none};
    }
    if (step < config.min_latent_steps) return {false, SwitchReason::forced_min_not_reached};
    if (config.stop_tokens.count(probe.argmax_token)) return {true, SwitchReason::stop_token};
    if (probe.entropy > config.entropy_threshold) return {true, SwitchReason::entropy};
    if (step >= config.max_latent_steps) return {true, SwitchReason::hard_cap};
    return {false, SwitchReason::none};
}

namespace {

SweepRow aggregate(double parameter, const std::vector<SweepTaskResult>& results) {
    SweepRow row;
    row.parameter = parameter;
    double acc = 0.0, tok = 0.0, lat = 0.0;
    int acc_n = 0;
    for (const auto& r : results) {
        if (!std::isnan(r.correct)) {
            acc += r.correct;
            ++acc_n;
        }
        tok += r.total_tokens;
        lat += r.latent_steps;
    }
    const double n = static_cast<double>(results.size());
    row.accuracy = acc_n > 0 ? acc / acc_n : std::nan("");
    row.mean_total_tokens = results.empty() ? std::nan("") : tok / n;
    row.mean_latent_steps = results.empty() ? std::nan("") : lat / n;
    return row;
}

}  // namespace

std::vector<SweepRow> sweep_fixed_budgets(const std::vector<int>& budgets,
                                          const BudgetRunner& runner) {
    if (budgets.empty()) throw InputError("sweep: empty budget list");
    std::vector<SweepRow> rows;
    for (int budget : budgets) {
        if (budget < 0) throw InputError("sweep: negative budget");
        try {
            rows.push_back(aggregate(budget, runner(budget)));
        } catch (const Error& e) {
            throw Error(e.kind(), "sweep at budget " + std::to_string(budget) + ": " + e.what());
        } catch (const std::exception& e) {
            throw DataError("sweep: runner failed at budget " + std::to_string(budget) + ": " +
                            e.what());
        }
    }
    return rows;
}

std::vector<SweepRow> sweep_entropy_thresholds(const std::vector<double>& thresholds,
                                               const ThresholdRunner& runner) {
    if (thresholds.empty()) throw InputError("sweep: empty threshold list");
    std::vector<SweepRow> rows;
    for (double tau : thresholds) {
        try {
            rows.push_back(aggregate(tau, runner(tau)));
        } catch (const Error& e) {
            throw Error(e.kind(), "sweep at threshold " + std::to_string(tau) + ": " + e.what());
        } catch (const std::exception& e) {
            throw DataError("sweep: runner failed at threshold " + std::to_string(tau) + ": " +
                            e.what());
        }
    }
    return rows;
}

std::string format_sweep_table(const std::vector<SweepRow>& rows, const std::string& param_name) {
    std::ostringstream out;
    out << param_name << "\taccuracy\tmean_total_tokens\tmean_latent_steps\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g\t%.9g\t%.9g\t%.9g\n", r.parameter, r.accuracy,
                      r.mean_total_tokens, r.mean_latent_steps);
        out << buf;
    }
    return out.str();
}

}  // namespace ltx
