#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltx/model.hpp"
#include "ltx/projector.hpp"
#include "ltx/sampler.hpp"
#include "ltx/switch_policy.hpp"

namespace ltx {

// Full record of one generation run. Token accounting follows the rule
// total_tokens = latent steps + emitted explicit tokens; in trained mode the
// forced structural tokens (latent_open, latent_close, think_open) are
// emitted positions and therefore count as explicit tokens.
struct GenerationTrace {
    std::string id;
    std::string mode;  // "cot" | "latent" | "trained"
    std::vector<int> prompt_token_ids;
    std::vector<double> latent_entropies;   // H_1..H_S
    std::vector<int> latent_probe_tokens;   // argmax probes, never fed back
    std::vector<Vec> latent_hidden_log;     // populated only with log_hidden
    std::vector<Vec> explicit_hidden_log;   // populated only with log_hidden
    std::vector<double> explicit_entropies; // populated only with log_entropy
    int switch_step = 0;                    // S
    SwitchReason switch_reason = SwitchReason::none;
    std::vector<int> explicit_token_ids;
    int total_tokens = 0;
    int final_cache_length = 0;             // prompt + S + explicit positions
    std::string terminated_by;              // "stop_token" | "length_limit"
    double duration_ms = -1.0;              // < 0 means not recorded
    nlohmann::ordered_json config_echo;
};

struct GenerateOptions {
    bool log_hidden = false;
    bool log_entropy = false;
    // Trained mode only: additionally honor the adaptive entropy/stop rule as
    // an exit fallback alongside the model's own boundary signal.
    bool trained_adaptive_fallback = false;
};

// Discrete chain-of-thought baseline: prefill, then ordinary sampling.
GenerationTrace generate_cot(const ModelBundle& model, const SamplerConfig& sampler,
                             const std::vector<int>& prompt,
                             const GenerateOptions& options = {});

// Two-phase run: prompt prefill, latent rollout under the switch policy,
// then explicit sampling from the same cache. The first explicit token is
// sampled from the final latent hidden state's logits (no extra forward
// pass). With a fixed budget of zero this is exactly generate_cot.
GenerationTrace generate_latent(const ModelBundle& model, const LatentProjector& projector,
                                const SwitchConfig& switch_config, const SamplerConfig& sampler,
                                const std::vector<int>& prompt,
                                const GenerateOptions& options = {});

// Trained two-part format: emits latent_open, rolls latent steps until the
// model's own latent_close boundary fires (sigmoid(z_close) > 0.5 or argmax
// == latent_close), then emits latent_close and think_open and samples the
// explicit continuation. The hard cap from switch_config always applies.
GenerationTrace generate_trained(const ModelBundle& model, const LatentProjector& projector,
                                 const SwitchConfig& switch_config, const SamplerConfig& sampler,
                                 const std::vector<int>& prompt,
                                 const GenerateOptions& options = {});

nlohmann::ordered_json trace_to_json(const GenerationTrace& trace);
GenerationTrace trace_from_json(const nlohmann::ordered_json& j);

void write_traces_jsonl(const std::string& path, const std::vector<GenerationTrace>& traces);
std::vector<GenerationTrace> read_traces_jsonl(const std::string& path);

}  // namespace ltx
