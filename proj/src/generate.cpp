#include "ltx/generate.hpp"

#include <cmath>
#include <fstream>

namespace ltx {

namespace {

struct RunState {
    Vec hidden;
    Vec logits;
    LayerCache cache;
    CounterRng rng;
};

// Prefill the prompt. Randomness is consumed only by sampling, so latent
// steps never perturb the explicit sampling stream.
RunState prefill(const ModelBundle& model, const SamplerConfig& sampler,
                 const std::vector<int>& prompt) {
    if (prompt.empty()) throw InputError("generate: empty prompt");
    RunState st;
    st.cache = LayerCache::empty(model.config);
    st.rng = CounterRng(derive_seed(sampler.seed, "sampler"));
    std::vector<Vec> embeddings;
    embeddings.reserve(prompt.size());
    for (int t : prompt) embeddings.push_back(embed(model, t));
    auto outs = forward_prefix(model, embeddings, st.cache);
    st.hidden = std::move(outs.back().hidden);
    st.logits = std::move(outs.back().logits);
    return st;
}

void check_budget(const ModelBundle& model, size_t prompt_len, int latent_bound, int forced_tokens,
                  int max_new_tokens) {
    const long need = static_cast<long>(prompt_len) + latent_bound + forced_tokens +
                      max_new_tokens;
    if (need > model.config.max_seq_len) {
        throw CapacityError("generate: prompt + latent budget + new tokens (" +
                            std::to_string(need) + ") exceeds max_seq_len " +
                            std::to_string(model.config.max_seq_len));
    }
}

// Emit one token: record it, optionally log the entropy of the distribution
// it was drawn from, then feed it so its position enters the cache.
void emit_token(const ModelBundle& model, RunState& st, GenerationTrace& trace,
                const GenerateOptions& options, int token) {
    trace.explicit_token_ids.push_back(token);
    if (options.log_entropy) trace.explicit_entropies.push_back(probe_logits(st.logits).entropy);
    StepOutput step = forward_step(model, embed(model, token), st.cache);
    st.hidden = std::move(step.hidden);
    st.logits = std::move(step.logits);
    if (options.log_hidden) trace.explicit_hidden_log.push_back(st.hidden);
}

// Sample-and-feed loop shared by every mode.
void run_explicit_phase(const ModelBundle& model, const SamplerConfig& sampler, RunState& st,
                        GenerationTrace& trace, const GenerateOptions& options) {
    const SpecialTokens& sp = model.config.special_tokens;
    int sampled = 0;
    while (sampled < sampler.max_new_tokens) {
        const int token = sample_token(st.logits, sampler, st.rng);
        emit_token(model, st, trace, options, token);
        ++sampled;
        if (token == sp.end_of_message || token == sp.end_of_text) {
            trace.terminated_by = "stop_token";
            return;
        }
    }
    trace.terminated_by = "length_limit";
}

void finalize(GenerationTrace& trace, const RunState& st) {
    trace.total_tokens = trace.switch_step + static_cast<int>(trace.explicit_token_ids.size());
    trace.final_cache_length = st.cache.length;
}

nlohmann::ordered_json sampler_echo(const SamplerConfig& s) {
    return {{"temperature", s.temperature}, {"top_p", s.top_p},       {"top_k", s.top_k},
            {"max_new_tokens", s.max_new_tokens}, {"seed", s.seed}};
}

nlohmann::ordered_json switch_echo(const SwitchConfig& c) {
    return {{"mode", c.mode == SwitchMode::fixed ? "fixed" : "adaptive"},
            {"fixed_steps", c.fixed_steps},
            {"entropy_threshold", c.entropy_threshold},
            {"stop_tokens", std::vector<int>(c.stop_tokens.begin(), c.stop_tokens.end())},
            {"max_latent_steps", c.max_latent_steps},
            {"min_latent_steps", c.min_latent_steps}};
}

}  // namespace

GenerationTrace generate_cot(const ModelBundle& model, const SamplerConfig& sampler,
                             const std::vector<int>& prompt, const GenerateOptions& options) {
    sampler.validate();
    check_budget(model, prompt.size(), 0, 0, sampler.max_new_tokens);
    GenerationTrace trace;
    trace.mode = "cot";
    trace.prompt_token_ids = prompt;
    trace.switch_step = 0;
    trace.switch_reason = SwitchReason::none;
    trace.config_echo = {{"mode", "cot"}, {"sampler", sampler_echo(sampler)}};
    RunState st = prefill(model, sampler, prompt);
    run_explicit_phase(model, sampler, st, trace, options);
    finalize(trace, st);
    return trace;
}

GenerationTrace generate_latent(const ModelBundle& model, const LatentProjector& projector,
                                const SwitchConfig& switch_config, const SamplerConfig& sampler,
                                const std::vector<int>& prompt, const GenerateOptions& options) {
    sampler.validate();
    switch_config.validate();
    const int latent_bound = switch_config.mode == SwitchMode::fixed
                                 ? std::min(switch_config.fixed_steps,
                                            switch_config.max_latent_steps)
                                 : switch_config.max_latent_steps;
    check_budget(model, prompt.size(), latent_bound, 0, sampler.max_new_tokens);
    GenerationTrace trace;
    trace.mode = "latent";
    trace.prompt_token_ids = prompt;
    trace.config_echo = {{"mode", "latent"},
                         {"sampler", sampler_echo(sampler)},
                         {"switch", switch_echo(switch_config)}};
    RunState st = prefill(model, sampler, prompt);

    int steps = 0;
    SwitchReason reason = SwitchReason::none;
    if (latent_bound > 0) {
        while (true) {
            LatentStepResult ls = latent_step(model, projector, st.hidden, st.cache);
            st.hidden = std::move(ls.next_hidden);
            st.logits = std::move(ls.logits);
            ++steps;
            trace.latent_entropies.push_back(ls.probe.entropy);
            trace.latent_probe_tokens.push_back(ls.probe.argmax_token);
            if (options.log_hidden) trace.latent_hidden_log.push_back(st.hidden);
            const SwitchDecision d = should_switch(switch_config, steps, ls.probe);
            if (d.do_switch) {
                reason = d.reason;
                break;
            }
        }
    } else {
        reason = SwitchReason::fixed_budget;  // zero-budget degenerate run
    }
    trace.switch_step = steps;
    trace.switch_reason = reason;

    // The first explicit token is sampled from the final latent state's
    // logits; no extra forward pass happens at the switch.
    run_explicit_phase(model, sampler, st, trace, options);
    finalize(trace, st);
    return trace;
}

GenerationTrace generate_trained(const ModelBundle& model, const LatentProjector& projector,
                                 const SwitchConfig& switch_config, const SamplerConfig& sampler,
                                 const std::vector<int>& prompt, const GenerateOptions& options) {
    sampler.validate();
    switch_config.validate();
    const SpecialTokens& sp = model.config.special_tokens;
    check_budget(model, prompt.size(), switch_config.max_latent_steps, 3, sampler.max_new_tokens);
    GenerationTrace trace;
    trace.mode = "trained";
    trace.prompt_token_ids = prompt;
    trace.config_echo = {{"mode", "trained"},
                         {"sampler", sampler_echo(sampler)},
                         {"switch", switch_echo(switch_config)},
                         {"adaptive_fallback", options.trained_adaptive_fallback}};
    RunState st = prefill(model, sampler, prompt);

    emit_token(model, st, trace, options, sp.latent_open);

    int steps = 0;
    SwitchReason reason = SwitchReason::none;
    while (true) {
        LatentStepResult ls = latent_step(model, projector, st.hidden, st.cache);
        st.hidden = std::move(ls.next_hidden);
        st.logits = std::move(ls.logits);
        ++steps;
        trace.latent_entropies.push_back(ls.probe.entropy);
        trace.latent_probe_tokens.push_back(ls.probe.argmax_token);
        if (options.log_hidden) trace.latent_hidden_log.push_back(st.hidden);
        if (steps >= switch_config.min_latent_steps) {
            const double z_close = st.logits[sp.latent_close];
            const bool boundary = kernels::sigmoid(z_close) > 0.5 ||
                                  ls.probe.argmax_token == sp.latent_close;
            if (boundary) {
                reason = SwitchReason::stop_token;
                break;
            }
            if (options.trained_adaptive_fallback) {
                const SwitchDecision d = should_switch(switch_config, steps, ls.probe);
                if (d.do_switch) {
                    reason = d.reason;
                    break;
                }
            }
        }
        if (steps >= switch_config.max_latent_steps) {
            reason = SwitchReason::hard_cap;
            break;
        }
    }
    trace.switch_step = steps;
    trace.switch_reason = reason;

    emit_token(model, st, trace, options, sp.latent_close);
    emit_token(model, st, trace, options, sp.think_open);
    run_explicit_phase(model, sampler, st, trace, options);
    finalize(trace, st);
    return trace;
}

nlohmann::ordered_json trace_to_json(const GenerationTrace& t) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["mode"] = t.mode;
    j["prompt_token_ids"] = t.prompt_token_ids;
    j["latent_entropies"] = t.latent_entropies;
    j["latent_probe_tokens"] = t.latent_probe_tokens;
    if (!t.latent_hidden_log.empty() || !t.explicit_hidden_log.empty()) {
        j["latent_hidden_log"] = t.latent_hidden_log;
        j["explicit_hidden_log"] = t.explicit_hidden_log;
    }
    if (!t.explicit_entropies.empty()) j["explicit_entropies"] = t.explicit_entropies;
    j["switch_step"] = t.switch_step;
    j["switch_reason"] = switch_reason_name(t.switch_reason);
    j["explicit_token_ids"] = t.explicit_token_ids;
    j["total_tokens"] = t.total_tokens;
    j["final_cache_length"] = t.final_cache_length;
    j["terminated_by"] = t.terminated_by;
    if (t.duration_ms >= 0.0) j["duration_ms"] = t.duration_ms;
    j["config"] = t.config_echo;
    return j;
}

GenerationTrace trace_from_json(const nlohmann::ordered_json& j) {
    GenerationTrace t;
    t.id = j.value("id", "");
    t.mode = j.value("mode", "");
    t.prompt_token_ids = j.at("prompt_token_ids").get<std::vector<int>>();
    t.latent_entropies = j.at("latent_entropies").get<std::vector<double>>();
    t.latent_probe_tokens = j.at("latent_probe_tokens").get<std::vector<int>>();
    if (j.contains("latent_hidden_log")) {
        t.latent_hidden_log = j.at("latent_hidden_log").get<std::vector<Vec>>();
    }
    if (j.contains("explicit_hidden_log")) {
        t.explicit_hidden_log = j.at("explicit_hidden_log").get<std::vector<Vec>>();
    }
    if (j.contains("explicit_entropies")) {
        t.explicit_entropies = j.at("explicit_entropies").get<std::vector<double>>();
    }
    t.switch_step = j.at("switch_step").get<int>();
    t.switch_reason = switch_reason_from_name(j.at("switch_reason").get<std::string>());
    t.explicit_token_ids = j.at("explicit_token_ids").get<std::vector<int>>();
    t.total_tokens = j.at("total_tokens").get<int>();
    t.final_cache_length = j.value("final_cache_length", 0);
    t.terminated_by = j.value("terminated_by", "");
    t.duration_ms = j.value("duration_ms", -1.0);
    if (j.contains("config")) t.config_echo = j.at("config");
    return t;
}

void write_traces_jsonl(const std::string& path, const std::vector<GenerationTrace>& traces) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("traces: cannot write " + path);
    for (const auto& t : traces) out << trace_to_json(t).dump() << "\n";
}

std::vector<GenerationTrace> read_traces_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("traces: cannot open " + path);
    std::vector<GenerationTrace> traces;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw DataError("traces: bad json at " + path + ":" + std::to_string(lineno) + ": " +
                            e.what());
        }
        if (j.contains("error")) continue;  // per-prompt failure records
        traces.push_back(trace_from_json(j));
    }
    return traces;
}

}  // namespace ltx
