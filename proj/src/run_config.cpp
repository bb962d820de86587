#include "ltx/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace ltx {

namespace {

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trimmed(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
        }
        const std::string key = trimmed(t.substr(0, eq));
        const std::string value = trimmed(t.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config: empty key at " + path + ":" + std::to_string(lineno));
        }
        cfg.values_[key] = value;
    }
    return cfg;
}

void RunConfig::apply_overrides(const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("config: override must be key=value, got '" + kv + "'");
        }
        values_[trimmed(kv.substr(0, eq))] = trimmed(kv.substr(eq + 1));
    }
}

std::string RunConfig::get_str(const std::string& key, const std::string& def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_[key] = def;
        return def;
    }
    return it->second;
}

long RunConfig::get_long(const std::string& key, long def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_[key] = std::to_string(def);
        return def;
    }
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " must be an integer, got '" + it->second + "'");
    }
}

double RunConfig::get_double(const std::string& key, double def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof(buf), def);  // shortest round trip
        values_[key] = std::string(buf, res.ptr);
        return def;
    }
    if (it->second == "inf") return std::numeric_limits<double>::infinity();
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " must be a number, got '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool def) {
    auto it = values_.find(key);
    if (it == values_.end()) {
        values_[key] = def ? "true" : "false";
        return def;
    }
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: " + key + " must be true or false, got '" + it->second + "'");
}

uint64_t RunConfig::seed() { return static_cast<uint64_t>(get_long("seed", 42)); }

SamplerConfig RunConfig::sampler_config(uint64_t seed) {
    SamplerConfig s;
    s.temperature = get_double("sampler.temperature", 0.6);
    s.top_p = get_double("sampler.top_p", 0.95);
    s.top_k = static_cast<int>(get_long("sampler.top_k", 20));
    s.max_new_tokens = static_cast<int>(get_long("sampler.max_new_tokens", 64));
    s.seed = seed;
    s.validate();
    return s;
}

SwitchConfig RunConfig::switch_config(const ModelConfig& model) {
    SwitchConfig c;
    const std::string mode = get_str("switch.mode", "adaptive");
    if (mode == "fixed") {
        c.mode = SwitchMode::fixed;
    } else if (mode == "adaptive") {
        c.mode = SwitchMode::adaptive;
    } else {
        throw ConfigError("config: switch.mode must be fixed or adaptive");
    }
    c.fixed_steps = static_cast<int>(get_long("switch.fixed_steps", 8));
    c.entropy_threshold = get_double("switch.entropy_threshold", 7.0);
    c.max_latent_steps = static_cast<int>(get_long("switch.max_latent_steps", 128));
    c.min_latent_steps = static_cast<int>(get_long("switch.min_latent_steps", 0));

    // Stop tokens: comma-separated role names or integer ids. The default is
    // the model-native terminating set.
    const std::string stops =
        get_str("switch.stop_tokens", "end_of_message,think_close,end_of_text");
    std::istringstream ss(stops);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trimmed(item);
        if (item.empty()) continue;
        int id = -1;
        if (item == "end_of_message") {
            id = model.special_tokens.end_of_message;
        } else if (item == "end_of_text") {
            id = model.special_tokens.end_of_text;
        } else if (item == "think_close") {
            id = model.special_tokens.think_close;
        } else if (item == "think_open") {
            id = model.special_tokens.think_open;
        } else if (item == "latent_close") {
            id = model.special_tokens.latent_close;
        } else if (item == "latent_open") {
            id = model.special_tokens.latent_open;
        } else {
            try {
                id = std::stoi(item);
            } catch (const std::exception&) {
                throw ConfigError("config: unknown stop token '" + item + "'");
            }
        }
        if (id < 0 || id >= model.vocab_size) {
            throw ConfigError("config: stop token id out of vocabulary: " + item);
        }
        c.stop_tokens.insert(id);
    }
    c.validate();
    return c;
}

TrainConfig RunConfig::train_config(const ModelConfig& model, int latent_pad_id) {
    TrainConfig t;
    t.lambda_cot = get_double("train.lambda_cot", 0.5);
    t.lambda_kl = get_double("train.lambda_kl", 0.25);
    t.kl_temperature = get_double("train.kl_temperature", 1.0);
    t.lambda_halt_base = get_double("train.lambda_halt_base", 0.025);
    t.ema_decay = get_double("train.ema_decay", 0.99);
    t.gate_epsilon = get_double("train.gate_epsilon", 1e-8);
    t.lr_peak = get_double("train.lr_peak", 1e-7);
    t.lr_floor = get_double("train.lr_floor", 1e-8);
    t.warmup_steps = static_cast<int>(get_long("train.warmup_steps", 0));
    t.total_steps = static_cast<int>(get_long("train.total_steps", 0));
    t.weight_decay = get_double("train.weight_decay", 0.01);
    t.adam_beta1 = get_double("train.adam_beta1", 0.9);
    t.adam_beta2 = get_double("train.adam_beta2", 0.95);
    t.adam_eps = get_double("train.adam_eps", 1e-8);
    t.grad_clip_norm = get_double("train.grad_clip_norm", 1.0);
    t.batch_size = static_cast<int>(get_long("train.batch_size", 4));
    if (t.ema_decay <= 0.0 || t.ema_decay >= 1.0) {
        throw ConfigError("config: train.ema_decay must be in (0, 1)");
    }
    if (t.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
    t.derive_token_sets(model, latent_pad_id);
    return t;
}

ModelConfig RunConfig::model_config(const Tokenizer& tokenizer) {
    ModelConfig c;
    c.vocab_size = tokenizer.vocab_size();
    c.hidden_dim = static_cast<int>(get_long("model.hidden_dim", 32));
    c.num_layers = static_cast<int>(get_long("model.num_layers", 2));
    c.num_heads = static_cast<int>(get_long("model.num_heads", 4));
    c.ffn_dim = static_cast<int>(get_long("model.ffn_dim", 2L * c.hidden_dim));
    c.max_seq_len = static_cast<int>(get_long("model.max_seq_len", 512));
    c.rope_theta = get_double("model.rope_theta", 10000.0);
    c.norm_eps = get_double("model.norm_eps", 1e-6);
    c.special_tokens.latent_open = tokenizer.role_id(Role::latent_open);
    c.special_tokens.latent_close = tokenizer.role_id(Role::latent_close);
    c.special_tokens.think_open = tokenizer.role_id(Role::think_open);
    c.special_tokens.think_close = tokenizer.role_id(Role::think_close);
    c.special_tokens.end_of_message = tokenizer.role_id(Role::end_of_message);
    c.special_tokens.end_of_text = tokenizer.role_id(Role::end_of_text);
    c.validate();
    return c;
}

nlohmann::ordered_json RunConfig::echo() const {
    nlohmann::ordered_json j;
    for (const auto& [key, value] : values_) j[key] = value;  // map iteration is sorted
    return j;
}

std::string RunConfig::echo_text() const {
    std::ostringstream out;
    for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
    return out.str();
}

}  // namespace ltx
