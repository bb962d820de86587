#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltx/losses.hpp"
#include "ltx/model.hpp"
#include "ltx/sampler.hpp"
#include "ltx/switch_policy.hpp"
#include "ltx/tokenizer.hpp"

namespace ltx {

// Flat key-value run configuration: loaded from a `key = value` file,
// overridden from the command line, with defaults materialized on first use
// so the echoed effective config is complete.
class RunConfig {
public:
    RunConfig() = default;
    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    // Each override is "key=value".
    void apply_overrides(const std::vector<std::string>& overrides);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_str(const std::string& key, const std::string& def);
    long get_long(const std::string& key, long def);
    double get_double(const std::string& key, double def);
    bool get_bool(const std::string& key, bool def);

    uint64_t seed();

    SamplerConfig sampler_config(uint64_t seed);
    SwitchConfig switch_config(const ModelConfig& model);
    TrainConfig train_config(const ModelConfig& model, int latent_pad_id);
    // Toy model dimensions for fresh initialization; vocab and specials come
    // from the tokenizer.
    ModelConfig model_config(const Tokenizer& tokenizer);

    // Sorted key-value echo of the effective configuration.
    nlohmann::ordered_json echo() const;
    std::string echo_text() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace ltx
