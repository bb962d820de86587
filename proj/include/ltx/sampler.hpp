#pragma once

#include <cstdint>

#include "ltx/rng.hpp"
#include "ltx/tensor.hpp"

namespace ltx {

struct SamplerConfig {
    double temperature = 0.6;
    double top_p = 0.95;
    int top_k = 20;
    int max_new_tokens = 256;
    uint64_t seed = 0;

    void validate() const;
};

// Temperature / top-k / top-p sampling. Candidates are ordered by
// (probability desc, id asc); top-p keeps the smallest prefix whose mass
// reaches the threshold; the surviving set is renormalized and sampled by
// inverse CDF from one uniform draw.
int sample_token(const Vec& logits, const SamplerConfig& sampler, CounterRng& rng);

}  // namespace ltx
