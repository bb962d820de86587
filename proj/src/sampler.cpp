#include "ltx/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ltx/errors.hpp"
#include "ltx/kernels.hpp"

namespace ltx {

void SamplerConfig::validate() const {
    if (temperature <= 0.0) throw ConfigError("sampler: temperature must be positive");
    if (top_p <= 0.0 || top_p > 1.0) throw ConfigError("sampler: top_p must be in (0, 1]");
    if (top_k < 1) throw ConfigError("sampler: top_k must be >= 1");
    if (max_new_tokens < 1) throw ConfigError("sampler: max_new_tokens must be >= 1");
}

int sample_token(const Vec& logits, const SamplerConfig& sampler, CounterRng& rng) {
    if (!all_finite(logits)) throw NumericError("sample_token: non-finite logits");
    const int v = static_cast<int>(logits.size());

    Vec scaled(v);
    for (int i = 0; i < v; ++i) scaled[i] = logits[i] / sampler.temperature;
    kernels::softmax(scaled.data(), v);

    std::vector<int> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scaled[a] != scaled[b]) return scaled[a] > scaled[b];
        return a < b;
    });

    const int keep_k = std::min(sampler.top_k, v);
    // Smallest prefix of the top-k whose mass reaches top_p.
    double mass = 0.0;
    int keep = keep_k;
    for (int i = 0; i < keep_k; ++i) {
        mass += scaled[order[i]];
        if (mass >= sampler.top_p) {
            keep = i + 1;
            break;
        }
    }
    double total = 0.0;
    for (int i = 0; i < keep; ++i) total += scaled[order[i]];
    if (total <= 0.0) throw NumericError("sample_token: zero mass after filtering");

    const double u = rng.uniform() * total;
    double cum = 0.0;
    for (int i = 0; i < keep; ++i) {
        cum += scaled[order[i]];
        if (u < cum) return order[i];
    }
    return order[keep - 1];
}

}  // namespace ltx
