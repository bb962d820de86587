#include "ltx/train_example.hpp"

#include <cmath>

namespace ltx {

void TrainingExample::validate() const {
    const size_t n = token_ids.size();
    if (n == 0) throw DataError("example: empty token sequence");
    auto check_len = [&](const std::vector<uint8_t>& m, const char* name) {
        if (m.size() != n) throw DataError(std::string("example: ") + name + " length mismatch");
    };
    if (labels.size() != n) throw DataError("example: labels length mismatch");
    check_len(mask_latent_interior, "mask_latent_interior");
    check_len(mask_latent_all, "mask_latent_all");
    check_len(mask_cot_interior, "mask_cot_interior");
    check_len(mask_noncot_supervised, "mask_noncot_supervised");
    check_len(mask_kl_positions, "mask_kl_positions");
    check_len(halt_targets, "halt_targets");

    int interior = 0, halts = 0;
    for (size_t i = 0; i < n; ++i) {
        if (mask_latent_interior[i] && !mask_latent_all[i]) {
            throw DataError("example: latent interior not contained in latent_all");
        }
        if (mask_cot_interior[i] && mask_noncot_supervised[i]) {
            throw DataError("example: cot and non-cot masks overlap");
        }
        const bool supervised = mask_cot_interior[i] || mask_noncot_supervised[i];
        if (supervised != (labels[i] != kIgnoreLabel)) {
            throw DataError("example: labels disagree with supervision masks at position " +
                            std::to_string(i));
        }
        if (halt_targets[i]) {
            ++halts;
            if (!mask_latent_all[i]) throw DataError("example: halt target outside latent_all");
        }
        if (mask_latent_interior[i]) ++interior;
        if (supervised && i == 0) throw DataError("example: position 0 cannot be supervised");
        if (mask_kl_positions[i] && i == 0) throw DataError("example: position 0 in KL mask");
    }
    if (halts != 1) throw DataError("example: expected exactly one halt target");
    if (interior != n_latent_steps) {
        throw DataError("example: latent interior count " + std::to_string(interior) +
                        " != n_latent_steps " + std::to_string(n_latent_steps));
    }
}

void TeacherPosition::validate() const {
    if (ids.size() != probs.size()) throw DataError("teacher: ids/probs size mismatch");
    if (ids.empty()) throw DataError("teacher: empty top-k");
    double sum = tail_mass;
    std::vector<int> seen;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (probs[i] <= 0.0) throw DataError("teacher: nonpositive probability");
        sum += probs[i];
        for (int s : seen) {
            if (s == ids[i]) throw DataError("teacher: duplicate id");
        }
        seen.push_back(ids[i]);
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw DataError("teacher: mass does not sum to 1");
}

std::vector<double> TeacherPosition::renormalized() const {
    double sum = 0.0;
    for (double p : probs) sum += p;
    std::vector<double> out(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] / sum;
    return out;
}

}  // namespace ltx
