#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ltx/errors.hpp"

namespace ltx {

constexpr int kIgnoreLabel = -100;

// Tokenized two-part response with its latent budget, labels, and the five
// supervision masks. All sequences share the same length. Position i is
// supervised through the logits at position i-1 (next-token alignment,
// applied uniformly to CE, KL, and halting terms).
struct TrainingExample {
    std::vector<int> token_ids;
    std::vector<int> labels;                       // kIgnoreLabel on unsupervised positions
    std::vector<uint8_t> mask_latent_interior;     // placeholder positions
    std::vector<uint8_t> mask_latent_all;          // interior plus the latent_close position
    std::vector<uint8_t> mask_cot_interior;        // tokens strictly between think tags
    std::vector<uint8_t> mask_noncot_supervised;   // structural tags, answer, terminal
    std::vector<uint8_t> mask_kl_positions;        // teacher-matched positions
    std::vector<uint8_t> halt_targets;             // true exactly at the latent_close position
    int n_latent_steps = 0;

    size_t length() const { return token_ids.size(); }
    void validate() const;
};

// Cached teacher predictive distribution for one aligned position: top-k ids,
// their probabilities, and the residual tail mass.
struct TeacherPosition {
    std::vector<int> ids;
    std::vector<double> probs;
    double tail_mass = 0.0;

    void validate() const;
    // Top-k probabilities renormalized to sum to 1 (tail dropped).
    std::vector<double> renormalized() const;
};

// Teacher distributions keyed by *student* position (the corpus offset map
// already applied). Keys must lie inside the example's KL mask.
struct TeacherDistribution {
    std::map<int, TeacherPosition> by_student_position;
};

}  // namespace ltx
