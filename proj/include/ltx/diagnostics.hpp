#pragma once

#include <string>
#include <vector>

#include "ltx/generate.hpp"
#include "ltx/tensor.hpp"

namespace ltx {

// Linear-interpolation quantile on sorted data (h = (n-1)p convention).
double quantile_sorted(const std::vector<double>& sorted, double p);

struct ProfileBin {
    long count = 0;
    double mean = 0.0;  // NaN when the bin is empty
    double p25 = 0.0;
    double p75 = 0.0;
};

struct EntropyProfile {
    int bins = 0;
    std::vector<ProfileBin> latent;     // latent entropy over normalized progress
    std::vector<ProfileBin> explicit_;  // explicit entropy, within-sentence progress
    long skipped_traces = 0;            // traces with no latent steps
};

// Rescales each trace's latent step index to [0,1] and bins entropies;
// explicit-phase entropies (when logged) are normalized within sentences
// delimited by the given terminal-punctuation token ids.
EntropyProfile aggregate_entropy(const std::vector<GenerationTrace>& traces, int bins = 100,
                                 const std::vector<int>& sentence_end_ids = {});

std::string format_entropy_profile(const EntropyProfile& profile);

struct StepBoxRow {
    int step = 0;  // 1-based latent step
    long count = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double whisker_lo = 0.0;  // lowest sample >= q1 - 1.5 IQR
    double whisker_hi = 0.0;  // highest sample <= q3 + 1.5 IQR
    long outliers = 0;
};

// Boxplot statistics of latent entropy grouped by absolute step position,
// over the traces still active at each step.
std::vector<StepBoxRow> per_step_entropy_distribution(const std::vector<GenerationTrace>& traces);

std::string format_step_boxes(const std::vector<StepBoxRow>& rows);

struct TaggedTrajectory {
    std::vector<Vec> latent;
    std::vector<Vec> explicit_;
};

struct PcaPoint {
    int trajectory = 0;
    int step = 0;       // 0-based within its phase
    char phase = 'l';   // 'l' latent, 'e' explicit
    Vec coords;
};

struct PcaProjection {
    int k = 0;
    Vec explained_variance;  // ratios, descending; sums to <= 1
    Mat components;          // k x d, sign-fixed principal directions
    Vec mean;                // centering offset of the fitted pool
    std::vector<PcaPoint> points;
};

// Centers the pooled vectors (all latent plus the first `max_explicit`
// explicit states per trajectory), takes the top-k principal directions by
// SVD, and projects every vector. Each component's sign is fixed by making
// its largest-magnitude coordinate positive.
PcaProjection pca_project(const std::vector<TaggedTrajectory>& trajectories, int k = 6,
                          int max_explicit = 256);

PcaProjection pca_project_traces(const std::vector<GenerationTrace>& traces, int k = 6,
                                 int max_explicit = 256);

std::string format_pca_table(const PcaProjection& projection);

}  // namespace ltx
