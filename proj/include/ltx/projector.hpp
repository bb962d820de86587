#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ltx/model.hpp"

namespace ltx {

enum class ProjectorMode { analytic, learned };

// Hidden-state -> input-embedding map. Analytic mode is the fixed matrix
// pinv(output_projection) * input_embedding; learned mode is a two-layer
// residual MLP that starts as the identity (last affine zero-initialized).
struct LatentProjector {
    ProjectorMode mode = ProjectorMode::analytic;
    Mat matrix;  // d x d, analytic mode

    // learned mode: g(h) = h + w2 * silu(w1 h + b1) + b2
    Mat w1;  // d x d
    Mat b1;  // 1 x d
    Mat w2;  // d x d
    Mat b2;  // 1 x d

    std::vector<std::pair<std::string, Mat*>> named_tensors();
    std::vector<std::pair<std::string, const Mat*>> named_tensors() const;
};

// W_a = pinv(W_out) * W_in, pseudo-inverse by SVD with rcond = 1e-6.
// Applying the result to a hidden state yields an input-embedding-space
// vector: e = matrix * h.
LatentProjector build_analytic_projector(const ModelBundle& model, double rcond = 1e-6);

// Identity-start learned projector (w1/b1 seeded Gaussian, w2/b2 zero).
LatentProjector init_learned_projector(int hidden_dim, uint64_t seed);

Vec project(const LatentProjector& projector, const Vec& hidden);

// Read-only decode of a hidden state: full softmax of the output logits,
// argmax token (ties to the lowest id) and entropy in nats.
struct ProbeResult {
    Vec distribution;
    int argmax_token = 0;
    double entropy = 0.0;
};

ProbeResult probe(const ModelBundle& model, const Vec& hidden);

// Softmax/argmax/entropy of an already-computed logit vector.
ProbeResult probe_logits(const Vec& logits);

// One latent transition: project the hidden state, feed it as the next input,
// probe the new state. The probe is diagnostic only and never fed back; with
// compute_probe = false the returned probe is empty and everything else is
// unchanged.
struct LatentStepResult {
    Vec next_hidden;
    Vec logits;
    ProbeResult probe;
};

LatentStepResult latent_step(const ModelBundle& model, const LatentProjector& projector,
                             const Vec& hidden, LayerCache& cache, bool compute_probe = true);

}  // namespace ltx
