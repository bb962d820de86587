#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ltx/autograd.hpp"
#include "ltx/checkpoint.hpp"
#include "ltx/losses.hpp"
#include "ltx/model.hpp"
#include "ltx/projector.hpp"
#include "ltx/train_example.hpp"

namespace ltx {

// Latent teacher-forcing forward pass: positions outside the latent interior
// use ordinary token embeddings, each interior position feeds the projector
// output of the preceding final-layer state, and the whole sequence is
// processed with the cache so gradients flow through the recurrence.
// Returns one logit row per position.
Mat latent_forward(const ModelBundle& model, const LatentProjector& projector,
                   const TrainingExample& example);

// One example's differentiable forward + losses. Keeps the tape alive so the
// batch gate can be computed from all part values before any backward runs.
class LatentLossGraph {
public:
    LatentLossGraph(const ModelBundle& model, const LatentProjector& projector,
                    const TrainingExample& example, const TeacherDistribution* teacher,
                    const TrainConfig& config, long* kl_underflow_counter = nullptr);

    LossParts parts() const;
    bool finite() const;

    // Backward of ce_total + lambda_kl * kl + halt_coeff * halt_raw.
    void run_backward(double lambda_kl, double halt_coeff);

    // Gradient of a named tensor after run_backward (zeros if untouched).
    Mat gradient(const std::string& name) const;
    std::vector<std::string> param_names() const;

private:
    ad::Tape tape_;
    std::map<std::string, ad::Var> params_;
    std::map<std::string, std::pair<int, int>> shapes_;
    ad::Var ce_noncot_, ce_cot_, ce_total_, kl_, halt_;
};

// Cosine schedule with optional linear warmup; step is 1-based. total_steps
// of zero means a constant peak rate.
double learning_rate(const TrainConfig& config, long step);

// AdamW training stream owning the model and projector parameters.
class Trainer {
public:
    Trainer(ModelBundle model, LatentProjector projector, TrainConfig config);

    // One optimizer step over a batch (micro-batch 1 with accumulation:
    // gradients are averaged over the batch). `teachers` is empty or aligned
    // with `batch`; null entries mean no KL supervision for that example.
    LossReport step(const std::vector<const TrainingExample*>& batch,
                    const std::vector<const TeacherDistribution*>& teachers = {});

    const ModelBundle& model() const { return model_; }
    const LatentProjector& projector() const { return projector_; }
    const TrainConfig& config() const { return config_; }
    long step_count() const { return step_; }
    const EmaState& ema() const { return ema_; }
    long kl_underflow_count() const { return kl_underflows_; }

    void export_state(Checkpoint& ckpt) const;
    void import_state(const Checkpoint& ckpt);

private:
    ModelBundle model_;
    LatentProjector projector_;
    TrainConfig config_;
    std::map<std::string, Mat> moment1_, moment2_;
    long step_ = 0;
    EmaState ema_;
    long kl_underflows_ = 0;

    std::vector<std::pair<std::string, Mat*>> trainable();
};

// Teacher-forced top-k predictive distributions over the continuation part of
// a reference conversation. Position j of the result corresponds to reference
// token continuation_boundary + j.
std::vector<TeacherPosition> precompute_teacher(const ModelBundle& teacher,
                                                const std::vector<int>& reference_tokens,
                                                int continuation_boundary, int k);

// Rekey sidecar entries (teacher continuation positions) to student positions
// through the rendered example's offset map.
TeacherDistribution teacher_for_example(const std::vector<TeacherPosition>& reference_positions,
                                        const std::vector<std::pair<int, int>>& offset_map);

}  // namespace ltx
