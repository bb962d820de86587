#pragma once

#include <vector>

#include "ltx/model.hpp"
#include "ltx/train_example.hpp"

namespace ltx {

struct TrainConfig {
    double lambda_cot = 0.5;
    double lambda_kl = 0.25;
    double kl_temperature = 1.0;
    double lambda_halt_base = 0.025;
    double ema_decay = 0.99;
    double gate_epsilon = 1e-8;

    double lr_peak = 1e-7;
    double lr_floor = 1e-8;
    int warmup_steps = 0;
    int total_steps = 0;  // 0: constant peak rate
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    double grad_clip_norm = 1.0;
    int batch_size = 4;  // micro-batch 1 with this many accumulation steps

    // Structural tokens penalized inside the latent segment (everything
    // structural except latent_close, which is the legitimate exit).
    std::vector<int> forbidden_tokens;
    // Reserved ids excluded from the "largest allowed logit" baseline.
    std::vector<int> reserved_tokens;

    void derive_token_sets(const ModelConfig& config, int latent_pad_id = -1);
    std::vector<int> allowed_tokens(int vocab_size) const;
};

struct LossReport {
    double ce_noncot = 0.0;
    double ce_cot = 0.0;
    double ce_total = 0.0;
    double kl = 0.0;
    double halt_raw = 0.0;
    double gate_alpha = 0.0;
    double halt_effective = 0.0;
    double total = 0.0;
    double ema_ce = 0.0;
};

struct CeParts {
    double ce_noncot = 0.0;
    double ce_cot = 0.0;
    double ce_total = 0.0;
};

// Split cross-entropy: per-set means with next-token alignment (the logit
// row at i-1 scores the token at i). `logits` holds one row per position.
CeParts loss_ce(const Mat& logits, const TrainingExample& example, double lambda_cot);

// Mean over KL positions of KL(teacher_topk || student) with the stored
// top-k renormalized and the tail dropped. No temperature-squared factor.
double loss_kl(const Mat& logits, const TeacherDistribution& teacher,
               const TrainingExample& example, double temperature,
               long* underflow_counter = nullptr);

// Hinge over forbidden structural logits at latent-interior positions plus
// binary cross-entropy driving the latent_close logit to fire exactly at the
// boundary.
double loss_halt(const Mat& logits, const TrainingExample& example,
                 const std::vector<int>& forbidden, const std::vector<int>& allowed,
                 int latent_close_id);

// clip(ema / (ce + epsilon), 0, 1)
double gate_alpha(double ema_ce, double ce_now, double epsilon);

struct EmaState {
    bool initialized = false;
    double value = 0.0;
};

struct LossParts {
    CeParts ce;
    double kl = 0.0;
    double halt_raw = 0.0;
};

// Combine parts into the gated total and advance the CE moving average
// (initialized to the first batch's value, updated after gating).
LossReport total_loss(const LossParts& parts, const TrainConfig& config, EmaState& ema);

}  // namespace ltx
