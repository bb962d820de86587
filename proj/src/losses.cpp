#include "ltx/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ltx/kernels.hpp"

namespace ltx {

void TrainConfig::derive_token_sets(const ModelConfig& config, int latent_pad_id) {
    const SpecialTokens& sp = config.special_tokens;
    forbidden_tokens = {sp.latent_open, sp.think_open, sp.think_close, sp.end_of_message,
                        sp.end_of_text};
    std::sort(forbidden_tokens.begin(), forbidden_tokens.end());
    reserved_tokens = sp.all();
    if (latent_pad_id >= 0) reserved_tokens.push_back(latent_pad_id);
    std::sort(reserved_tokens.begin(), reserved_tokens.end());
}

std::vector<int> TrainConfig::allowed_tokens(int vocab_size) const {
    std::vector<int> allowed;
    allowed.reserve(vocab_size);
    for (int v = 0; v < vocab_size; ++v) {
        if (!std::binary_search(reserved_tokens.begin(), reserved_tokens.end(), v)) {
            allowed.push_back(v);
        }
    }
    if (allowed.empty()) throw ConfigError("train: no allowed non-structural tokens");
    return allowed;
}

CeParts loss_ce(const Mat& logits, const TrainingExample& example, double lambda_cot) {
    example.validate();
    if (logits.rows != static_cast<int>(example.length())) {
        throw InputError("loss_ce: logits/example length mismatch");
    }
    double noncot = 0.0, cot = 0.0;
    int n_noncot = 0, n_cot = 0;
    for (size_t i = 1; i < example.length(); ++i) {
        const bool in_noncot = example.mask_noncot_supervised[i];
        const bool in_cot = example.mask_cot_interior[i];
        if (!in_noncot && !in_cot) continue;
        if (example.labels[i] < 0 || example.labels[i] >= logits.cols) {
            throw DataError("loss_ce: label " + std::to_string(example.labels[i]) +
                            " outside the vocabulary at position " + std::to_string(i));
        }
        const double nll = kernels::ce_pick(logits.row(static_cast<int>(i) - 1), logits.cols,
                                            example.labels[i]);
        if (in_noncot) {
            noncot += nll;
            ++n_noncot;
        } else {
            cot += nll;
            ++n_cot;
        }
    }
    if (n_noncot == 0) {
        throw DataError("loss_ce: degenerate example with empty non-CoT supervision");
    }
    CeParts parts;
    parts.ce_noncot = noncot / n_noncot;
    parts.ce_cot = n_cot > 0 ? cot / n_cot : 0.0;
    parts.ce_total = parts.ce_noncot + lambda_cot * parts.ce_cot;
    return parts;
}

double loss_kl(const Mat& logits, const TeacherDistribution& teacher,
               const TrainingExample& example, double temperature, long* underflow_counter) {
    if (logits.rows != static_cast<int>(example.length())) {
        throw InputError("loss_kl: logits/example length mismatch");
    }
    int n_kl = 0;
    for (size_t i = 0; i < example.length(); ++i) n_kl += example.mask_kl_positions[i] ? 1 : 0;
    if (n_kl == 0) return 0.0;
    double sum = 0.0;
    for (const auto& [pos, tp] : teacher.by_student_position) {
        if (pos <= 0 || pos >= static_cast<int>(example.length()) ||
            !example.mask_kl_positions[pos]) {
            throw DataError("loss_kl: teacher position " + std::to_string(pos) +
                            " outside the KL mask");
        }
        for (int id : tp.ids) {
            if (id < 0 || id >= logits.cols) {
                throw DataError("loss_kl: teacher token id " + std::to_string(id) +
                                " outside the vocabulary");
            }
        }
        sum += kernels::kl_topk(logits.row(pos - 1), logits.cols, tp.ids, tp.renormalized(),
                                temperature, 1e-12, underflow_counter);
    }
    return sum / n_kl;
}

double loss_halt(const Mat& logits, const TrainingExample& example,
                 const std::vector<int>& forbidden, const std::vector<int>& allowed,
                 int latent_close_id) {
    if (logits.rows != static_cast<int>(example.length())) {
        throw InputError("loss_halt: logits/example length mismatch");
    }
    for (int f : forbidden) {
        if (f == latent_close_id) throw ConfigError("loss_halt: latent_close cannot be forbidden");
        if (f < 0 || f >= logits.cols) throw ConfigError("loss_halt: forbidden id out of range");
    }
    for (int a : allowed) {
        if (a < 0 || a >= logits.cols) throw ConfigError("loss_halt: allowed id out of range");
    }
    if (latent_close_id < 0 || latent_close_id >= logits.cols) {
        throw ConfigError("loss_halt: latent_close id out of range");
    }
    double hinge = 0.0, bce = 0.0;
    int n_int = 0, n_all = 0;
    for (size_t i = 1; i < example.length(); ++i) {
        const double* z = logits.row(static_cast<int>(i) - 1);
        if (example.mask_latent_interior[i]) {
            hinge += kernels::hinge_forbidden(z, forbidden, allowed);
            ++n_int;
        }
        if (example.mask_latent_all[i]) {
            bce += kernels::bce_logit(z[latent_close_id], example.halt_targets[i] ? 1.0 : 0.0);
            ++n_all;
        }
    }
    const double term1 = n_int > 0 ? hinge / n_int : 0.0;
    const double term2 = n_all > 0 ? bce / n_all : 0.0;
    return term1 + term2;
}

double gate_alpha(double ema_ce, double ce_now, double epsilon) {
    const double a = ema_ce / (ce_now + epsilon);
    return std::clamp(a, 0.0, 1.0);
}

LossReport total_loss(const LossParts& parts, const TrainConfig& config, EmaState& ema) {
    if (!ema.initialized) {
        ema.value = parts.ce.ce_total;
        ema.initialized = true;
    }
    LossReport r;
    r.ce_noncot = parts.ce.ce_noncot;
    r.ce_cot = parts.ce.ce_cot;
    r.ce_total = parts.ce.ce_total;
    r.kl = parts.kl;
    r.halt_raw = parts.halt_raw;
    r.gate_alpha = gate_alpha(ema.value, r.ce_total, config.gate_epsilon);
    r.halt_effective = r.gate_alpha * config.lambda_halt_base * r.halt_raw;
    r.total = r.ce_total + config.lambda_kl * r.kl + r.halt_effective;
    ema.value = config.ema_decay * ema.value + (1.0 - config.ema_decay) * r.ce_total;
    r.ema_ce = ema.value;
    return r;
}

}  // namespace ltx
