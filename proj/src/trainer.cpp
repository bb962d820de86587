#include "ltx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ltx {

namespace {

// Registers every model (and learned-projector) tensor as a tape leaf and
// replays the forward_step kernel sequence position by position, so the
// resulting values match plain decoding bit-for-bit.
struct GraphBuilder {
    ad::Tape& tape;
    const ModelBundle& model;
    const LatentProjector& projector;
    std::map<std::string, ad::Var> params;
    std::map<std::string, std::pair<int, int>> shapes;

    struct LayerVars {
        ad::Var attn_gain, wq, wk, wv, wo, ffn_gain, w1, w2;
        std::vector<ad::Var> keys, values;
    };
    std::vector<LayerVars> layers;
    ad::Var embed_w, output_w, final_gain;
    ad::Var proj_matrix, proj_w1, proj_b1, proj_w2, proj_b2;

    GraphBuilder(ad::Tape& t, const ModelBundle& m, const LatentProjector& p)
        : tape(t), model(m), projector(p) {
        for (const auto& [name, mat] : model.named_tensors()) {
            params[name] = tape.leaf(*mat);
            shapes[name] = {mat->rows, mat->cols};
        }
        embed_w = params.at("embed.weight");
        output_w = params.at("output.weight");
        final_gain = params.at("final_norm.gain");
        layers.resize(model.layers.size());
        for (size_t i = 0; i < model.layers.size(); ++i) {
            const std::string pfx = "layer." + std::to_string(i) + ".";
            layers[i].attn_gain = params.at(pfx + "attn_norm.gain");
            layers[i].wq = params.at(pfx + "attn.wq");
            layers[i].wk = params.at(pfx + "attn.wk");
            layers[i].wv = params.at(pfx + "attn.wv");
            layers[i].wo = params.at(pfx + "attn.wo");
            layers[i].ffn_gain = params.at(pfx + "ffn_norm.gain");
            layers[i].w1 = params.at(pfx + "ffn.w1");
            layers[i].w2 = params.at(pfx + "ffn.w2");
        }
        if (projector.mode == ProjectorMode::learned) {
            for (const auto& [name, mat] : projector.named_tensors()) {
                params[name] = tape.leaf(*mat);
                shapes[name] = {mat->rows, mat->cols};
            }
            proj_w1 = params.at("projector.w1");
            proj_b1 = params.at("projector.b1");
            proj_w2 = params.at("projector.w2");
            proj_b2 = params.at("projector.b2");
        } else {
            proj_matrix = tape.leaf(projector.matrix);  // constant, not trained
        }
    }

    ad::Var project(ad::Var hidden) {
        if (projector.mode == ProjectorMode::analytic) return tape.matvec(proj_matrix, hidden);
        ad::Var z = tape.add(tape.matvec(proj_w1, hidden), proj_b1);
        ad::Var act = tape.silu(z);
        ad::Var y = tape.matvec(proj_w2, act);
        return tape.add(tape.add(hidden, y), proj_b2);
    }

    // One decoder step at position `pos`; returns the post-norm hidden state.
    ad::Var step(ad::Var input, int pos) {
        const ModelConfig& cfg = model.config;
        const int heads = cfg.num_heads;
        const int hd = cfg.head_dim();
        ad::Var x = input;
        for (auto& l : layers) {
            ad::Var normed = tape.rms_norm(x, l.attn_gain, cfg.norm_eps);
            ad::Var q = tape.rope(tape.matvec(l.wq, normed), heads, hd, pos, cfg.rope_theta);
            ad::Var k = tape.rope(tape.matvec(l.wk, normed), heads, hd, pos, cfg.rope_theta);
            ad::Var v = tape.matvec(l.wv, normed);
            l.keys.push_back(k);
            l.values.push_back(v);
            ad::Var ctx = tape.attend(q, l.keys, l.values, heads, hd);
            x = tape.add(x, tape.matvec(l.wo, ctx));
            ad::Var normed2 = tape.rms_norm(x, l.ffn_gain, cfg.norm_eps);
            ad::Var act = tape.silu(tape.matvec(l.w1, normed2));
            x = tape.add(x, tape.matvec(l.w2, act));
        }
        return tape.rms_norm(x, final_gain, cfg.norm_eps);
    }

    ad::Var logits(ad::Var hidden) { return tape.matvec(output_w, hidden); }

    // Full latent teacher-forcing pass; returns per-position logits vars.
    std::vector<ad::Var> forward(const TrainingExample& example) {
        const int n = static_cast<int>(example.length());
        if (n > model.config.max_seq_len) {
            throw CapacityError("latent_forward: sequence exceeds max_seq_len");
        }
        std::vector<ad::Var> logit_vars(n);
        ad::Var prev_hidden;
        for (int p = 0; p < n; ++p) {
            ad::Var input;
            if (example.mask_latent_interior[p]) {
                input = project(prev_hidden);
            } else {
                const int tok = example.token_ids[p];
                if (tok < 0 || tok >= model.config.vocab_size) {
                    throw InputError("latent_forward: token id out of range");
                }
                input = tape.row(embed_w, tok);
            }
            prev_hidden = step(input, p);
            logit_vars[p] = logits(prev_hidden);
        }
        return logit_vars;
    }
};

}  // namespace

Mat latent_forward(const ModelBundle& model, const LatentProjector& projector,
                   const TrainingExample& example) {
    example.validate();
    ad::Tape tape;
    GraphBuilder gb(tape, model, projector);
    const auto logit_vars = gb.forward(example);
    Mat out(static_cast<int>(logit_vars.size()), model.config.vocab_size);
    for (size_t p = 0; p < logit_vars.size(); ++p) {
        const Vec& z = tape.val(logit_vars[p]);
        std::copy(z.begin(), z.end(), out.row(static_cast<int>(p)));
    }
    return out;
}

LatentLossGraph::LatentLossGraph(const ModelBundle& model, const LatentProjector& projector,
                                 const TrainingExample& example, const TeacherDistribution* teacher,
                                 const TrainConfig& config, long* kl_underflow_counter) {
    example.validate();
    GraphBuilder gb(tape_, model, projector);
    const auto logit_vars = gb.forward(example);
    params_ = std::move(gb.params);
    shapes_ = std::move(gb.shapes);

    const int n = static_cast<int>(example.length());
    std::vector<ad::Var> noncot_picks, cot_picks;
    for (int i = 1; i < n; ++i) {
        if (example.mask_noncot_supervised[i]) {
            noncot_picks.push_back(tape_.ce_pick(logit_vars[i - 1], example.labels[i]));
        } else if (example.mask_cot_interior[i]) {
            cot_picks.push_back(tape_.ce_pick(logit_vars[i - 1], example.labels[i]));
        }
    }
    if (noncot_picks.empty()) {
        throw DataError("train: degenerate example with empty non-CoT supervision");
    }
    ce_noncot_ = tape_.affine(noncot_picks,
                              std::vector<double>(noncot_picks.size(), 1.0 / noncot_picks.size()));
    if (!cot_picks.empty()) {
        ce_cot_ = tape_.affine(cot_picks,
                               std::vector<double>(cot_picks.size(), 1.0 / cot_picks.size()));
        ce_total_ = tape_.affine({ce_noncot_, ce_cot_}, {1.0, config.lambda_cot});
    } else {
        ce_cot_ = tape_.affine({}, {});
        ce_total_ = tape_.affine({ce_noncot_}, {1.0});
    }

    if (teacher && !teacher->by_student_position.empty()) {
        int n_kl = 0;
        for (int i = 0; i < n; ++i) n_kl += example.mask_kl_positions[i] ? 1 : 0;
        std::vector<ad::Var> kl_terms;
        for (const auto& [pos, tp] : teacher->by_student_position) {
            if (pos <= 0 || pos >= n || !example.mask_kl_positions[pos]) {
                throw DataError("train: teacher position " + std::to_string(pos) +
                                " outside the KL mask");
            }
            kl_terms.push_back(tape_.kl_topk(logit_vars[pos - 1], tp.ids, tp.renormalized(),
                                             config.kl_temperature, kl_underflow_counter));
        }
        kl_ = tape_.affine(kl_terms, std::vector<double>(kl_terms.size(), 1.0 / n_kl));
    } else {
        kl_ = tape_.affine({}, {});
    }

    const std::vector<int> allowed = config.allowed_tokens(model.config.vocab_size);
    const int close_id = model.config.special_tokens.latent_close;
    std::vector<ad::Var> hinge_terms, bce_terms;
    for (int i = 1; i < n; ++i) {
        if (example.mask_latent_interior[i]) {
            hinge_terms.push_back(
                tape_.hinge_forbidden(logit_vars[i - 1], config.forbidden_tokens, allowed));
        }
        if (example.mask_latent_all[i]) {
            bce_terms.push_back(
                tape_.bce_logit(logit_vars[i - 1], close_id, example.halt_targets[i] ? 1.0 : 0.0));
        }
    }
    std::vector<ad::Var> halt_parts;
    std::vector<double> halt_coeffs;
    for (ad::Var h : hinge_terms) {
        halt_parts.push_back(h);
        halt_coeffs.push_back(1.0 / hinge_terms.size());
    }
    for (ad::Var b : bce_terms) {
        halt_parts.push_back(b);
        halt_coeffs.push_back(1.0 / bce_terms.size());
    }
    halt_ = tape_.affine(halt_parts, halt_coeffs);
}

LossParts LatentLossGraph::parts() const {
    LossParts p;
    p.ce.ce_noncot = tape_.scalar(ce_noncot_);
    p.ce.ce_cot = tape_.scalar(ce_cot_);
    p.ce.ce_total = tape_.scalar(ce_total_);
    p.kl = tape_.scalar(kl_);
    p.halt_raw = tape_.scalar(halt_);
    return p;
}

bool LatentLossGraph::finite() const {
    const LossParts p = parts();
    return std::isfinite(p.ce.ce_total) && std::isfinite(p.ce.ce_noncot) &&
           std::isfinite(p.ce.ce_cot) && std::isfinite(p.kl) && std::isfinite(p.halt_raw);
}

void LatentLossGraph::run_backward(double lambda_kl, double halt_coeff) {
    ad::Var root = tape_.affine({ce_total_, kl_, halt_}, {1.0, lambda_kl, halt_coeff});
    tape_.backward(root);
}

Mat LatentLossGraph::gradient(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InputError("gradient: unknown tensor " + name);
    const auto [rows, cols] = shapes_.at(name);
    Mat g(rows, cols);
    g.data = const_cast<ad::Tape&>(tape_).grad(it->second);
    return g;
}

std::vector<std::string> LatentLossGraph::param_names() const {
    std::vector<std::string> names;
    for (const auto& [name, var] : params_) names.push_back(name);
    return names;
}

double learning_rate(const TrainConfig& config, long step) {
    if (step <= config.warmup_steps && config.warmup_steps > 0) {
        return config.lr_peak * static_cast<double>(step) / config.warmup_steps;
    }
    if (config.total_steps <= 0) return config.lr_peak;
    const long span = std::max<long>(1, config.total_steps - config.warmup_steps);
    const double progress =
        std::clamp(static_cast<double>(step - config.warmup_steps) / span, 0.0, 1.0);
    return config.lr_floor +
           0.5 * (config.lr_peak - config.lr_floor) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

Trainer::Trainer(ModelBundle model, LatentProjector projector, TrainConfig config)
    : model_(std::move(model)), projector_(std::move(projector)), config_(std::move(config)) {
    model_.shape_audit();
    if (config_.forbidden_tokens.empty() && config_.reserved_tokens.empty()) {
        config_.derive_token_sets(model_.config);
    }
    for (auto& [name, mat] : trainable()) {
        moment1_.emplace(name, Mat(mat->rows, mat->cols));
        moment2_.emplace(name, Mat(mat->rows, mat->cols));
    }
}

std::vector<std::pair<std::string, Mat*>> Trainer::trainable() {
    auto out = model_.named_tensors();
    if (projector_.mode == ProjectorMode::learned) {
        for (auto& [name, mat] : projector_.named_tensors()) out.emplace_back(name, mat);
    }
    return out;
}

LossReport Trainer::step(const std::vector<const TrainingExample*>& batch,
                         const std::vector<const TeacherDistribution*>& teachers) {
    if (batch.empty()) throw InputError("train_step: empty batch");
    if (!teachers.empty() && teachers.size() != batch.size()) {
        throw InputError("train_step: teacher list size mismatch");
    }

    std::vector<std::unique_ptr<LatentLossGraph>> graphs;
    LossParts mean;
    for (size_t i = 0; i < batch.size(); ++i) {
        const TeacherDistribution* teacher = teachers.empty() ? nullptr : teachers[i];
        auto g = std::make_unique<LatentLossGraph>(model_, projector_, *batch[i], teacher, config_,
                                                   &kl_underflows_);
        if (!g->finite()) {
            throw NumericError("train_step: non-finite loss at step " + std::to_string(step_ + 1) +
                               ", example index " + std::to_string(i));
        }
        const LossParts p = g->parts();
        mean.ce.ce_noncot += p.ce.ce_noncot;
        mean.ce.ce_cot += p.ce.ce_cot;
        mean.ce.ce_total += p.ce.ce_total;
        mean.kl += p.kl;
        mean.halt_raw += p.halt_raw;
        graphs.push_back(std::move(g));
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    mean.ce.ce_noncot *= inv_b;
    mean.ce.ce_cot *= inv_b;
    mean.ce.ce_total *= inv_b;
    mean.kl *= inv_b;
    mean.halt_raw *= inv_b;

    // The gate is computed from the batch CE before any backward pass and is
    // a constant in the gradient (the halt term is modulated, not the gate).
    LossReport report = total_loss(mean, config_, ema_);
    const double halt_coeff = report.gate_alpha * config_.lambda_halt_base;

    std::map<std::string, Mat> grads;
    for (auto& [name, mat] : trainable()) grads.emplace(name, Mat(mat->rows, mat->cols));
    for (auto& g : graphs) {
        g->run_backward(config_.lambda_kl, halt_coeff);
        for (auto& [name, acc] : grads) {
            const Mat eg = g->gradient(name);
            for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += eg.data[i] * inv_b;
        }
    }

    double sq_norm = 0.0;
    for (const auto& [name, g] : grads) {
        for (double x : g.data) sq_norm += x * x;
    }
    const double norm = std::sqrt(sq_norm);
    const double clip_scale =
        (config_.grad_clip_norm > 0.0 && norm > config_.grad_clip_norm)
            ? config_.grad_clip_norm / norm
            : 1.0;

    const long t = step_ + 1;
    const double lr = learning_rate(config_, t);
    const double bc1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(t));
    for (auto& [name, mat] : trainable()) {
        Mat& g = grads.at(name);
        Mat& m = moment1_.at(name);
        Mat& v = moment2_.at(name);
        for (size_t i = 0; i < mat->data.size(); ++i) {
            const double gi = g.data[i] * clip_scale;
            m.data[i] = config_.adam_beta1 * m.data[i] + (1.0 - config_.adam_beta1) * gi;
            v.data[i] = config_.adam_beta2 * v.data[i] + (1.0 - config_.adam_beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            mat->data[i] -= lr * (mhat / (std::sqrt(vhat) + config_.adam_eps) +
                                  config_.weight_decay * mat->data[i]);
        }
    }
    step_ = t;
    return report;
}

void Trainer::export_state(Checkpoint& ckpt) const {
    ckpt.meta["trainer.step"] = std::to_string(step_);
    ckpt.meta["trainer.ema_initialized"] = ema_.initialized ? "1" : "0";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ema_.value);
    ckpt.meta["trainer.ema_value"] = buf;
    ckpt.meta["trainer.kl_underflows"] = std::to_string(kl_underflows_);
    for (const auto& [name, m] : moment1_) ckpt.tensors.emplace("opt.m." + name, m);
    for (const auto& [name, v] : moment2_) ckpt.tensors.emplace("opt.v." + name, v);
}

void Trainer::import_state(const Checkpoint& ckpt) {
    auto meta = [&](const std::string& key) -> const std::string& {
        auto it = ckpt.meta.find(key);
        if (it == ckpt.meta.end()) throw DataError("resume: missing metadata " + key);
        return it->second;
    };
    step_ = std::stol(meta("trainer.step"));
    ema_.initialized = meta("trainer.ema_initialized") == "1";
    ema_.value = std::stod(meta("trainer.ema_value"));
    kl_underflows_ = std::stol(meta("trainer.kl_underflows"));
    for (auto& [name, m] : moment1_) {
        auto it = ckpt.tensors.find("opt.m." + name);
        if (it == ckpt.tensors.end()) throw DataError("resume: missing tensor opt.m." + name);
        m = it->second;
    }
    for (auto& [name, v] : moment2_) {
        auto it = ckpt.tensors.find("opt.v." + name);
        if (it == ckpt.tensors.end()) throw DataError("resume: missing tensor opt.v." + name);
        v = it->second;
    }
}

std::vector<TeacherPosition> precompute_teacher(const ModelBundle& teacher,
                                                const std::vector<int>& reference_tokens,
                                                int continuation_boundary, int k) {
    if (reference_tokens.empty()) throw InputError("precompute_teacher: empty reference");
    if (continuation_boundary < 1 ||
        continuation_boundary >= static_cast<int>(reference_tokens.size())) {
        throw InputError("precompute_teacher: continuation boundary out of range");
    }
    if (k < 1) throw InputError("precompute_teacher: k must be >= 1");
    const int v = teacher.config.vocab_size;
    const int kk = std::min(k, v);

    LayerCache cache = LayerCache::empty(teacher.config);
    std::vector<Vec> embeddings;
    embeddings.reserve(reference_tokens.size());
    for (int t : reference_tokens) embeddings.push_back(embed(teacher, t));
    const auto outs = forward_prefix(teacher, embeddings, cache);

    std::vector<TeacherPosition> positions;
    for (size_t j = continuation_boundary; j < reference_tokens.size(); ++j) {
        Vec dist = outs[j - 1].logits;
        kernels::softmax(dist.data(), v);
        std::vector<int> order(v);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (dist[a] != dist[b]) return dist[a] > dist[b];
            return a < b;
        });
        TeacherPosition tp;
        double mass = 0.0;
        for (int i = 0; i < kk; ++i) {
            tp.ids.push_back(order[i]);
            tp.probs.push_back(dist[order[i]]);
            mass += dist[order[i]];
        }
        tp.tail_mass = std::max(0.0, 1.0 - mass);
        positions.push_back(std::move(tp));
    }
    return positions;
}

TeacherDistribution teacher_for_example(const std::vector<TeacherPosition>& reference_positions,
                                        const std::vector<std::pair<int, int>>& offset_map) {
    TeacherDistribution out;
    for (const auto& [student_pos, teacher_pos] : offset_map) {
        if (teacher_pos < 0 || teacher_pos >= static_cast<int>(reference_positions.size())) {
            throw DataError("teacher alignment: continuation position " +
                            std::to_string(teacher_pos) + " outside the reference");
        }
        if (!out.by_student_position.emplace(student_pos, reference_positions[teacher_pos]).second) {
            throw DataError("teacher alignment: duplicate student position");
        }
    }
    return out;
}

}  // namespace ltx
