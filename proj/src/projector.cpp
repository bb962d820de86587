#include "ltx/projector.hpp"

#include <cmath>

#include "ltx/linalg.hpp"

namespace ltx {

std::vector<std::pair<std::string, Mat*>> LatentProjector::named_tensors() {
    if (mode == ProjectorMode::analytic) return {{"projector.matrix", &matrix}};
    return {{"projector.w1", &w1}, {"projector.b1", &b1}, {"projector.w2", &w2},
            {"projector.b2", &b2}};
}

std::vector<std::pair<std::string, const Mat*>> LatentProjector::named_tensors() const {
    std::vector<std::pair<std::string, const Mat*>> out;
    for (auto& [name, mat] : const_cast<LatentProjector*>(this)->named_tensors()) {
        out.emplace_back(name, mat);
    }
    return out;
}

LatentProjector build_analytic_projector(const ModelBundle& model, double rcond) {
    model.shape_audit();
    if (!all_finite(model.output_projection) || !all_finite(model.input_embedding)) {
        throw NumericError("build_analytic_projector: non-finite weights");
    }
    LatentProjector p;
    p.mode = ProjectorMode::analytic;
    p.matrix = linalg::matmul(linalg::pinv(model.output_projection, rcond), model.input_embedding);
    return p;
}

LatentProjector init_learned_projector(int hidden_dim, uint64_t seed) {
    CounterRng rng(derive_seed(seed, "projector-init"));
    LatentProjector p;
    p.mode = ProjectorMode::learned;
    p.w1 = Mat::gaussian(hidden_dim, hidden_dim, rng, 0.02);
    p.b1 = Mat(1, hidden_dim);
    p.w2 = Mat(hidden_dim, hidden_dim);  // zero: g(h) = h at init
    p.b2 = Mat(1, hidden_dim);
    return p;
}

Vec project(const LatentProjector& projector, const Vec& hidden) {
    const int d = projector.mode == ProjectorMode::analytic ? projector.matrix.rows
                                                            : projector.w1.rows;
    if (static_cast<int>(hidden.size()) != d) throw InputError("project: dimension mismatch");
    Vec out(d);
    if (projector.mode == ProjectorMode::analytic) {
        kernels::matvec(projector.matrix, hidden.data(), out.data());
        return out;
    }
    // Same kernel sequence as the autodiff path so both agree bit-for-bit.
    Vec z(d), act(d), y(d);
    kernels::matvec(projector.w1, hidden.data(), z.data());
    for (int i = 0; i < d; ++i) z[i] += projector.b1.at(0, i);
    kernels::silu(z.data(), d, act.data());
    kernels::matvec(projector.w2, act.data(), y.data());
    for (int i = 0; i < d; ++i) out[i] = hidden[i] + y[i] + projector.b2.at(0, i);
    return out;
}

ProbeResult probe_logits(const Vec& logits) {
    if (!all_finite(logits)) throw NumericError("probe: non-finite logits");
    ProbeResult r;
    r.distribution = logits;
    kernels::softmax(r.distribution.data(), static_cast<int>(r.distribution.size()));
    r.argmax_token = 0;
    for (size_t i = 1; i < r.distribution.size(); ++i) {
        if (r.distribution[i] > r.distribution[r.argmax_token]) {
            r.argmax_token = static_cast<int>(i);
        }
    }
    r.entropy = kernels::entropy(r.distribution.data(), static_cast<int>(r.distribution.size()));
    return r;
}

ProbeResult probe(const ModelBundle& model, const Vec& hidden) {
    if (!all_finite(hidden)) throw NumericError("probe: non-finite hidden state");
    return probe_logits(decode_logits(model, hidden));
}

LatentStepResult latent_step(const ModelBundle& model, const LatentProjector& projector,
                             const Vec& hidden, LayerCache& cache, bool compute_probe) {
    const Vec e = project(projector, hidden);
    StepOutput step = forward_step(model, e, cache);
    LatentStepResult r;
    r.next_hidden = std::move(step.hidden);
    r.logits = std::move(step.logits);
    if (compute_probe) r.probe = probe_logits(r.logits);
    return r;
}

}  // namespace ltx
