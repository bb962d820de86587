#include "ltx/autograd.hpp"

#include <memory>

#include "ltx/errors.hpp"

namespace ltx::ad {

namespace {
constexpr double kStudentProbFloor = 1e-12;
}

// push() may reallocate the node vector, so ops read shapes before pushing
// and re-index nodes_ afterwards instead of holding references across it.

Var Tape::push(int rows, int cols) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.val.assign(static_cast<size_t>(rows) * cols, 0.0);
    n.grad.assign(static_cast<size_t>(rows) * cols, 0.0);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(const Mat& m) {
    Var v = push(m.rows, m.cols);
    nodes_[v.idx].val = m.data;
    return v;
}

Var Tape::leaf(const Vec& vec) {
    Var v = push(static_cast<int>(vec.size()), 1);
    nodes_[v.idx].val = vec;
    return v;
}

Var Tape::row(Var matrix, int r) {
    const int c = nodes_[matrix.idx].cols;
    Var out = push(c, 1);
    const double* src = nodes_[matrix.idx].val.data() + static_cast<size_t>(r) * c;
    std::copy(src, src + c, nodes_[out.idx].val.begin());
    nodes_[out.idx].back = [matrix, out, r, c](Tape& t) {
        double* dm = t.nodes_[matrix.idx].grad.data() + static_cast<size_t>(r) * c;
        const double* g = t.nodes_[out.idx].grad.data();
        for (int i = 0; i < c; ++i) dm[i] += g[i];
    };
    return out;
}

Var Tape::matvec(Var w, Var x) {
    const int rows = nodes_[w.idx].rows;
    const int cols = nodes_[w.idx].cols;
    if (cols != nodes_[x.idx].rows || nodes_[x.idx].cols != 1) {
        throw InputError("autograd matvec: shape mismatch");
    }
    Var out = push(rows, 1);
    {
        const double* wv = nodes_[w.idx].val.data();
        const double* xv = nodes_[x.idx].val.data();
        double* yv = nodes_[out.idx].val.data();
        for (int r = 0; r < rows; ++r) {
            const double* wr = wv + static_cast<size_t>(r) * cols;
            double acc = 0.0;
            for (int c = 0; c < cols; ++c) acc += wr[c] * xv[c];
            yv[r] = acc;
        }
    }
    nodes_[out.idx].back = [w, x, out, rows, cols](Tape& t) {
        const double* g = t.nodes_[out.idx].grad.data();
        const double* xv = t.nodes_[x.idx].val.data();
        const double* wv = t.nodes_[w.idx].val.data();
        kernels::outer_acc(t.nodes_[w.idx].grad.data(), g, xv, rows, cols);
        double* dx = t.nodes_[x.idx].grad.data();
        for (int r = 0; r < rows; ++r) {
            const double gr = g[r];
            const double* wr = wv + static_cast<size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) dx[c] += wr[c] * gr;
        }
    };
    return out;
}

Var Tape::add(Var a, Var b) {
    const size_t n = nodes_[a.idx].val.size();
    if (n != nodes_[b.idx].val.size()) throw InputError("autograd add: shape mismatch");
    Var out = push(nodes_[a.idx].rows, nodes_[a.idx].cols);
    {
        const Vec& av = nodes_[a.idx].val;
        const Vec& bv = nodes_[b.idx].val;
        Vec& ov = nodes_[out.idx].val;
        for (size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
    }
    nodes_[out.idx].back = [a, b, out](Tape& t) {
        const Vec& g = t.nodes_[out.idx].grad;
        Vec& da = t.nodes_[a.idx].grad;
        Vec& db = t.nodes_[b.idx].grad;
        for (size_t i = 0; i < g.size(); ++i) {
            da[i] += g[i];
            db[i] += g[i];
        }
    };
    return out;
}

Var Tape::rms_norm(Var x, Var gain, double eps) {
    const int n = static_cast<int>(nodes_[x.idx].val.size());
    if (nodes_[gain.idx].val.size() != static_cast<size_t>(n)) {
        throw InputError("autograd rms_norm: gain shape mismatch");
    }
    Var out = push(n, 1);
    const double inv = kernels::rms_norm(nodes_[x.idx].val.data(), nodes_[gain.idx].val.data(), n,
                                         eps, nodes_[out.idx].val.data());
    nodes_[out.idx].back = [x, gain, out, n, inv](Tape& t) {
        kernels::rms_norm_backward(t.nodes_[x.idx].val.data(), t.nodes_[gain.idx].val.data(), n,
                                   inv, t.nodes_[out.idx].grad.data(),
                                   t.nodes_[x.idx].grad.data(), t.nodes_[gain.idx].grad.data());
    };
    return out;
}

Var Tape::rope(Var x, int num_heads, int head_dim, int pos, double theta) {
    const int rows = nodes_[x.idx].rows;
    const int cols = nodes_[x.idx].cols;
    Var out = push(rows, cols);
    nodes_[out.idx].val = nodes_[x.idx].val;
    kernels::rope(nodes_[out.idx].val.data(), num_heads, head_dim, pos, theta);
    nodes_[out.idx].back = [x, out, num_heads, head_dim, pos, theta](Tape& t) {
        Vec g = t.nodes_[out.idx].grad;
        kernels::rope_backward(g.data(), num_heads, head_dim, pos, theta);
        Vec& dx = t.nodes_[x.idx].grad;
        for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    };
    return out;
}

Var Tape::silu(Var x) {
    const int n = static_cast<int>(nodes_[x.idx].val.size());
    Var out = push(nodes_[x.idx].rows, nodes_[x.idx].cols);
    kernels::silu(nodes_[x.idx].val.data(), n, nodes_[out.idx].val.data());
    nodes_[out.idx].back = [x, out, n](Tape& t) {
        kernels::silu_backward(t.nodes_[x.idx].val.data(), n, t.nodes_[out.idx].grad.data(),
                               t.nodes_[x.idx].grad.data());
    };
    return out;
}

Var Tape::attend(Var q, const std::vector<Var>& keys, const std::vector<Var>& values,
                 int num_heads, int head_dim) {
    if (keys.empty() || keys.size() != values.size()) {
        throw InputError("autograd attend: empty or mismatched caches");
    }
    const int d = num_heads * head_dim;
    Var out = push(d, 1);
    auto weights = std::make_shared<std::vector<double>>();
    {
        std::vector<const double*> kp, vp;
        kp.reserve(keys.size());
        vp.reserve(values.size());
        for (Var k : keys) kp.push_back(nodes_[k.idx].val.data());
        for (Var v : values) vp.push_back(nodes_[v.idx].val.data());
        kernels::attend(nodes_[q.idx].val.data(), kp, vp, num_heads, head_dim,
                        nodes_[out.idx].val.data(), *weights);
    }
    std::vector<int> kidx, vidx;
    for (Var k : keys) kidx.push_back(k.idx);
    for (Var v : values) vidx.push_back(v.idx);
    nodes_[out.idx].back = [q, out, kidx, vidx, num_heads, head_dim, weights](Tape& t) {
        std::vector<const double*> kp2, vp2;
        std::vector<double*> dk, dv;
        for (int i : kidx) {
            kp2.push_back(t.nodes_[i].val.data());
            dk.push_back(t.nodes_[i].grad.data());
        }
        for (int i : vidx) {
            vp2.push_back(t.nodes_[i].val.data());
            dv.push_back(t.nodes_[i].grad.data());
        }
        kernels::attend_backward(t.nodes_[q.idx].val.data(), kp2, vp2, num_heads, head_dim,
                                 *weights, t.nodes_[out.idx].grad.data(),
                                 t.nodes_[q.idx].grad.data(), dk, dv);
    };
    return out;
}

Var Tape::ce_pick(Var logits, int target) {
    const int n = static_cast<int>(nodes_[logits.idx].val.size());
    if (target < 0 || target >= n) throw InputError("autograd ce_pick: target out of range");
    Var out = push(1, 1);
    nodes_[out.idx].val[0] = kernels::ce_pick(nodes_[logits.idx].val.data(), n, target);
    nodes_[out.idx].back = [logits, out, n, target](Tape& t) {
        kernels::ce_pick_backward(t.nodes_[logits.idx].val.data(), n, target,
                                  t.nodes_[out.idx].grad[0], t.nodes_[logits.idx].grad.data());
    };
    return out;
}

Var Tape::kl_topk(Var logits, std::vector<int> ids, std::vector<double> probs, double temperature,
                  long* underflow_counter) {
    const int n = static_cast<int>(nodes_[logits.idx].val.size());
    for (int id : ids) {
        if (id < 0 || id >= n) throw InputError("autograd kl_topk: id out of range");
    }
    Var out = push(1, 1);
    nodes_[out.idx].val[0] = kernels::kl_topk(nodes_[logits.idx].val.data(), n, ids, probs,
                                              temperature, kStudentProbFloor, underflow_counter);
    nodes_[out.idx].back = [logits, out, n, ids = std::move(ids), probs = std::move(probs),
                            temperature](Tape& t) {
        kernels::kl_topk_backward(t.nodes_[logits.idx].val.data(), n, ids, probs, temperature,
                                  kStudentProbFloor, t.nodes_[out.idx].grad[0],
                                  t.nodes_[logits.idx].grad.data());
    };
    return out;
}

Var Tape::hinge_forbidden(Var logits, std::vector<int> forbidden, std::vector<int> allowed) {
    if (allowed.empty()) throw InputError("autograd hinge: empty allowed set");
    const int n = static_cast<int>(nodes_[logits.idx].val.size());
    for (int id : forbidden) {
        if (id < 0 || id >= n) throw InputError("autograd hinge: forbidden id out of range");
    }
    for (int id : allowed) {
        if (id < 0 || id >= n) throw InputError("autograd hinge: allowed id out of range");
    }
    Var out = push(1, 1);
    nodes_[out.idx].val[0] =
        kernels::hinge_forbidden(nodes_[logits.idx].val.data(), forbidden, allowed);
    nodes_[out.idx].back = [logits, out, forbidden = std::move(forbidden),
                            allowed = std::move(allowed)](Tape& t) {
        kernels::hinge_forbidden_backward(t.nodes_[logits.idx].val.data(), forbidden, allowed,
                                          t.nodes_[out.idx].grad[0],
                                          t.nodes_[logits.idx].grad.data());
    };
    return out;
}

Var Tape::bce_logit(Var logits, int index, double target) {
    if (index < 0 || index >= static_cast<int>(nodes_[logits.idx].val.size())) {
        throw InputError("autograd bce_logit: index out of range");
    }
    Var out = push(1, 1);
    nodes_[out.idx].val[0] = kernels::bce_logit(nodes_[logits.idx].val[index], target);
    nodes_[out.idx].back = [logits, out, index, target](Tape& t) {
        t.nodes_[logits.idx].grad[index] +=
            t.nodes_[out.idx].grad[0] *
            kernels::bce_logit_grad(t.nodes_[logits.idx].val[index], target);
    };
    return out;
}

Var Tape::affine(const std::vector<Var>& scalars, const std::vector<double>& coeffs, double bias) {
    if (scalars.size() != coeffs.size()) throw InputError("autograd affine: size mismatch");
    Var out = push(1, 1);
    double acc = bias;
    for (size_t i = 0; i < scalars.size(); ++i) acc += coeffs[i] * nodes_[scalars[i].idx].val[0];
    nodes_[out.idx].val[0] = acc;
    std::vector<int> idxs;
    idxs.reserve(scalars.size());
    for (Var s : scalars) idxs.push_back(s.idx);
    nodes_[out.idx].back = [out, idxs, coeffs](Tape& t) {
        const double g = t.nodes_[out.idx].grad[0];
        for (size_t i = 0; i < idxs.size(); ++i) t.nodes_[idxs[i]].grad[0] += coeffs[i] * g;
    };
    return out;
}

void Tape::backward(Var root) {
    if (nodes_[root.idx].val.size() != 1) throw InputError("autograd backward: root not scalar");
    nodes_[root.idx].grad[0] = 1.0;
    for (int i = root.idx; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

}  // namespace ltx::ad
