#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ltx/tensor.hpp"

// Shared math kernels. Both the cached inference path and the autodiff
// training path call these exact routines, so the two paths produce
// bit-identical values for the same operand sequence.
namespace ltx::kernels {

// y = W x
inline void matvec(const Mat& w, const double* x, double* y) {
    for (int r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        double acc = 0.0;
        for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// dx += W^T g
inline void matvec_transpose_acc(const Mat& w, const double* g, double* dx) {
    for (int r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        const double gr = g[r];
        for (int c = 0; c < w.cols; ++c) dx[c] += wr[c] * gr;
    }
}

// dW += g x^T
inline void outer_acc(double* dw, const double* g, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* dwr = dw + static_cast<size_t>(r) * cols;
        const double gr = g[r];
        for (int c = 0; c < cols; ++c) dwr[c] += gr * x[c];
    }
}

// y = x / rms(x) * gain, rms(x) = sqrt(mean(x^2) + eps). Returns 1/rms.
inline double rms_norm(const double* x, const double* gain, int n, double eps, double* y) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ss / n + eps);
    for (int i = 0; i < n; ++i) y[i] = x[i] * inv * gain[i];
    return inv;
}

// Gradient of rms_norm w.r.t. x and gain. `inv` is the saved 1/rms.
inline void rms_norm_backward(const double* x, const double* gain, int n, double inv,
                              const double* gy, double* dx, double* dgain) {
    // y_i = x_i * inv * gain_i, inv = (mean(x^2) + eps)^{-1/2}
    // d inv / d x_j = -inv^3 * x_j / n
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += gy[i] * gain[i] * x[i];
    const double k = dot * inv * inv * inv / n;
    for (int i = 0; i < n; ++i) {
        dx[i] += gy[i] * gain[i] * inv - k * x[i];
        dgain[i] += gy[i] * x[i] * inv;
    }
}

// Rotary position encoding applied per head over channel pairs (2i, 2i+1).
// Odd trailing channel (if head_dim is odd) is left unrotated.
inline void rope(double* x, int num_heads, int head_dim, int pos, double theta) {
    for (int h = 0; h < num_heads; ++h) {
        double* xh = x + h * head_dim;
        for (int i = 0; 2 * i + 1 < head_dim; ++i) {
            const double freq = std::pow(theta, -2.0 * i / head_dim);
            const double angle = pos * freq;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double a = xh[2 * i];
            const double b = xh[2 * i + 1];
            xh[2 * i] = a * c - b * s;
            xh[2 * i + 1] = a * s + b * c;
        }
    }
}

// The rotation is orthogonal, so the backward pass rotates gradients by -angle.
inline void rope_backward(double* g, int num_heads, int head_dim, int pos, double theta) {
    rope(g, num_heads, head_dim, -pos, theta);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void silu(const double* x, int n, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
}

inline void silu_backward(const double* x, int n, const double* gy, double* dx) {
    for (int i = 0; i < n; ++i) {
        const double s = sigmoid(x[i]);
        dx[i] += gy[i] * (s + x[i] * s * (1.0 - s));
    }
}

// In-place softmax with max subtraction.
inline void softmax(double* p, int n) {
    double mx = p[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, p[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        p[i] = std::exp(p[i] - mx);
        sum += p[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) p[i] *= inv;
}

inline double log_sum_exp(const double* z, int n) {
    double mx = z[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(z[i] - mx);
    return mx + std::log(sum);
}

// Shannon entropy in nats with the 0 log 0 = 0 convention.
inline double entropy(const double* p, int n) {
    double h = 0.0;
    for (int i = 0; i < n; ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return h;
}

// Scaled dot-product attention for one query position against `len` cached
// key/value rows of width num_heads*head_dim. Writes the context vector and
// the per-head attention weights (len per head, used by the backward pass).
inline void attend(const double* q, const std::vector<const double*>& keys,
                   const std::vector<const double*>& values, int num_heads, int head_dim,
                   double* ctx, std::vector<double>& weights) {
    const int len = static_cast<int>(keys.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    weights.assign(static_cast<size_t>(num_heads) * len, 0.0);
    for (int h = 0; h < num_heads; ++h) {
        const double* qh = q + h * head_dim;
        double* wh = weights.data() + static_cast<size_t>(h) * len;
        for (int j = 0; j < len; ++j) {
            const double* kh = keys[j] + h * head_dim;
            double acc = 0.0;
            for (int d = 0; d < head_dim; ++d) acc += qh[d] * kh[d];
            wh[j] = acc * scale;
        }
        softmax(wh, len);
        double* ch = ctx + h * head_dim;
        for (int d = 0; d < head_dim; ++d) ch[d] = 0.0;
        for (int j = 0; j < len; ++j) {
            const double* vh = values[j] + h * head_dim;
            const double a = wh[j];
            for (int d = 0; d < head_dim; ++d) ch[d] += a * vh[d];
        }
    }
}

// -log softmax(z)[target], numerically stable.
inline double ce_pick(const double* z, int n, int target) {
    return log_sum_exp(z, n) - z[target];
}

// dz += g * (softmax(z) - onehot(target))
inline void ce_pick_backward(const double* z, int n, int target, double g, double* dz) {
    const double lse = log_sum_exp(z, n);
    for (int i = 0; i < n; ++i) dz[i] += g * std::exp(z[i] - lse);
    dz[target] -= g;
}

// KL(q || p) over the stored ids, q renormalized upstream, p = softmax(z/T).
// Student probabilities below `floor` are clamped (and counted); clamped
// terms contribute no gradient.
inline double kl_topk(const double* z, int n, const std::vector<int>& ids,
                      const std::vector<double>& q, double temperature, double floor,
                      long* underflow_counter) {
    std::vector<double> zt(n);
    for (int i = 0; i < n; ++i) zt[i] = z[i] / temperature;
    const double lse = log_sum_exp(zt.data(), n);
    double out = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
        const double logp = zt[ids[i]] - lse;
        double p = std::exp(logp);
        if (p < floor) {
            p = floor;
            if (underflow_counter) ++*underflow_counter;
        }
        if (q[i] > 0.0) out += q[i] * (std::log(q[i]) - std::log(p));
    }
    return out;
}

inline void kl_topk_backward(const double* z, int n, const std::vector<int>& ids,
                             const std::vector<double>& q, double temperature, double floor,
                             double g, double* dz) {
    std::vector<double> zt(n);
    for (int i = 0; i < n; ++i) zt[i] = z[i] / temperature;
    const double lse = log_sum_exp(zt.data(), n);
    // Active teacher mass (positions whose student prob was not clamped).
    double active_mass = 0.0;
    std::vector<double> q_active(n, 0.0);
    for (size_t i = 0; i < ids.size(); ++i) {
        const double p = std::exp(zt[ids[i]] - lse);
        if (p >= floor) {
            active_mass += q[i];
            q_active[ids[i]] += q[i];
        }
    }
    for (int v = 0; v < n; ++v) {
        const double p_v = std::exp(zt[v] - lse);
        dz[v] += g * (active_mass * p_v - q_active[v]) / temperature;
    }
}

// Largest logit among `allowed`; ties resolve to the lowest index.
inline int argmax_over(const double* z, const std::vector<int>& allowed) {
    int best = allowed[0];
    for (int v : allowed) {
        if (z[v] > z[best]) best = v;
    }
    return best;
}

inline double hinge_forbidden(const double* z, const std::vector<int>& forbidden,
                              const std::vector<int>& allowed) {
    const int a = argmax_over(z, allowed);
    double out = 0.0;
    for (int v : forbidden) {
        const double d = z[v] - z[a];
        if (d > 0.0) out += d;
    }
    return out;
}

inline void hinge_forbidden_backward(const double* z, const std::vector<int>& forbidden,
                                     const std::vector<int>& allowed, double g, double* dz) {
    const int a = argmax_over(z, allowed);
    for (int v : forbidden) {
        if (z[v] - z[a] > 0.0) {
            dz[v] += g;
            dz[a] -= g;
        }
    }
}

// BCE between sigmoid(x) and target, in the stable softplus form
// max(x, 0) - target * x + log(1 + exp(-|x|)).
inline double bce_logit(double x, double target) {
    return std::max(x, 0.0) - target * x + std::log1p(std::exp(-std::fabs(x)));
}

inline double bce_logit_grad(double x, double target) { return sigmoid(x) - target; }

// Backward of attend: accumulates into dq and per-position dk/dv buffers.
inline void attend_backward(const double* q, const std::vector<const double*>& keys,
                            const std::vector<const double*>& values, int num_heads, int head_dim,
                            const std::vector<double>& weights, const double* gctx, double* dq,
                            const std::vector<double*>& dkeys, const std::vector<double*>& dvalues) {
    const int len = static_cast<int>(keys.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<double> da(len), ds(len);
    for (int h = 0; h < num_heads; ++h) {
        const double* qh = q + h * head_dim;
        const double* wh = weights.data() + static_cast<size_t>(h) * len;
        const double* gh = gctx + h * head_dim;
        // d ctx / d v_j = a_j; d a via dot with v
        double mean = 0.0;
        for (int j = 0; j < len; ++j) {
            const double* vh = values[j] + h * head_dim;
            double acc = 0.0;
            for (int d = 0; d < head_dim; ++d) acc += gh[d] * vh[d];
            da[j] = acc;
            mean += wh[j] * acc;
        }
        for (int j = 0; j < len; ++j) ds[j] = wh[j] * (da[j] - mean);
        double* dqh = dq + h * head_dim;
        for (int j = 0; j < len; ++j) {
            const double* kh = keys[j] + h * head_dim;
            double* dkh = dkeys[j] + h * head_dim;
            double* dvh = dvalues[j] + h * head_dim;
            const double sj = ds[j] * scale;
            const double aj = wh[j];
            for (int d = 0; d < head_dim; ++d) {
                dqh[d] += sj * kh[d];
                dkh[d] += sj * qh[d];
                dvh[d] += aj * gh[d];
            }
        }
    }
}

}  // namespace ltx::kernels
