#pragma once

#include <functional>
#include <vector>

#include "ltx/kernels.hpp"
#include "ltx/tensor.hpp"

namespace ltx::ad {

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Tape-based reverse-mode autodiff over small dense values. Every op computes
// its forward value through the same kernels as the cached inference path, so
// a teacher-forced pass reproduces plain decoding bit-for-bit.
class Tape {
public:
    Var leaf(const Mat& m);
    Var leaf(const Vec& v);

    const Vec& val(Var v) const { return nodes_[v.idx].val; }
    Vec& grad(Var v) { return nodes_[v.idx].grad; }
    int rows(Var v) const { return nodes_[v.idx].rows; }
    int cols(Var v) const { return nodes_[v.idx].cols; }
    double scalar(Var v) const { return nodes_[v.idx].val[0]; }
    size_t size() const { return nodes_.size(); }

    // -- tensor ops ----------------------------------------------------------
    Var row(Var matrix, int r);                 // embedding lookup
    Var matvec(Var w, Var x);                   // y = W x
    Var add(Var a, Var b);                      // elementwise
    Var rms_norm(Var x, Var gain, double eps);
    Var rope(Var x, int num_heads, int head_dim, int pos, double theta);
    Var silu(Var x);
    Var attend(Var q, const std::vector<Var>& keys, const std::vector<Var>& values, int num_heads,
               int head_dim);

    // -- scalar loss ops ------------------------------------------------------
    // -log softmax(z)[target]
    Var ce_pick(Var logits, int target);
    // sum_i q_i (ln q_i - ln p_{id_i}), p = softmax(z / T); student probs are
    // clamped at 1e-12 (underflow_counter incremented when that happens).
    Var kl_topk(Var logits, std::vector<int> ids, std::vector<double> probs, double temperature,
                long* underflow_counter = nullptr);
    // sum over forbidden v of max(0, z_v - max_{a in allowed} z_a)
    Var hinge_forbidden(Var logits, std::vector<int> forbidden, std::vector<int> allowed);
    // binary cross-entropy between sigmoid(z[index]) and target
    Var bce_logit(Var logits, int index, double target);
    // bias + sum_i coeff_i * scalar_i
    Var affine(const std::vector<Var>& scalars, const std::vector<double>& coeffs,
               double bias = 0.0);

    // Seeds the root gradient with 1 and runs all backward closures in
    // reverse creation order. The root must be a scalar.
    void backward(Var root);

private:
    struct Node {
        int rows = 0, cols = 1;
        Vec val;
        Vec grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;

    Var push(int rows, int cols);
};

}  // namespace ltx::ad
