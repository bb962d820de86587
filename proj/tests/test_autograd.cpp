#include "ltx/autograd.hpp"

#include <cmath>
#include <functional>

#include "doctest.h"
#include "ltx/rng.hpp"
#include "test_util.hpp"

using namespace ltx;
using namespace ltx::testutil;

namespace {

// Central finite differences of a scalar function of one flat input vector.
Vec finite_diff(const std::function<double(const Vec&)>& f, Vec x, double h = 1e-6) {
    Vec grad(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

Vec random_vec(int n, uint64_t seed) {
    CounterRng rng(seed);
    Vec v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

Mat random_mat(int r, int c, uint64_t seed) {
    CounterRng rng(seed);
    Mat m(r, c);
    for (double& x : m.data) x = 0.5 * rng.gaussian();
    return m;
}

void check_close(const Vec& analytic, const Vec& numeric, double tol = 1e-5) {
    REQUIRE(analytic.size() == numeric.size());
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double err = std::fabs(analytic[i] - numeric[i]) /
                           std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-4});
        CHECK(err < tol);
    }
}

// Fixed random probe used to contract vector-valued ops into a scalar, so
// one backward pass checks the whole Jacobian action.
Vec probe_weights(int n, uint64_t seed) { return random_vec(n, seed + 1000); }

// Scalar head: y . w as a 1 x n matvec, so Tape::backward applies.
ad::Var dot_head(ad::Tape& tape, ad::Var y, const Vec& w) {
    Mat wm(1, static_cast<int>(w.size()));
    wm.data = w;
    const ad::Var wv = tape.leaf(wm);
    return tape.matvec(wv, y);
}

}  // namespace

TEST_CASE("matvec gradients match finite differences") {
    const Mat w0 = random_mat(5, 4, 1);
    const Vec x0 = random_vec(4, 2);
    const Vec probe = probe_weights(5, 3);

    ad::Tape tape;
    const ad::Var w = tape.leaf(w0);
    const ad::Var x = tape.leaf(x0);
    const ad::Var head = dot_head(tape, tape.matvec(w, x), probe);
    tape.backward(head);

    const auto fx = [&](const Vec& xv) {
        double acc = 0.0;
        for (int r = 0; r < 5; ++r) {
            double y = 0.0;
            for (int c = 0; c < 4; ++c) y += w0.at(r, c) * xv[c];
            acc += probe[r] * y;
        }
        return acc;
    };
    check_close(tape.grad(x), finite_diff(fx, x0));

    const auto fw = [&](const Vec& wv) {
        double acc = 0.0;
        for (int r = 0; r < 5; ++r) {
            double y = 0.0;
            for (int c = 0; c < 4; ++c) y += wv[r * 4 + c] * x0[c];
            acc += probe[r] * y;
        }
        return acc;
    };
    check_close(tape.grad(w), finite_diff(fw, w0.data));
}

TEST_CASE("rms_norm gradients match finite differences") {
    const Vec x0 = random_vec(6, 4);
    const Vec g0 = random_vec(6, 5);
    const Vec probe = probe_weights(6, 6);
    const double eps = 1e-6;

    ad::Tape tape;
    const ad::Var x = tape.leaf(x0);
    Mat gm(1, 6);
    gm.data = g0;
    const ad::Var g = tape.leaf(gm);
    const ad::Var head = dot_head(tape, tape.rms_norm(x, g, eps), probe);
    tape.backward(head);

    const auto value = [&](const Vec& xv, const Vec& gv) {
        double ss = 0.0;
        for (double v : xv) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / 6 + eps);
        double acc = 0.0;
        for (int i = 0; i < 6; ++i) acc += probe[i] * xv[i] * inv * gv[i];
        return acc;
    };
    check_close(tape.grad(x), finite_diff([&](const Vec& v) { return value(v, g0); }, x0));
    check_close(tape.grad(g), finite_diff([&](const Vec& v) { return value(x0, v); }, g0));
}

TEST_CASE("rope backward is the inverse rotation") {
    const Vec x0 = random_vec(8, 7);
    const Vec probe = probe_weights(8, 8);
    ad::Tape tape;
    const ad::Var x = tape.leaf(x0);
    const ad::Var head = dot_head(tape, tape.rope(x, 2, 4, 5, 10000.0), probe);
    tape.backward(head);

    const auto f = [&](const Vec& xv) {
        Vec y = xv;
        kernels::rope(y.data(), 2, 4, 5, 10000.0);
        double acc = 0.0;
        for (int i = 0; i < 8; ++i) acc += probe[i] * y[i];
        return acc;
    };
    check_close(tape.grad(x), finite_diff(f, x0));
}

TEST_CASE("silu gradients match finite differences") {
    const Vec x0 = random_vec(5, 9);
    const Vec probe = probe_weights(5, 10);
    ad::Tape tape;
    const ad::Var x = tape.leaf(x0);
    const ad::Var head = dot_head(tape, tape.silu(x), probe);
    tape.backward(head);

    const auto f = [&](const Vec& xv) {
        double acc = 0.0;
        for (int i = 0; i < 5; ++i) acc += probe[i] * xv[i] / (1.0 + std::exp(-xv[i]));
        return acc;
    };
    check_close(tape.grad(x), finite_diff(f, x0));
}

TEST_CASE("attend gradients match finite differences") {
    const int heads = 2, hd = 3, d = 6, len = 4;
    const Vec q0 = random_vec(d, 11);
    std::vector<Vec> keys, values;
    for (int j = 0; j < len; ++j) {
        keys.push_back(random_vec(d, 20 + j));
        values.push_back(random_vec(d, 40 + j));
    }
    const Vec probe = probe_weights(d, 12);

    ad::Tape tape;
    const ad::Var q = tape.leaf(q0);
    std::vector<ad::Var> kv, vv;
    for (int j = 0; j < len; ++j) {
        kv.push_back(tape.leaf(keys[j]));
        vv.push_back(tape.leaf(values[j]));
    }
    const ad::Var head = dot_head(tape, tape.attend(q, kv, vv, heads, hd), probe);
    tape.backward(head);

    const auto value = [&](const Vec& qv, const std::vector<Vec>& ks,
                           const std::vector<Vec>& vs) {
        Vec ctx(d, 0.0);
        std::vector<const double*> kp, vp;
        for (const auto& k : ks) kp.push_back(k.data());
        for (const auto& v : vs) vp.push_back(v.data());
        std::vector<double> w;
        kernels::attend(qv.data(), kp, vp, heads, hd, ctx.data(), w);
        double acc = 0.0;
        for (int i = 0; i < d; ++i) acc += probe[i] * ctx[i];
        return acc;
    };

    check_close(tape.grad(q), finite_diff([&](const Vec& v) { return value(v, keys, values); }, q0));
    for (int j = 0; j < len; ++j) {
        auto fk = [&](const Vec& v) {
            auto ks = keys;
            ks[j] = v;
            return value(q0, ks, values);
        };
        check_close(tape.grad(kv[j]), finite_diff(fk, keys[j]));
        auto fv = [&](const Vec& v) {
            auto vs = values;
            vs[j] = v;
            return value(q0, keys, vs);
        };
        check_close(tape.grad(vv[j]), finite_diff(fv, values[j]));
    }
}

TEST_CASE("ce_pick gradients match finite differences") {
    const Vec z0 = random_vec(7, 13);
    ad::Tape tape;
    const ad::Var z = tape.leaf(z0);
    tape.backward(tape.ce_pick(z, 3));
    const auto f = [&](const Vec& zv) {
        return kernels::ce_pick(zv.data(), 7, 3);
    };
    check_close(tape.grad(z), finite_diff(f, z0));
}

TEST_CASE("kl_topk gradients match finite differences") {
    const Vec z0 = random_vec(9, 14);
    const std::vector<int> ids = {1, 4, 7};
    const std::vector<double> q = {0.5, 0.3, 0.2};
    const double temp = 1.0;
    ad::Tape tape;
    const ad::Var z = tape.leaf(z0);
    tape.backward(tape.kl_topk(z, ids, q, temp));
    const auto f = [&](const Vec& zv) {
        return kernels::kl_topk(zv.data(), 9, ids, q, temp, 1e-12, nullptr);
    };
    check_close(tape.grad(z), finite_diff(f, z0));

    SUBCASE("nonunit temperature") {
        ad::Tape t2;
        const ad::Var z2 = t2.leaf(z0);
        t2.backward(t2.kl_topk(z2, ids, q, 2.0));
        const auto f2 = [&](const Vec& zv) {
            return kernels::kl_topk(zv.data(), 9, ids, q, 2.0, 1e-12, nullptr);
        };
        check_close(t2.grad(z2), finite_diff(f2, z0));
    }
}

TEST_CASE("hinge_forbidden gradients match finite differences") {
    // generic logits: margins far from the kink
    Vec z0 = {2.0, -1.0, 0.5, 3.5, -0.7, 1.2, 0.1, -2.0};
    const std::vector<int> forbidden = {0, 3};   // 2.0 and 3.5
    const std::vector<int> allowed = {2, 5, 6};  // max is 1.2 at id 5
    ad::Tape tape;
    const ad::Var z = tape.leaf(z0);
    const ad::Var h = tape.hinge_forbidden(z, forbidden, allowed);
    CHECK(tape.scalar(h) == doctest::Approx((2.0 - 1.2) + (3.5 - 1.2)).epsilon(1e-12));
    tape.backward(h);
    const auto f = [&](const Vec& zv) {
        return kernels::hinge_forbidden(zv.data(), forbidden, allowed);
    };
    check_close(tape.grad(z), finite_diff(f, z0));
}

TEST_CASE("bce_logit gradients match finite differences") {
    const Vec z0 = random_vec(4, 15);
    for (double target : {0.0, 1.0}) {
        ad::Tape tape;
        const ad::Var z = tape.leaf(z0);
        tape.backward(tape.bce_logit(z, 2, target));
        const auto f = [&](const Vec& zv) { return kernels::bce_logit(zv[2], target); };
        check_close(tape.grad(z), finite_diff(f, z0));
    }
}

TEST_CASE("affine combines scalars with coefficients") {
    ad::Tape tape;
    const ad::Var a = tape.leaf(Vec{2.0});
    const ad::Var b = tape.leaf(Vec{-3.0});
    const ad::Var out = tape.affine({a, b}, {0.5, 2.0}, 1.0);
    CHECK(tape.scalar(out) == doctest::Approx(1.0 + 1.0 - 6.0).epsilon(1e-15));
    tape.backward(out);
    CHECK(tape.grad(a)[0] == doctest::Approx(0.5));
    CHECK(tape.grad(b)[0] == doctest::Approx(2.0));
}

TEST_CASE("gradients accumulate across shared subexpressions") {
    // y = x + x: dy/dx = 2
    ad::Tape tape;
    const ad::Var x = tape.leaf(Vec{1.5, -0.5});
    const ad::Var y = tape.add(x, x);
    const Vec probe = {1.0, 1.0};
    const ad::Var head = dot_head(tape, y, probe);
    tape.backward(head);
    CHECK(tape.grad(x)[0] == doctest::Approx(2.0));
    CHECK(tape.grad(x)[1] == doctest::Approx(2.0));
}
