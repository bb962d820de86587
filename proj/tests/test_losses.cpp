#include "ltx/losses.hpp"

#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

using namespace ltx;
using namespace ltx::testutil;

namespace {

constexpr int kV = 16;
constexpr int kPad = 6;

Mat logits_filled(int len, double value) {
    Mat m(len, kV);
    for (double& v : m.data) v = value;
    return m;
}

// Independent log-softmax for oracles.
double oracle_nll(const Vec& row, int target) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    return -(row[target] - mx - std::log(sum));
}

}  // namespace

TEST_CASE("split cross-entropy") {
    const TrainingExample ex = make_hand_example(2, 3, 2);
    const int len = static_cast<int>(ex.length());

    SUBCASE("perfect logits give near-zero loss") {
        Mat logits(len, kV);
        for (size_t i = 1; i < ex.length(); ++i) {
            if (ex.labels[i] != kIgnoreLabel) {
                logits.at(static_cast<int>(i) - 1, ex.labels[i]) = 100.0;
            }
        }
        const CeParts parts = loss_ce(logits, ex, 0.5);
        CHECK(parts.ce_total < 1e-9);
    }

    SUBCASE("uniform logits cost ln V per position") {
        const CeParts parts = loss_ce(logits_filled(len, 0.3), ex, 0.5);
        CHECK(parts.ce_noncot == doctest::Approx(std::log(kV)).epsilon(1e-12));
        CHECK(parts.ce_cot == doctest::Approx(std::log(kV)).epsilon(1e-12));
        CHECK(parts.ce_total == doctest::Approx(1.5 * std::log(kV)).epsilon(1e-12));
    }

    SUBCASE("uniform logits over eight tokens cost 1.5 ln 8") {
        const TrainingExample small = make_hand_example(1, 1, 1, 1, 8);
        Mat logits(static_cast<int>(small.length()), 8);
        for (double& v : logits.data) v = -1.7;
        const CeParts parts = loss_ce(logits, small, 0.5);
        CHECK(parts.ce_total == doctest::Approx(1.5 * std::log(8.0)).epsilon(1e-12));
        CHECK(parts.ce_total == doctest::Approx(3.1192).epsilon(1e-4));
    }

    SUBCASE("crafted logits match a hand-computed oracle") {
        CounterRng rng(404);
        Mat logits(len, kV);
        for (double& v : logits.data) v = rng.gaussian();
        const CeParts parts = loss_ce(logits, ex, 0.5);

        double noncot = 0.0, cot = 0.0;
        int n_noncot = 0, n_cot = 0;
        for (size_t i = 1; i < ex.length(); ++i) {
            if (ex.labels[i] == kIgnoreLabel) continue;
            const double* r = logits.row(static_cast<int>(i) - 1);
            const double nll = oracle_nll(Vec(r, r + kV), ex.labels[i]);
            if (ex.mask_noncot_supervised[i]) {
                noncot += nll;
                ++n_noncot;
            } else {
                cot += nll;
                ++n_cot;
            }
        }
        CHECK(parts.ce_noncot == doctest::Approx(noncot / n_noncot).epsilon(1e-9));
        CHECK(parts.ce_cot == doctest::Approx(cot / n_cot).epsilon(1e-9));
        CHECK(parts.ce_total ==
              doctest::Approx(noncot / n_noncot + 0.5 * cot / n_cot).epsilon(1e-9));
    }

    SUBCASE("masking exactness: unread rows are irrelevant") {
        CounterRng rng(405);
        Mat logits(len, kV);
        for (double& v : logits.data) v = rng.gaussian();
        const CeParts before = loss_ce(logits, ex, 0.5);
        // positions whose next token is unsupervised and outside latent/KL
        for (int i = 0; i + 1 < len; ++i) {
            const int nxt = i + 1;
            if (!ex.mask_noncot_supervised[nxt] && !ex.mask_cot_interior[nxt] &&
                !ex.mask_latent_interior[nxt] && !ex.mask_latent_all[nxt] &&
                !ex.mask_kl_positions[nxt]) {
                for (int c = 0; c < kV; ++c) logits.at(i, c) = 1e6;
            }
        }
        for (int c = 0; c < kV; ++c) logits.at(len - 1, c) = -1e6;  // last row never read
        const CeParts after = loss_ce(logits, ex, 0.5);
        CHECK(before.ce_total == after.ce_total);
    }

    SUBCASE("degenerate example with no non-CoT supervision") {
        TrainingExample broken = make_hand_example(1, 1, 1);
        // strip supervision below the minimum
        for (size_t i = 0; i < broken.length(); ++i) {
            if (broken.mask_noncot_supervised[i]) {
                broken.mask_noncot_supervised[i] = 0;
                broken.labels[i] = kIgnoreLabel;
            }
        }
        broken.halt_targets.assign(broken.length(), 0);
        // the example itself no longer validates; loss_ce must reject it
        const Mat logits = logits_filled(static_cast<int>(broken.length()), 0.0);
        CHECK_THROWS_AS(loss_ce(logits, broken, 0.5), DataError);
    }
}

TEST_CASE("top-k teacher KL") {
    const TrainingExample ex = make_hand_example(1, 2, 1);
    const int len = static_cast<int>(ex.length());

    SUBCASE("one-hot teacher against a uniform student costs ln V") {
        // single KL position; uniform logits; teacher mass on one id
        TeacherDistribution teacher;
        int pos = -1;
        for (size_t i = 0; i < ex.length(); ++i) {
            if (ex.mask_kl_positions[i]) pos = static_cast<int>(i);
        }
        TeacherPosition tp;
        tp.ids = {2};
        tp.probs = {1.0};
        tp.tail_mass = 0.0;
        teacher.by_student_position[pos] = tp;

        Mat logits(len, 4);  // V = 4 for the ln 4 oracle
        const double kl = loss_kl(logits, teacher, ex, 1.0);
        // mean over |S_KL| positions, only one carries mass
        int n_kl = 0;
        for (size_t i = 0; i < ex.length(); ++i) n_kl += ex.mask_kl_positions[i];
        CHECK(kl == doctest::Approx(std::log(4.0) / n_kl).epsilon(1e-12));
    }

    SUBCASE("self-distillation fixed point: teacher = student, k = V") {
        CounterRng rng(7);
        Mat logits(len, kV);
        for (double& v : logits.data) v = rng.gaussian();
        TeacherDistribution teacher;
        for (size_t i = 1; i < ex.length(); ++i) {
            if (!ex.mask_kl_positions[i]) continue;
            const double* r = logits.row(static_cast<int>(i) - 1);
            Vec p(r, r + kV);
            kernels::softmax(p.data(), kV);
            TeacherPosition tp;
            for (int v = 0; v < kV; ++v) {
                tp.ids.push_back(v);
                tp.probs.push_back(p[v]);
            }
            tp.tail_mass = 0.0;
            teacher.by_student_position[static_cast<int>(i)] = tp;
        }
        CHECK(loss_kl(logits, teacher, ex, 1.0) < 1e-9);
    }

    SUBCASE("k = 2 teacher matches the hand-computed sum") {
        TeacherDistribution teacher;
        int pos = -1;
        for (size_t i = 0; i < ex.length(); ++i) {
            if (ex.mask_kl_positions[i]) {
                pos = static_cast<int>(i);
                break;
            }
        }
        TeacherPosition tp;
        tp.ids = {8, 12};
        tp.probs = {0.7, 0.3};
        tp.tail_mass = 0.0;
        teacher.by_student_position[pos] = tp;

        CounterRng rng(505);
        Mat logits(len, kV);
        for (double& v : logits.data) v = rng.gaussian();
        const double got = loss_kl(logits, teacher, ex, 1.0);

        const double* r = logits.row(pos - 1);
        Vec p(r, r + kV);
        kernels::softmax(p.data(), kV);
        const double expected = 0.7 * std::log(0.7 / p[8]) + 0.3 * std::log(0.3 / p[12]);
        int n_kl = 0;
        for (size_t i = 0; i < ex.length(); ++i) n_kl += ex.mask_kl_positions[i];
        CHECK(got == doctest::Approx(expected / n_kl).epsilon(1e-9));
    }

    SUBCASE("stored top-k is renormalized, tail dropped") {
        // teacher = student's own top-2: KL equals -log(top-2 mass)
        CounterRng rng(606);
        Mat logits(len, kV);
        for (double& v : logits.data) v = rng.gaussian();
        int pos = -1;
        for (size_t i = 0; i < ex.length(); ++i) {
            if (ex.mask_kl_positions[i]) {
                pos = static_cast<int>(i);
                break;
            }
        }
        const double* r = logits.row(pos - 1);
        Vec p(r, r + kV);
        kernels::softmax(p.data(), kV);
        int a = 0;
        for (int v = 1; v < kV; ++v) {
            if (p[v] > p[a]) a = v;
        }
        int b2 = a == 0 ? 1 : 0;
        for (int v = 0; v < kV; ++v) {
            if (v != a && p[v] > p[b2]) b2 = v;
        }
        TeacherPosition tp;
        tp.ids = {a, b2};
        tp.probs = {p[a], p[b2]};
        tp.tail_mass = 1.0 - p[a] - p[b2];
        TeacherDistribution teacher;
        teacher.by_student_position[pos] = tp;
        int n_kl = 0;
        for (size_t i = 0; i < ex.length(); ++i) n_kl += ex.mask_kl_positions[i];
        const double got = loss_kl(logits, teacher, ex, 1.0);
        CHECK(got == doctest::Approx(-std::log(p[a] + p[b2]) / n_kl).epsilon(1e-9));
    }

    SUBCASE("teacher ids outside the vocabulary are data errors") {
        TeacherDistribution teacher;
        int pos = -1;
        for (size_t i = 0; i < ex.length(); ++i) {
            if (ex.mask_kl_positions[i]) pos = static_cast<int>(i);
        }
        TeacherPosition tp;
        tp.ids = {kV + 3};
        tp.probs = {1.0};
        teacher.by_student_position[pos] = tp;
        const Mat logits = logits_filled(len, 0.0);
        CHECK_THROWS_AS(loss_kl(logits, teacher, ex, 1.0), DataError);
    }

    SUBCASE("teacher positions outside the mask are data errors") {
        TeacherDistribution teacher;
        TeacherPosition tp;
        tp.ids = {1};
        tp.probs = {1.0};
        teacher.by_student_position[1] = tp;  // a latent position, not in S_KL
        const Mat logits = logits_filled(len, 0.0);
        CHECK_THROWS_AS(loss_kl(logits, teacher, ex, 1.0), DataError);
    }
}

TEST_CASE("halting loss") {
    const TrainingExample ex = make_hand_example(3, 2, 1);
    const int len = static_cast<int>(ex.length());
    const std::vector<int> forbidden = {0, 2, 3, 4, 5};
    std::vector<int> allowed;
    for (int v = 7; v < kV; ++v) allowed.push_back(v);
    const int close_id = 1;

    auto saturated = [&]() {
        Mat logits(len, kV);
        CounterRng rng(808);
        for (double& v : logits.data) v = 0.1 * rng.gaussian();
        for (size_t i = 1; i < ex.length(); ++i) {
            double* row = logits.row(static_cast<int>(i) - 1);
            if (ex.mask_latent_interior[i] || ex.mask_latent_all[i]) {
                for (int f : forbidden) row[f] = -10.0;
                row[7] = 2.0;  // allowed max well above the forbidden set
                row[close_id] = ex.halt_targets[i] ? 50.0 : -50.0;
            }
        }
        return logits;
    };

    SUBCASE("saturated correct case is numerically zero") {
        CHECK(loss_halt(saturated(), ex, forbidden, allowed, close_id) < 1e-6);
    }

    SUBCASE("a single violation of exactly one unit gives term1 = 1") {
        const TrainingExample one = make_hand_example(1, 1, 1);
        Mat logits(static_cast<int>(one.length()), kV);
        for (double& v : logits.data) v = 0.0;
        for (size_t i = 1; i < one.length(); ++i) {
            double* row = logits.row(static_cast<int>(i) - 1);
            if (one.mask_latent_interior[i] || one.mask_latent_all[i]) {
                for (int f : forbidden) row[f] = -10.0;
                row[7] = 2.0;
                row[close_id] = one.halt_targets[i] ? 50.0 : -50.0;
                if (one.mask_latent_interior[i]) row[4] = 3.0;  // z_max + 1
            }
        }
        CHECK(loss_halt(logits, one, forbidden, allowed, close_id) == 1.0);
    }

    SUBCASE("crafted segment matches the hand-computed hinge + BCE oracle") {
        CounterRng rng(909);
        Mat logits(len, kV);
        for (double& v : logits.data) v = 2.0 * rng.gaussian();
        const double got = loss_halt(logits, ex, forbidden, allowed, close_id);

        double hinge = 0.0, bce = 0.0;
        int n_int = 0, n_all = 0;
        for (size_t i = 1; i < ex.length(); ++i) {
            const double* row = logits.row(static_cast<int>(i) - 1);
            if (ex.mask_latent_interior[i]) {
                double zmax = -1e300;
                for (int a : allowed) zmax = std::max(zmax, row[a]);
                for (int f : forbidden) hinge += std::max(0.0, row[f] - zmax);
                ++n_int;
            }
            if (ex.mask_latent_all[i]) {
                const double s = 1.0 / (1.0 + std::exp(-row[close_id]));
                const double b = ex.halt_targets[i] ? 1.0 : 0.0;
                bce += -(b * std::log(s) + (1.0 - b) * std::log(1.0 - s));
                ++n_all;
            }
        }
        CHECK(got == doctest::Approx(hinge / n_int + bce / n_all).epsilon(1e-9));
    }

    SUBCASE("latent_close may not be forbidden") {
        const Mat logits = logits_filled(len, 0.0);
        CHECK_THROWS_AS(loss_halt(logits, ex, {close_id}, allowed, close_id), ConfigError);
    }
}

TEST_CASE("gate alpha") {
    CHECK(gate_alpha(1.0, 2.0, 1e-8) == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(gate_alpha(2.0, 1.0, 1e-8) == 1.0);
    CHECK(gate_alpha(0.0, 0.0, 1e-8) == 0.0);
    CounterRng rng(11);
    for (int i = 0; i < 300; ++i) {
        const double a = gate_alpha(5.0 * rng.uniform(), 5.0 * rng.uniform(), 1e-8);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("total loss combines parts under the gate") {
    TrainConfig cfg;
    cfg.lambda_kl = 0.25;
    cfg.lambda_halt_base = 0.025;

    SUBCASE("paper-weight arithmetic") {
        EmaState ema;
        ema.initialized = true;
        ema.value = 10.0;  // gate clips to 1
        LossParts parts;
        parts.ce.ce_total = 2.0;
        parts.kl = 0.4;
        parts.halt_raw = 1.0;
        const LossReport r = total_loss(parts, cfg, ema);
        CHECK(r.gate_alpha == 1.0);
        CHECK(r.total == doctest::Approx(2.0 + 0.25 * 0.4 + 0.025 * 1.0).epsilon(1e-12));
        CHECK(r.total == doctest::Approx(2.125).epsilon(1e-12));
        CHECK(r.total ==
              doctest::Approx(r.ce_total + cfg.lambda_kl * r.kl + r.halt_effective)
                  .epsilon(1e-9));
    }

    SUBCASE("zero side weights reduce to the CE value") {
        TrainConfig c2 = cfg;
        c2.lambda_kl = 0.0;
        c2.lambda_halt_base = 0.0;
        EmaState ema;
        LossParts parts;
        parts.ce.ce_total = 3.25;
        parts.kl = 9.0;
        parts.halt_raw = 9.0;
        CHECK(total_loss(parts, c2, ema).total == 3.25);
    }

    SUBCASE("ema initializes to the first batch and tracks constants") {
        EmaState ema;
        LossParts parts;
        parts.ce.ce_total = 2.0;
        LossReport first = total_loss(parts, cfg, ema);
        CHECK(first.gate_alpha == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(ema.value == doctest::Approx(2.0).epsilon(1e-12));

        parts.ce.ce_total = 1.0;
        for (int step = 0; step < 2000; ++step) total_loss(parts, cfg, ema);
        CHECK(std::fabs(ema.value - 1.0) < 1e-6);
    }

    SUBCASE("gate yields when current CE is worse than the average") {
        EmaState ema;
        ema.initialized = true;
        ema.value = 1.0;
        LossParts parts;
        parts.ce.ce_total = 4.0;
        parts.halt_raw = 1.0;
        const LossReport r = total_loss(parts, cfg, ema);
        CHECK(r.gate_alpha == doctest::Approx(0.25).epsilon(1e-6));
        CHECK(r.halt_effective == doctest::Approx(0.25 * 0.025).epsilon(1e-6));
    }
}
