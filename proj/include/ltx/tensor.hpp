#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ltx/errors.hpp"
#include "ltx/rng.hpp"

namespace ltx {

using Vec = std::vector<double>;

// Row-major dense matrix. All model weights and activations use double: one
// uniform floating format keeps every oracle comparison in one precision.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    size_t size() const { return data.size(); }

    static Mat gaussian(int r, int c, CounterRng& rng, double scale) {
        Mat m(r, c);
        for (double& v : m.data) v = scale * rng.gaussian();
        return m;
    }
};

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

}  // namespace ltx
