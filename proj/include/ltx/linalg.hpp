#pragma once

#include <vector>

#include "ltx/tensor.hpp"

namespace ltx::linalg {

// Moore-Penrose pseudo-inverse by SVD. Singular values below rcond * sigma_max
// are treated as zero.
Mat pinv(const Mat& a, double rcond = 1e-6);

// Thin SVD of a (rows x cols): returns singular values (descending) and the
// right singular vectors as rows of `vt` (min(rows, cols) x cols).
struct SvdResult {
    Vec singular_values;
    Mat vt;
};
SvdResult thin_svd(const Mat& a);

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

}  // namespace ltx::linalg
