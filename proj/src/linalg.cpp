#include "ltx/linalg.hpp"

#include <Eigen/Dense>

#include "ltx/errors.hpp"

namespace ltx::linalg {

using EMat = Eigen::MatrixXd;

static EMat to_eigen(const Mat& m) {
    EMat e(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) e(r, c) = m.at(r, c);
    }
    return e;
}

static Mat from_eigen(const EMat& e) {
    Mat m(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) m.at(r, c) = e(r, c);
    }
    return m;
}

Mat pinv(const Mat& a, double rcond) {
    if (!all_finite(a)) throw NumericError("pinv: non-finite entries");
    const EMat e = to_eigen(a);
    Eigen::JacobiSVD<EMat> svd(e, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rcond * sv(0) : 0.0;
    Eigen::VectorXd inv_sv(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    }
    const EMat p = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    return from_eigen(p);
}

SvdResult thin_svd(const Mat& a) {
    if (!all_finite(a)) throw NumericError("thin_svd: non-finite entries");
    Eigen::JacobiSVD<EMat> svd(to_eigen(a), Eigen::ComputeThinV);
    SvdResult out;
    const auto& sv = svd.singularValues();
    out.singular_values.assign(sv.data(), sv.data() + sv.size());
    out.vt = from_eigen(svd.matrixV().transpose());
    return out;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw InputError("matmul: inner dimension mismatch");
    Mat out(a.rows, b.cols);
    for (int r = 0; r < a.rows; ++r) {
        for (int k = 0; k < a.cols; ++k) {
            const double av = a.at(r, k);
            for (int c = 0; c < b.cols; ++c) out.at(r, c) += av * b.at(k, c);
        }
    }
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r) {
        for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
    }
    return out;
}

}  // namespace ltx::linalg
