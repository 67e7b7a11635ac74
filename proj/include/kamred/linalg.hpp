#pragma once

#include <cmath>
#include <complex>

#include <Eigen/Dense>

namespace kamred {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using RealMat2 = Eigen::Matrix2d;

/// Largest singular value of a complex 2x2 matrix, in closed form.
///
/// With s = |M|_F^2 and d = |det M| the squared singular values are
/// (s +- sqrt(s^2 - 4 d^2)) / 2.
[[nodiscard]] inline double op_norm(const Mat2& m) {
    const double s = m.squaredNorm();
    if (s == 0.0) return 0.0;
    const double d = std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
    const double disc = std::max(0.0, (s - 2.0 * d) * (s + 2.0 * d));
    return std::sqrt(0.5 * (s + std::sqrt(disc)));
}

[[nodiscard]] inline double op_norm(const RealMat2& m) { return op_norm(Mat2(m.cast<cplx>())); }

[[nodiscard]] inline Mat2 identity2() { return Mat2::Identity(); }

[[nodiscard]] inline Mat2 commutator(const Mat2& a, const Mat2& b) { return a * b - b * a; }

[[nodiscard]] inline cplx det2(const Mat2& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

/// Inverse of a 2x2 matrix through the adjugate; caller guarantees det != 0.
[[nodiscard]] inline Mat2 inverse2(const Mat2& m) {
    const cplx det = det2(m);
    Mat2 adj;
    adj << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return adj / det;
}

}  // namespace kamred
