#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/LU>

#include "kamred/error.hpp"
#include "kamred/freq_index.hpp"
#include "kamred/linalg.hpp"

namespace kamred {

/// Real trace-zero 2x2 matrix.
class Sl2 {
public:
    static constexpr double kTraceTol = 1e-12;

    Sl2() : m_(RealMat2::Zero()) {}

    explicit Sl2(const RealMat2& m) : m_(m) {
        if (std::abs(m.trace()) >= kTraceTol * (1.0 + op_norm(m)))
            throw Error(ErrorKind::InvalidArgument, "Sl2 requires a trace-zero matrix");
    }

    /// [[a, b], [c, -a]].
    static Sl2 from_entries(double a, double b, double c) {
        RealMat2 m;
        m << a, b, c, -a;
        return Sl2(m);
    }

    /// Accepts a complex matrix whose imaginary part is negligible.
    static Sl2 from_complex(const Mat2& m, double imag_tol = 1e-12) {
        if (m.imag().cwiseAbs().maxCoeff() > imag_tol * (1.0 + op_norm(m)))
            throw Error(ErrorKind::InvalidArgument, "Sl2::from_complex: matrix is not real");
        RealMat2 r = m.real();
        // Remove trace roundoff symmetrically.
        const double t = 0.5 * r.trace();
        r(0, 0) -= t;
        r(1, 1) -= t;
        return Sl2(r);
    }

    [[nodiscard]] const RealMat2& matrix() const noexcept { return m_; }
    [[nodiscard]] Mat2 complex() const { return m_.cast<cplx>(); }
    [[nodiscard]] double norm() const { return op_norm(m_); }
    [[nodiscard]] double det() const { return m_.determinant(); }

    bool operator==(const Sl2& o) const { return m_ == o.m_; }

private:
    RealMat2 m_;
};

struct EigenData {
    cplx alpha{0.0, 0.0};
    Mat2 P = Mat2::Identity();
    Mat2 P_inv = Mat2::Identity();
    bool defective = false;

    [[nodiscard]] double cond() const { return op_norm(P) * op_norm(P_inv); }
};

/// Principal eigenvalue alpha = sqrt(-det A) with Re >= 0, and Im >= 0 on the
/// imaginary axis.
[[nodiscard]] inline cplx principal_alpha(const Sl2& a) {
    const double minus_det = -a.det();
    return minus_det >= 0.0 ? cplx(std::sqrt(minus_det), 0.0) : cplx(0.0, std::sqrt(-minus_det));
}

namespace detail {

inline Eigen::Vector2cd null_vector(const RealMat2& a, cplx lambda) {
    Eigen::Vector2cd v1(a(0, 1), lambda - a(0, 0));
    Eigen::Vector2cd v2(lambda + a(0, 0), a(1, 0));
    Eigen::Vector2cd v = v1.norm() >= v2.norm() ? v1 : v2;
    v /= v.norm();
    const int big = std::abs(v(0)) >= std::abs(v(1)) ? 0 : 1;
    v *= std::conj(v(big)) / std::abs(v(big));
    v(big) = cplx(v(big).real(), 0.0);
    return v;
}

}  // namespace detail

/// Diagonalization P^{-1} A P = diag(alpha, -alpha) with ||P||_op = 1.
///
/// When |alpha| < tol_defect (1 + ||A||) the matrix is flagged defective and
/// P is left as the identity.
[[nodiscard]] inline EigenData eigen(const Sl2& a, double tol_defect = 1e-12) {
    EigenData e;
    e.alpha = principal_alpha(a);
    if (std::abs(e.alpha) < tol_defect * (1.0 + a.norm())) {
        e.defective = true;
        return e;
    }
    e.P.col(0) = detail::null_vector(a.matrix(), e.alpha);
    e.P.col(1) = detail::null_vector(a.matrix(), -e.alpha);
    e.P /= op_norm(e.P);
    e.P_inv = inverse2(e.P);
    return e;
}

/// Inverse of M -> 2 i pi <m, omega> M - [A, M] on trace-zero matrices.
///
/// The spectrum on sl(2) is {i nu, i nu - 2 alpha, i nu + 2 alpha} with
/// i nu = 2 i pi <m, omega>. Well-conditioned A is handled in its
/// eigenbasis; defective or badly conditioned A goes through a dense
/// 4x4 solve in the entry basis.
class ModeOperatorInverse {
public:
    static constexpr double kSingularTol = 1e-300;
    static constexpr double kMaxCond = 1e4;

    ModeOperatorInverse(const Sl2& a, std::span<const double> omega, double tol_defect = 1e-12)
        : a_(a), omega_(omega.begin(), omega.end()), eig_(eigen(a, tol_defect)) {
        dense_ = eig_.defective || eig_.cond() > kMaxCond;
    }

    [[nodiscard]] const EigenData& eigen_data() const noexcept { return eig_; }
    [[nodiscard]] bool uses_dense_path() const noexcept { return dense_; }

    [[nodiscard]] cplx i_nu(const FreqIndex& m) const {
        return {0.0, 2.0 * std::numbers::pi * m.dot(omega_)};
    }

    [[nodiscard]] std::array<cplx, 3> spectrum(const FreqIndex& m) const {
        const cplx inu = i_nu(m);
        return {inu, inu - 2.0 * eig_.alpha, inu + 2.0 * eig_.alpha};
    }

    /// Largest reciprocal modulus over the spectrum.
    [[nodiscard]] double max_reciprocal(const FreqIndex& m) const {
        double worst = 0.0;
        for (const cplx& s : spectrum(m)) worst = std::max(worst, 1.0 / std::abs(s));
        return worst;
    }

    [[nodiscard]] Mat2 solve(const FreqIndex& m, const Mat2& rhs) const {
        require(m.dim() == static_cast<int>(omega_.size()), "lm_inverse: index dimension mismatch");
        const auto spec = spectrum(m);
        for (const cplx& s : spec)
            if (std::abs(s) < kSingularTol) throw Error(ErrorKind::Singular, "mode operator is singular");
        return dense_ ? solve_dense(spec[0], rhs) : solve_eigen(spec, rhs);
    }

private:
    [[nodiscard]] Mat2 solve_eigen(const std::array<cplx, 3>& spec, const Mat2& rhs) const {
        Mat2 r = eig_.P_inv * rhs * eig_.P;
        r(0, 0) /= spec[0];
        r(1, 1) /= spec[0];
        r(0, 1) /= spec[1];
        r(1, 0) /= spec[2];
        Mat2 out = eig_.P * r * eig_.P_inv;
        const cplx t = 0.5 * out.trace();
        out(0, 0) -= t;
        out(1, 1) -= t;
        return out;
    }

    [[nodiscard]] Mat2 solve_dense(cplx inu, const Mat2& rhs) const {
        // Column-major vec: vec(AM) = (I (x) A) vec M, vec(MA) = (A^T (x) I) vec M.
        const Mat2 a = a_.complex();
        Eigen::Matrix4cd l = inu * Eigen::Matrix4cd::Identity();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    // -(A M)_{ij} = -sum_k A_{ik} M_{kj}
                    l(i + 2 * j, k + 2 * j) -= a(i, k);
                    // +(M A)_{ij} = sum_k M_{ik} A_{kj}
                    l(i + 2 * j, i + 2 * k) += a(k, j);
                }
        Eigen::Vector4cd b(rhs(0, 0), rhs(1, 0), rhs(0, 1), rhs(1, 1));
        Eigen::Vector4cd x = l.fullPivLu().solve(b);
        Mat2 out;
        out << x(0), x(2), x(1), x(3);
        return out;
    }

    Sl2 a_;
    std::vector<double> omega_;
    EigenData eig_;
    bool dense_ = false;
};

[[nodiscard]] inline Mat2 lm_inverse(const FreqIndex& m, std::span<const double> omega, const Sl2& a,
                                     const Mat2& rhs) {
    return ModeOperatorInverse(a, omega).solve(m, rhs);
}

/// Measured largest spectral reciprocal of the mode operator, checked
/// against 4 G(N) g(|m|) / kappa.
///
/// Throws AssertionFailure when the bound fails.
[[nodiscard]] inline double operator_bound_check(const FreqIndex& m, std::span<const double> omega, const Sl2& a,
                                                 double kappa, double G_N, double g_m) {
    const double measured = ModeOperatorInverse(a, omega).max_reciprocal(m);
    const double bound = 4.0 * G_N * g_m / kappa;
    if (!(measured <= bound * (1.0 + 1e-12)))
        throw Error(ErrorKind::AssertionFailure, "mode operator inverse exceeds 4 G(N) g(|m|) / kappa");
    return measured;
}

}  // namespace kamred
