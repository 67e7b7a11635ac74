#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "kamred/driver.hpp"
#include "kamred/error.hpp"
#include "kamred/sl2.hpp"
#include "kamred/torus_map.hpp"

namespace kamred {

enum class RotationEstimator {
    WeightedBirkhoff,  ///< smooth bump weight exp(-1/(s(1-s))) on the angular increments
    PlainAverage,      ///< total unwrapped argument divided by T
};

struct RotationOptions {
    RotationEstimator estimator = RotationEstimator::WeightedBirkhoff;
    bool refine = true;  ///< also integrate with h/2 to estimate the discretization error
    int max_halvings = 10;
};

struct RotationEstimate {
    double rho = 0.0;
    double T = 0.0;
    double h = 0.0;
    double error_estimate = 0.0;
    double rho_half_step = 0.0;     ///< same estimate with h/2
    double rho_half_horizon = 0.0;  ///< same estimate over [0, T/2]
};

namespace detail {

using Vec2 = std::array<double, 2>;

/// Real 2x2 system matrix at time t.
class FlowSystem {
public:
    FlowSystem(const TorusMap& sys, std::span<const double> omega, std::span<const double> theta0)
        : sys_(sys), omega_(omega.begin(), omega.end()), theta0_(theta0.begin(), theta0.end()) {
        require(sys.dim() == static_cast<int>(omega.size()) && omega.size() == theta0.size(),
                "rotation_number: dimension mismatch");
    }

    [[nodiscard]] RealMat2 at(double t) const {
        std::vector<double> theta(theta0_);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += t * omega_[i];
        return eval(sys_, theta).real();
    }

private:
    const TorusMap& sys_;
    std::vector<double> omega_;
    std::vector<double> theta0_;
};

inline Vec2 apply(const RealMat2& m, const Vec2& v) {
    return {m(0, 0) * v[0] + m(0, 1) * v[1], m(1, 0) * v[0] + m(1, 1) * v[1]};
}

/// One classical Runge-Kutta step. `turn_bound` receives |A(t)|_F h, which
/// bounds the true angular increment to first order.
inline Vec2 rk4(const FlowSystem& f, double t, double h, const Vec2& v, double& turn_bound) {
    const RealMat2 m0 = f.at(t), m1 = f.at(t + 0.5 * h), m2 = f.at(t + h);
    turn_bound = std::max({m0.norm(), m1.norm(), m2.norm()}) * h;
    const Vec2 k1 = apply(m0, v);
    const Vec2 k2 = apply(m1, {v[0] + 0.5 * h * k1[0], v[1] + 0.5 * h * k1[1]});
    const Vec2 k3 = apply(m1, {v[0] + 0.5 * h * k2[0], v[1] + 0.5 * h * k2[1]});
    const Vec2 k4 = apply(m2, {v[0] + h * k3[0], v[1] + h * k3[1]});
    return {v[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            v[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
}

/// Counterclockwise angle from u to v in (-pi, pi].
inline double turn(const Vec2& u, const Vec2& v) {
    return std::atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1]);
}

inline double bump(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return std::exp(-1.0 / (s * (1.0 - s)));
}

struct Accumulator {
    double horizon = 0.0;
    double weighted_turn = 0.0;
    double weight = 0.0;
    double total_turn = 0.0;

    void add(double t_mid, double dt, double d_angle) {
        if (t_mid > horizon) return;
        const double w = bump(t_mid / horizon);
        weighted_turn += w * d_angle;
        weight += w * dt;
        total_turn += d_angle;
    }

    [[nodiscard]] double value(RotationEstimator e) const {
        if (e == RotationEstimator::PlainAverage || weight == 0.0) return total_turn / horizon;
        return weighted_turn / weight;
    }
};

/// Integrates the unit direction and returns the full- and half-horizon estimates.
inline std::array<double, 2> integrate_rotation(const FlowSystem& f, double phi0, double T, double h,
                                                const RotationOptions& opts) {
    const long long steps = static_cast<long long>(std::ceil(T / h - 1e-9));
    const double dt = T / static_cast<double>(steps);
    Accumulator full{T}, half{0.5 * T};
    Vec2 v{std::cos(phi0), std::sin(phi0)};
    for (long long k = 0; k < steps; ++k) {
        const double t = k * dt;
        // Split the step until every sub-step turns by less than pi/2.
        int pieces = 1;
        for (int halvings = 0;; ++halvings) {
            Vec2 w = v;
            bool ok = true;
            std::vector<std::pair<double, double>> turns;
            turns.reserve(pieces);
            const double sub = dt / pieces;
            for (int p = 0; p < pieces && ok; ++p) {
                double bound = 0.0;
                Vec2 next = rk4(f, t + p * sub, sub, w, bound);
                const double nrm = std::hypot(next[0], next[1]);
                next = {next[0] / nrm, next[1] / nrm};
                const double d = turn(w, next);
                if (std::abs(d) > 0.5 * std::numbers::pi || bound > 0.5 * std::numbers::pi) ok = false;
                turns.emplace_back(t + (p + 0.5) * sub, d);
                w = next;
            }
            if (ok) {
                for (const auto& [tm, d] : turns) {
                    full.add(tm, sub, d);
                    half.add(tm, sub, d);
                }
                v = w;
                break;
            }
            if (halvings >= opts.max_halvings)
                throw Error(ErrorKind::StepTooLarge, "rotation_number: angle increment above pi/2 after halvings");
            pieces *= 2;
        }
    }
    return {full.value(opts.estimator), half.value(opts.estimator)};
}

}  // namespace detail

/// Rotation number of the flow v' = A(theta0 + t omega) v from the direction phi0.
[[nodiscard]] inline RotationEstimate rotation_number(const TorusMap& system, std::span<const double> omega,
                                                      std::span<const double> theta0, double phi0, double T, double h,
                                                      const RotationOptions& opts = {}) {
    require(T > 0.0 && h > 0.0 && h <= T, "rotation_number requires 0 < h <= T");
    const detail::FlowSystem f(system, omega, theta0);
    RotationEstimate out;
    out.T = T;
    out.h = h;
    const auto coarse = detail::integrate_rotation(f, phi0, T, h, opts);
    out.rho = coarse[0];
    out.rho_half_horizon = coarse[1];
    out.error_estimate = std::abs(out.rho - out.rho_half_horizon);
    if (opts.refine) {
        const auto fine = detail::integrate_rotation(f, phi0, T, 0.5 * h, opts);
        out.rho_half_step = fine[0];
        out.error_estimate = std::max(out.error_estimate, std::abs(out.rho - out.rho_half_step));
    }
    return out;
}

/// Rotation number of a constant matrix: |Im alpha|.
[[nodiscard]] inline double rotation_of_constant(const Sl2& b) { return std::abs(principal_alpha(b).imag()); }

struct AdditivityReport {
    bool ok = false;
    double rho_full = 0.0;
    double rho_B = 0.0;
    double offset = 0.0;   ///< pi sum_j <m_j, omega>
    double mismatch = 0.0; ///< smallest |s rho_full - t rho_B - offset| over signs s, t
    double bound = 0.0;
    int sign_full = 1;
    int sign_B = 1;
};

/// Sum of sqrt(eps_j) over the recorded states plus the geometric tail.
[[nodiscard]] inline double sqrt_eps_budget(const RunTrace& trace, const KamSchedule& s) {
    double sum = 0.0;
    for (const auto& r : trace.records) sum += std::exp(0.5 * r.log_eps_bound);
    const int last = trace.records.empty() ? 0 : trace.records.back().n;
    const double q = std::exp(0.25 * s.log_one_minus_a());
    sum += std::exp(0.5 * s.log_eps(last + 1)) / (1.0 - q);
    return sum;
}

/// Checks rho(A + F) = rho(B) + pi sum_j <m_j, omega> up to tol plus the sqrt(eps_j) budget.
/// The orientation of both rotation numbers is not fixed, so all four sign
/// combinations are tried and the matching one is reported.
[[nodiscard]] inline AdditivityReport verify_additivity(double rho_full, double rho_B, const RunTrace& trace,
                                                        const KamSchedule& s, std::span<const double> omega,
                                                        double tol) {
    AdditivityReport rep;
    rep.rho_full = rho_full;
    rep.rho_B = rho_B;
    for (const auto& r : trace.records)
        if (r.resonant) rep.offset += std::numbers::pi * lattice_dot(r.m, omega);
    rep.bound = tol + sqrt_eps_budget(trace, s);
    rep.mismatch = std::numeric_limits<double>::infinity();
    for (int sf : {1, -1})
        for (int sb : {1, -1}) {
            const double d = std::abs(sf * rho_full - sb * rep.rho_B - rep.offset);
            if (d < rep.mismatch) {
                rep.mismatch = d;
                rep.sign_full = sf;
                rep.sign_B = sb;
            }
        }
    rep.ok = rep.mismatch <= rep.bound;
    return rep;
}

[[nodiscard]] inline AdditivityReport verify_additivity(double rho_full, const Sl2& b_final, const RunTrace& trace,
                                                        const KamSchedule& s, std::span<const double> omega,
                                                        double tol) {
    return verify_additivity(rho_full, rotation_of_constant(b_final), trace, s, omega, tol);
}

}  // namespace kamred
