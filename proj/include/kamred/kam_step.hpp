#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kamred/approx_fn.hpp"
#include "kamred/arithmetics.hpp"
#include "kamred/error.hpp"
#include "kamred/freq_index.hpp"
#include "kamred/linalg.hpp"
#include "kamred/sl2.hpp"
#include "kamred/torus_map.hpp"

namespace kamred {

/// Frequency vector with its approximation data.
struct ArithContext {
    std::vector<double> omega;
    double kappa = 1.0;
    ApproxFn G = ApproxFn::power(2.0);
    ApproxFn g = ApproxFn::power(2.0);

    [[nodiscard]] Omega om() const { return omega; }
    [[nodiscard]] int dim() const { return static_cast<int>(omega.size()); }
};

/// One checked inequality lhs <= rhs. With in_log both sides are logarithms.
struct Verdict {
    std::string name;
    bool ok = true;
    double lhs = 0.0;
    double rhs = 0.0;
    bool in_log = false;
};

[[nodiscard]] inline Verdict make_verdict(std::string name, double lhs, double rhs, bool in_log = false) {
    return {std::move(name), lhs <= rhs, lhs, rhs, in_log};
}

[[nodiscard]] inline bool all_ok(const std::vector<Verdict>& vs) {
    for (const auto& v : vs)
        if (!v.ok) return false;
    return true;
}

[[nodiscard]] inline std::string failed_names(const std::vector<Verdict>& vs) {
    std::string out;
    for (const auto& v : vs)
        if (!v.ok) out += (out.empty() ? "" : ",") + v.name;
    return out;
}

// ---------------------------------------------------------------------------
// Resonance detection
// ---------------------------------------------------------------------------

struct ResonanceReport {
    std::optional<IntVec> m;
    cplx alpha_shifted{0.0, 0.0};
    double margin = 0.0;               ///< |alpha - i pi <m, omega>| of the reported m
    bool shifted_nonresonant = true;   ///< alpha_shifted in NR at level kappa / G(N)
    double shifted_worst_log_ratio = std::numeric_limits<double>::infinity();
    std::size_t violator_count = 0;
};

/// log(kappa / (4 G(N))), the violation level of the resonance test.
[[nodiscard]] inline double log_resonance_level(const ArithContext& ctx, int n) {
    return std::log(ctx.kappa) - std::log(4.0) - ctx.G.log_value(n);
}

/// Finds the m with |alpha - i pi <m,omega>| < kappa / (4 G(N) g(|m|)), if any.
///
/// Throws MultipleResonances when the two smallest normalized violations
/// agree to 1e-14, and AssertionFailure when assert_shifted is set and the
/// shifted eigenvalue is not in NR at level kappa / G(N).
[[nodiscard]] inline ResonanceReport find_resonance(cplx alpha, const ArithContext& ctx, int n,
                                                    bool assert_shifted = true) {
    require(n >= 1, "find_resonance requires N >= 1");
    ResonanceReport rep;
    const double level = std::exp(log_resonance_level(ctx, n));
    const NrAlphaResult scan = check_nr_alpha(alpha, ctx.om(), level, ctx.g, n);
    rep.violator_count = scan.violators.size();
    if (scan.ok) {
        rep.alpha_shifted = alpha;
        rep.margin = std::numeric_limits<double>::infinity();
        return rep;
    }
    if (scan.violators.size() >= 2) {
        const double r0 = std::exp(scan.violators[0].log_ratio);
        const double r1 = std::exp(scan.violators[1].log_ratio);
        if (std::abs(r1 - r0) <= 1e-14 * std::max({1.0, r0, r1}))
            throw Error(ErrorKind::MultipleResonances, "two resonant indices tie: inconsistent kappa, G, g");
    }
    const Offender& best = scan.violators.front();
    rep.m = best.m;
    rep.margin = best.distance;
    rep.alpha_shifted = alpha - cplx(0.0, std::numbers::pi * lattice_dot(best.m, ctx.om()));
    const NrAlphaResult shifted =
        check_nr_alpha(rep.alpha_shifted, ctx.om(), std::exp(std::log(ctx.kappa) - ctx.G.log_value(n)), ctx.g, n);
    rep.shifted_nonresonant = shifted.ok;
    rep.shifted_worst_log_ratio = shifted.worst_log_ratio;
    if (assert_shifted && !shifted.ok)
        throw Error(ErrorKind::AssertionFailure, "shifted eigenvalue is resonant at level kappa / G(N)");
    return rep;
}

// ---------------------------------------------------------------------------
// Resonance elimination
// ---------------------------------------------------------------------------

struct Elimination {
    TorusMap phi;
    TorusMap phi_inv;
    Sl2 a_tilde;
    cplx alpha_tilde{0.0, 0.0};
    EigenData eig;
    double p_cond = 1.0;  ///< ||P|| ||P^{-1}||
};

/// Phi(theta) = P diag(e^{i pi <m,theta>}, e^{-i pi <m,theta>}) P^{-1} on the
/// double torus, so that d_omega Phi = A Phi - Phi A_tilde with
/// A_tilde = P diag(alpha_tilde, -alpha_tilde) P^{-1}.
[[nodiscard]] inline Elimination eliminate_resonance(const Sl2& a, const IntVec& m, Omega omega,
                                                     double tol_defect = 1e-12) {
    require(static_cast<int>(m.size()) == static_cast<int>(omega.size()), "eliminate_resonance: dimension mismatch");
    require(ell1(m) > 0, "eliminate_resonance requires m != 0");
    Elimination el;
    el.eig = eigen(a, tol_defect);
    if (el.eig.defective) throw Error(ErrorKind::Defective, "cannot eliminate a resonance of a defective matrix");
    const int d = static_cast<int>(m.size());
    const Mat2& P = el.eig.P;
    const Mat2& Pi = el.eig.P_inv;
    Mat2 e11 = Mat2::Zero(), e22 = Mat2::Zero();
    e11(0, 0) = 1.0;
    e22(1, 1) = 1.0;
    const Mat2 proj_plus = P * e11 * Pi;
    const Mat2 proj_minus = P * e22 * Pi;
    const FreqIndex kp = FreqIndex::from_half(m);
    const FreqIndex km = -kp;
    // Phi is real exactly when the two projectors are conjugate.
    const bool real = op_norm(Mat2(proj_minus - proj_plus.conjugate())) <=
                      TorusMap::kRealityTol * std::max(1.0, op_norm(proj_plus));
    el.phi = TorusMap::from_entries(d, {{kp, proj_plus}, {km, proj_minus}}, real);
    el.phi_inv = TorusMap::from_entries(d, {{kp, proj_minus}, {km, proj_plus}}, real);
    el.alpha_tilde = el.eig.alpha - cplx(0.0, std::numbers::pi * lattice_dot(m, omega));
    const Mat2 at = el.alpha_tilde * proj_plus - el.alpha_tilde * proj_minus;
    el.a_tilde = Sl2::from_complex(at, 1e-10);
    el.p_cond = el.eig.cond();
    return el;
}

// ---------------------------------------------------------------------------
// Homological equation
// ---------------------------------------------------------------------------

/// X with X^(k) = L_k^{-1}(a' F^(k)) for 0 < |k| <= N and zero elsewhere, so
/// that d_omega X = [A, X] + a' (F^N - F^(0)).
[[nodiscard]] inline TorusMap solve_homological(const Sl2& a, const TorusMap& f, double n, Omega omega,
                                                double a_prime) {
    require(f.lattice() == Lattice::Integer, "solve_homological expects an integer-lattice map");
    const ModeOperatorInverse inv(a, omega);
    std::vector<TorusMap::Entry> out;
    for (const auto& [k, c] : f.entries()) {
        if (k.is_zero() || k.modulus() > n) continue;
        out.emplace_back(k, inv.solve(k, Mat2(a_prime * c)));
    }
    return TorusMap::assemble(f.dim(), std::move(out), f.is_real(), 0.0, std::numeric_limits<double>::infinity());
}

/// |d_omega X - [A, X] - a' F^N + a' F^(0)|_r, computed coefficientwise.
[[nodiscard]] inline double homological_residual(const Sl2& a, const TorusMap& f, const TorusMap& x, double n,
                                                 Omega omega, double a_prime, double r) {
    const TorusMap lhs = subtract(dir_derivative(x, omega), commutator(a.complex(), x));
    const TorusMap rhs = scale(remove_mean(truncate(f, n)), a_prime);
    return weighted_norm(subtract(lhs, rhs), r);
}

// ---------------------------------------------------------------------------
// Conjugation steps
// ---------------------------------------------------------------------------

struct StepOptions {
    bool enforce_preconditions = true;
    bool assert_postconditions = true;
    double residual_rel_tol = 1e-10;
    std::size_t max_modes = TorusMap::kDefaultMaxModes;
    double prune_rel = 0.0;           ///< relative pruning of F', 0 disables
    double series_tol = 1e-300;       ///< absolute tail tolerance for the F' series
    double exp_tol = 1e-300;          ///< absolute tail tolerance for exp(X)
    double tol_defect = 1e-12;
};

struct ResonantParams {
    double a = 1.0 - 1.0 / 196.0;
    double c0 = 0.0;
    double C_prime = 10.0;
};

struct StepOutput {
    Sl2 A_next;
    TorusMap F_next;
    TorusMap Z_step;
    double r_next = 0.0;
    bool resonant = false;
    IntVec m;  ///< empty for a non-resonant step
    cplx alpha{0.0, 0.0};
    cplx alpha_shifted{0.0, 0.0};
    double residual_norm = 0.0;
    double residual_tol = 0.0;
    double contraction_observed = 0.0;
    double contraction_bound = 1.0;
    double F_norm = 0.0;       ///< |F|_r
    double F_next_norm = 0.0;  ///< |F'|_{r'}
    double F_tilde_norm = 0.0; ///< |F~|_{r'} after resonance elimination
    double X_norm = 0.0;       ///< |X|_{r'}
    double Z_norm = 0.0;       ///< |Z_step|_{r'}
    double phi_norm = 0.0;     ///< |Phi|_{r'}, resonant steps only
    double p_cond = 1.0;
    int series_terms = 0;
    double truncation_debt = 0.0;
    std::vector<Verdict> preconditions;
    std::vector<Verdict> postconditions;
    bool preconditions_hold = true;
};

namespace detail {

struct CoreResult {
    TorusMap X;
    TorusMap Z;
    Sl2 A_next;
    TorusMap F_next;
    double x_norm = 0.0;
    int series_terms = 0;
};

/// Conjugates A + F by exp(X), X solving the homological equation with
/// weight a'. F' is assembled as
///   F' = (F - a' F^N) + sum_{k>=1} (U_k - V_k),
///   U_k = -[X, U_{k-1}] / k,      U_0 = F,
///   V_k = -[X, V_{k-1}] / (k+1),  V_0 = a' (F^N - F^(0)),
/// which equals exp(-X)((A + F) exp(X) - d_omega exp(X)) - A' exactly and
/// keeps relative precision when F is tiny.
inline CoreResult conjugate_core(const Sl2& a, const TorusMap& f_in, double n, double a_prime, double r_next,
                                 Omega omega, const StepOptions& opts) {
    CoreResult out;
    const TorusMap f = f_in.without_debt();
    out.X = solve_homological(a, f, n, omega, a_prime);
    out.x_norm = weighted_norm(out.X, r_next);

    const TorusMap f_n = truncate(f, n);
    const TorusMap f_c = remove_mean(f_n);
    TorusMap f_next = subtract(f, scale(f_n, a_prime));
    TorusMap u = f;
    TorusMap v = scale(f_c, a_prime);
    const double fu = weighted_norm(u, r_next);
    const double fv = weighted_norm(v, r_next);
    const double two_x = 2.0 * out.x_norm;
    double tail = 0.0;
    double pw = 1.0;  // (2x)^k / k!
    for (int k = 1; k <= 400; ++k) {
        if (u.empty() && v.empty()) {
            tail = 0.0;
            break;
        }
        u = scale(commutator(out.X, u), -1.0 / k);
        v = scale(commutator(out.X, v), -1.0 / (k + 1));
        f_next = add(f_next, subtract(u, v));
        out.series_terms = k;
        pw *= two_x / k;
        tail = pw * two_x / (k + 1) * std::exp(two_x) * (fu + fv);
        if (tail < opts.series_tol) break;
    }
    // First-order propagation of the incoming debt, plus this step's losses.
    const double carried = f_in.truncation_debt() * (2.0 * std::exp(two_x) - 1.0);
    f_next.add_debt(carried + tail, std::min(r_next, f_in.debt_radius()));
    if (opts.prune_rel > 0.0) f_next = prune_relative(f_next, r_next, opts.prune_rel);
    f_next = cap_support(f_next, opts.max_modes, r_next);
    out.F_next = std::move(f_next);

    out.A_next = Sl2::from_complex(Mat2(a.complex() + a_prime * f.mean()), 1e-10);

    if (out.x_norm > 1.0) throw Error(ErrorKind::OutsideRegime, "|X|_{r'} > 1: conjugation outside the small regime");
    ExpResult ex = exp_map(out.X, r_next, opts.exp_tol);
    out.Z = cap_support(ex.value, opts.max_modes, r_next);
    return out;
}

}  // namespace detail

/// |d_omega Z - (A + F) Z + Z (B + F')|_r.
[[nodiscard]] inline double conjugation_residual(const Sl2& a, const TorusMap& f, const TorusMap& z, const Sl2& b,
                                                 const TorusMap& f_next, Omega omega, double r) {
    const TorusMap lhs = dir_derivative(z, omega);
    const TorusMap left = mul(add_constant(f.without_debt(), a.complex()), z.without_debt());
    const TorusMap right = mul(z.without_debt(), add_constant(f_next.without_debt(), b.complex()));
    return weighted_norm(add(subtract(lhs, left), right), r);
}

namespace detail {

inline void finish_step(StepOutput& out, const Sl2& a, const TorusMap& f, double r, Omega omega,
                        const StepOptions& opts) {
    out.F_norm = weighted_norm(f, r);
    out.F_next_norm = weighted_norm(out.F_next, out.r_next);
    out.Z_norm = weighted_norm(out.Z_step, out.r_next);
    out.truncation_debt = out.F_next.truncation_debt();
    out.contraction_observed = out.F_norm > 0.0 ? out.F_next_norm / out.F_norm : 0.0;
    out.residual_norm = conjugation_residual(a, f, out.Z_step, out.A_next, out.F_next, omega, out.r_next);
    double dz_scale = 0.0;
    for (double w : omega) dz_scale += std::abs(w);
    dz_scale *= 2.0 * std::numbers::pi * out.Z_step.max_modulus();
    out.residual_tol = opts.residual_rel_tol * (1.0 + out.F_norm) + out.Z_norm * out.truncation_debt +
                       out.Z_norm * f.truncation_debt() +
                       (dz_scale + a.norm() + out.F_norm + out.A_next.norm() + out.F_next_norm) *
                           out.Z_step.truncation_debt();
}

}  // namespace detail

/// Non-resonant step: conjugation by exp(X) with X from the homological
/// equation weighted by a'. Preconditions are evaluated and recorded;
/// with opts.enforce_preconditions any failure throws PreconditionFailure.
/// `known` may carry find_resonance(alpha, N) from the caller to skip the rescan.
[[nodiscard]] inline StepOutput step_nonresonant(const Sl2& a, const TorusMap& f, double r, double r_next, int n,
                                                 double a_prime, const ArithContext& ctx,
                                                 const StepOptions& opts = {},
                                                 const ResonanceReport* known = nullptr) {
    require(n >= 1, "step_nonresonant requires N >= 1");
    require(a_prime > 0.0 && a_prime < 1.0, "step_nonresonant requires 0 < a' < 1");
    require(f.dim() == ctx.dim(), "step_nonresonant: dimension mismatch");
    StepOutput out;
    out.r_next = r_next;
    const EigenData eig = eigen(a, opts.tol_defect);
    out.alpha = eig.defective ? cplx(0.0, 0.0) : eig.alpha;
    out.alpha_shifted = out.alpha;

    const double eps = weighted_norm(f, r) + f.truncation_debt();
    const ResonanceReport res = known ? *known : find_resonance(out.alpha, ctx, n, false);
    out.preconditions.push_back({"nonresonance", !res.m.has_value(), static_cast<double>(res.violator_count), 0.0});
    out.preconditions.push_back(make_verdict(
        "petitesse3", std::log(2.0) + ctx.G.log_value(n) + ctx.g.log_value(n) + std::log(eps),
        std::log(ctx.kappa) + std::log(1.0 - a_prime) - std::log(2.0), true));
    out.preconditions.push_back(make_verdict("N_gap", -2.0 * std::numbers::pi * n * (r - r_next), std::log(1.0 - a_prime), true));
    out.preconditions.push_back({"strip", r_next < r && r_next > 0.0, r_next, r});
    out.preconditions_hold = all_ok(out.preconditions);
    if (opts.enforce_preconditions && !out.preconditions_hold)
        throw Error(ErrorKind::PreconditionFailure, "non-resonant step: " + failed_names(out.preconditions));
    if (eps == 0.0) {
        out.A_next = a;
        out.F_next = TorusMap::zero(f.dim());
        out.Z_step = TorusMap::identity(f.dim());
    } else {
        detail::CoreResult core = detail::conjugate_core(a, f, n, a_prime, r_next, ctx.om(), opts);
        out.A_next = core.A_next;
        out.F_next = std::move(core.F_next);
        out.Z_step = std::move(core.Z);
        out.X_norm = core.x_norm;
        out.series_terms = core.series_terms;
        const double x_bound_log = std::log(4.0 * a_prime) + ctx.G.log_value(n) + ctx.g.log_value(n) +
                                   std::log(weighted_norm(truncate(f, n), r_next)) - std::log(ctx.kappa);
        out.postconditions.push_back(make_verdict("X_bound", std::log(core.x_norm), x_bound_log, true));
    }
    detail::finish_step(out, a, f, r, ctx.om(), opts);
    out.contraction_bound = std::sqrt(1.0 - a_prime);
    out.postconditions.push_back(make_verdict("contraction", out.contraction_observed, out.contraction_bound));
    out.postconditions.push_back(make_verdict("residual", out.residual_norm, out.residual_tol));
    if (opts.assert_postconditions) {
        if (out.residual_norm > out.residual_tol)
            throw Error(ErrorKind::AssertionFailure, "non-resonant step: conjugation residual above tolerance");
        if (out.preconditions_hold && out.contraction_observed > out.contraction_bound)
            throw Error(ErrorKind::AssertionFailure, "non-resonant step: contraction above sqrt(1 - a')");
    }
    return out;
}

/// Strip width after a resonant step, r/2 - c0 log(Gg)(N+1) / (4 pi N).
[[nodiscard]] inline double resonant_strip(double r, int n, double c0, const ArithContext& ctx) {
    const ApproxFn gg = ApproxFn::product(ctx.G, ctx.g);
    return 0.5 * r - c0 * gg.log_value(n + 1.0) / (4.0 * std::numbers::pi * n);
}

/// Resonant step: eliminate the resonance with Phi, then conjugate with a' = 1.
[[nodiscard]] inline StepOutput step_resonant(const Sl2& a, const TorusMap& f, double r, int n,
                                              const ResonantParams& params, const ArithContext& ctx,
                                              const StepOptions& opts = {},
                                              const ResonanceReport* known = nullptr) {
    require(n >= 1, "step_resonant requires N >= 1");
    require(f.dim() == ctx.dim(), "step_resonant: dimension mismatch");
    StepOutput out;
    out.resonant = true;
    const EigenData eig = eigen(a, opts.tol_defect);
    out.alpha = eig.defective ? cplx(0.0, 0.0) : eig.alpha;
    const ResonanceReport res = known ? *known : find_resonance(out.alpha, ctx, n, false);
    out.r_next = resonant_strip(r, n, params.c0, ctx);

    const ApproxFn gg = ApproxFn::product(ctx.G, ctx.g);
    const double eps = weighted_norm(f, r) + f.truncation_debt();
    const double one_minus_a = 1.0 - params.a;
    out.preconditions.push_back({"resonance", res.m.has_value(), static_cast<double>(res.violator_count), 1.0});
    out.preconditions.push_back({"shifted_nonresonance", res.shifted_nonresonant, res.shifted_worst_log_ratio, 0.0, true});
    out.preconditions.push_back(make_verdict(
        "petitesse", std::log(2.0) + 2.0 * (ctx.G.log_value(n) + ctx.g.log_value(n)) + std::log(eps),
        2.0 * std::log(one_minus_a) + 2.0 * std::log(ctx.kappa) - std::log(2.0), true));
    out.preconditions.push_back(make_verdict(
        "petitesse2", 1.0 + std::log(params.C_prime) - params.c0 * gg.log_value(n + 1.0), std::log(one_minus_a), true));
    out.preconditions.push_back(make_verdict(
        "strip_width", 2.0 * (ctx.G.log_value(n) + ctx.g.log_value(n)) / (std::numbers::pi * n), r));
    out.preconditions.push_back({"strip_positive", out.r_next > 0.0, out.r_next, 0.0});
    out.preconditions_hold = all_ok(out.preconditions);
    if (opts.enforce_preconditions && !out.preconditions_hold)
        throw Error(ErrorKind::PreconditionFailure, "resonant step: " + failed_names(out.preconditions));
    if (!res.m) throw Error(ErrorKind::PreconditionFailure, "resonant step: no resonant index");
    if (eig.defective) throw Error(ErrorKind::Defective, "resonant step on a defective matrix");
    require(out.r_next > 0.0, "resonant step leaves a non-positive strip");

    out.m = *res.m;
    const Elimination el = eliminate_resonance(a, out.m, ctx.om(), opts.tol_defect);
    out.alpha_shifted = el.alpha_tilde;
    out.p_cond = el.p_cond;
    out.phi_norm = weighted_norm(el.phi, out.r_next);
    const TorusMap f_tilde = cap_support(mul(mul(el.phi_inv, f), el.phi), opts.max_modes, out.r_next);
    out.F_tilde_norm = weighted_norm(f_tilde, out.r_next);
    out.postconditions.push_back({"F_tilde_integer_lattice", f_tilde.lattice() == Lattice::Integer, 0.0, 0.0});

    if (f_tilde.empty() && f_tilde.truncation_debt() == 0.0) {
        out.A_next = el.a_tilde;
        out.F_next = TorusMap::zero(f.dim());
        out.Z_step = el.phi;
    } else {
        detail::CoreResult core = detail::conjugate_core(el.a_tilde, f_tilde, n, 1.0, out.r_next, ctx.om(), opts);
        out.A_next = core.A_next;
        out.F_next = std::move(core.F_next);
        out.X_norm = core.x_norm;
        out.series_terms = core.series_terms;
        out.Z_step = cap_support(mul(el.phi, core.Z), opts.max_modes, out.r_next);
    }
    detail::finish_step(out, a, f, r, ctx.om(), opts);
    out.contraction_bound = one_minus_a;
    out.postconditions.push_back(make_verdict("contraction", out.contraction_observed, out.contraction_bound));
    out.postconditions.push_back(make_verdict("residual", out.residual_norm, out.residual_tol));
    out.postconditions.push_back(make_verdict("alpha_tilde_small", std::log(std::abs(el.alpha_tilde)),
                                              std::log(ctx.kappa) - std::log(4.0) - ctx.G.log_value(n), true));
    if (opts.assert_postconditions) {
        if (out.residual_norm > out.residual_tol)
            throw Error(ErrorKind::AssertionFailure, "resonant step: conjugation residual above tolerance");
        if (out.preconditions_hold && out.contraction_observed > out.contraction_bound)
            throw Error(ErrorKind::AssertionFailure, "resonant step: contraction above 1 - a");
    }
    return out;
}

}  // namespace kamred
