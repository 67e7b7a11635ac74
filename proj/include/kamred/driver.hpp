#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "kamred/arithmetics.hpp"
#include "kamred/error.hpp"
#include "kamred/kam_step.hpp"
#include "kamred/schedule.hpp"
#include "kamred/sl2.hpp"
#include "kamred/torus_map.hpp"

namespace kamred {

/// State n of the iteration, plus the step taken from it (if any).
struct StepRecord {
    int n = 0;
    double r_n = 0.0;
    int N_n = 0;
    double eps_bound = 0.0;      ///< eps_n, 0 when below the double range
    double log_eps_bound = 0.0;
    double F_norm = 0.0;         ///< |F_n|_{r_n}
    bool resonant = false;
    IntVec m;                    ///< m_n, empty when no resonance was removed
    cplx alpha{0.0, 0.0};        ///< alpha_n
    double residual = 0.0;       ///< |d Z_n - (A+F) Z_n + Z_n (A_n + F_n)|_{r_n}
    double residual_tol = 0.0;
    double step_residual = std::numeric_limits<double>::quiet_NaN();
    double step_residual_tol = std::numeric_limits<double>::quiet_NaN();
    double contraction = std::numeric_limits<double>::quiet_NaN();  ///< |F_{n+1}| / |F_n|, nan on the last row
    double truncation_debt = 0.0;
    std::size_t modes = 0;       ///< stored Fourier modes of F_n
    double step_seconds = 0.0;   ///< wall time of the step; not serialized
    Sl2 A_n;
    std::vector<Verdict> preconditions;
    std::vector<Verdict> postconditions;
};

struct RunTrace {
    std::vector<StepRecord> records;
    int resonances_after_n0 = 0;
};

enum class RunStatus { Reduced, Stalled, PreconditionFailure };

[[nodiscard]] inline std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Reduced: return "Reduced";
        case RunStatus::Stalled: return "Stalled";
        case RunStatus::PreconditionFailure: return "PreconditionFailure";
    }
    return "Unknown";
}

struct Certificate {
    RunStatus status = RunStatus::Stalled;
    std::string reason;
    Sl2 B;
    TorusMap Z;
    double r_final = 0.0;
    double residual = 0.0;        ///< |d Z - (A+F) Z + Z B|_{r_final}, includes the unremoved F_n
    double residual_bound = 0.0;  ///< cert_tol |Z| plus the accumulated floating-point allowance
    double F_final_norm = 0.0;
    double rotation_sum = 0.0;    ///< pi sum_j <m_j, omega>
    int steps = 0;
    int resonances_after_n0 = 0;
    std::vector<Verdict> schedule_verdicts;
};

struct RunOptions {
    int max_steps = 200;
    double cert_tol = -1.0;  ///< negative selects max(1e-14 eps0, 1e-250)
    StepOptions step = [] {
        StepOptions o;
        o.enforce_preconditions = false;
        o.assert_postconditions = false;
        return o;
    }();
};

struct RunResult {
    RunTrace trace;
    Certificate certificate;
};

[[nodiscard]] inline double default_cert_tol(const KamSchedule& s) { return std::max(1e-14 * s.eps0, 1e-250); }

/// Iterates KAM steps from A + F until |F_n|_{r_n} <= cert_tol or max_steps.
[[nodiscard]] inline RunResult run(const Sl2& a0, const TorusMap& f0, const ArithContext& ctx, const KamSchedule& s,
                                   const RunOptions& opts = {}) {
    require(f0.dim() == ctx.dim(), "run: dimension mismatch between F and omega");
    require(f0.lattice() == Lattice::Integer, "run: F must live on the integer lattice");
    RunResult out;
    Certificate& cert = out.certificate;
    cert.schedule_verdicts = s.verdicts;
    const double cert_tol = opts.cert_tol >= 0.0 ? opts.cert_tol : default_cert_tol(s);
    const double f0_norm = weighted_norm(f0, s.r0);
    const ResonantParams rparams{s.a, s.c0, s.C_prime};

    Sl2 a_n = a0;
    TorusMap f_n = f0;
    TorusMap z = TorusMap::identity(f0.dim());
    double r = s.r0;
    // Allowance for the global residual: R_{n+1} <= R_n |Z'| + |Z_n| (step residual).
    double global_tol = opts.step.residual_rel_tol * (1.0 + f0_norm);

    auto finish = [&](RunStatus st, std::string reason, int n) {
        cert.status = st;
        cert.reason = std::move(reason);
        cert.B = a_n;
        cert.Z = z;
        cert.r_final = r;
        cert.steps = n;
        cert.resonances_after_n0 = out.trace.resonances_after_n0;
        cert.F_final_norm = weighted_norm(f_n, r) + f_n.truncation_debt();
        cert.residual = conjugation_residual(a0, f0, z, a_n, TorusMap::zero(f0.dim()), ctx.om(), r);
        const double z_norm = weighted_norm(z, r);
        cert.residual_bound = z_norm * std::max(cert_tol, cert.F_final_norm) + global_tol;
    };

    for (int n = 0;; ++n) {
        StepRecord rec;
        rec.n = n;
        rec.r_n = r;
        rec.log_eps_bound = s.log_eps(n);
        rec.eps_bound = s.eps(n);
        rec.A_n = a_n;
        rec.F_norm = weighted_norm(f_n, r) + f_n.truncation_debt();
        rec.truncation_debt = f_n.truncation_debt();
        rec.modes = f_n.entries().size();
        const EigenData eig = eigen(a_n, opts.step.tol_defect);
        rec.alpha = eig.defective ? cplx(0.0, 0.0) : eig.alpha;
        rec.residual = conjugation_residual(a0, f0, z, a_n, f_n, ctx.om(), r);
        rec.residual_tol = global_tol + weighted_norm(z, r) * f_n.truncation_debt();
        try {
            rec.N_n = s.N(n);
        } catch (const Error&) {
            rec.N_n = 0;
        }
        if (rec.F_norm <= cert_tol) {
            out.trace.records.push_back(rec);
            finish(RunStatus::Reduced, "", n);
            if (cert.r_final < s.r_floor()) {
                cert.status = RunStatus::Stalled;
                cert.reason = "strip_below_floor";
            }
            return out;
        }
        if (rec.N_n == 0) {
            out.trace.records.push_back(rec);
            finish(RunStatus::Stalled, "N_n unavailable", n);
            return out;
        }
        if (std::log(rec.F_norm) > rec.log_eps_bound + 1e-12) {
            out.trace.records.push_back(rec);
            if (n == 0)
                finish(RunStatus::PreconditionFailure, "|F|_{r0} exceeds eps0", n);
            else
                finish(RunStatus::Stalled, "schedule_violation", n);
            return out;
        }
        if (n >= opts.max_steps) {
            out.trace.records.push_back(rec);
            finish(RunStatus::Stalled, "max_steps", n);
            return out;
        }

        StepOutput st;
        const auto t_start = std::chrono::steady_clock::now();
        try {
            const ResonanceReport res = find_resonance(rec.alpha, ctx, rec.N_n, false);
            if (!res.m || eig.defective) {
                const double r_next = r - s.c0 * std::abs(s.log_one_minus_a()) / (2.0 * std::numbers::pi * rec.N_n);
                st = step_nonresonant(a_n, f_n, r, r_next, rec.N_n, s.a, ctx, opts.step, &res);
            } else {
                st = step_resonant(a_n, f_n, r, rec.N_n, rparams, ctx, opts.step, &res);
            }
        } catch (const Error& e) {
            out.trace.records.push_back(rec);
            const RunStatus status =
                e.kind() == ErrorKind::PreconditionFailure ? RunStatus::PreconditionFailure : RunStatus::Stalled;
            finish(status, e.what(), n);
            return out;
        }
        rec.resonant = st.resonant;
        rec.m = st.m;
        rec.step_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        rec.step_residual = st.residual_norm;
        rec.step_residual_tol = st.residual_tol;
        rec.contraction = st.contraction_observed;
        rec.preconditions = st.preconditions;
        rec.postconditions = st.postconditions;
        out.trace.records.push_back(rec);

        global_tol = global_tol * std::max(1.0, weighted_norm(st.Z_step, st.r_next)) +
                     weighted_norm(z, st.r_next) * st.residual_tol;
        if (st.resonant) {
            cert.rotation_sum += std::numbers::pi * lattice_dot(st.m, ctx.om());
            if (n >= s.n0) ++out.trace.resonances_after_n0;
        }
        z = cap_support(mul(z, st.Z_step), opts.step.max_modes, st.r_next);
        a_n = st.A_next;
        f_n = std::move(st.F_next);
        r = st.r_next;
    }
}

// ---------------------------------------------------------------------------
// Post-hoc audit
// ---------------------------------------------------------------------------

struct AuditReport {
    bool ok = true;
    std::vector<Verdict> items;  ///< one entry per checked inequality and index
};

namespace detail {

inline void push(AuditReport& rep, Verdict v) {
    rep.ok = rep.ok && v.ok;
    rep.items.push_back(std::move(v));
}

}  // namespace detail

/// Checks the iteration invariants and the resonance budget on a trace:
///  - |F_n| <= eps_n, |m_n| <= N_n, sum_{j<=n} |m_j| <= N_n^2
///  - |alpha_n - i pi <m_n, omega>| <= kappa / (4 G(N_n)) at resonant n
///  - |alpha_{n-1} - i pi <m_{n-1}, omega> -+ alpha_n| <= sqrt(eps_{n-1})
///  - N strictly increases between consecutive resonant indices
///  - r_n >= r0 / 4^{n0+1} when no resonance occurs from n0 on
///  - global residual within its tolerance
///  - kappa' > kappa sup_{t >= n0} g(t^2) / G(t), and kappa' > kappa g(S_n) / G(N_n) for n > n0
///  - rho_target arithmetic against (kappa', g) up to rho_scan_N, when given
[[nodiscard]] inline AuditReport resonance_budget_check(const RunTrace& trace, const KamSchedule& s,
                                                        const ArithContext& ctx,
                                                        std::optional<double> rho_target = std::nullopt,
                                                        int rho_scan_N = 1000) {
    AuditReport rep;
    const auto& recs = trace.records;
    long long sum_m = 0;
    int last_resonant_N = -1;
    bool resonance_after_n0 = false;
    for (const auto& r : recs)
        if (r.resonant && r.n >= s.n0) resonance_after_n0 = true;

    const RatioBound rb = ratio_bounded(ctx.g, ctx.G, std::max(1.0, static_cast<double>(s.n0)), 1e6, 2000);
    detail::push(rep, {"kappa_prime_hypothesis", rb.bounded && std::log(s.kappa_prime) > std::log(s.kappa) + rb.log_sup_estimate,
                       std::log(s.kappa) + rb.log_sup_estimate, std::log(s.kappa_prime), true});

    for (std::size_t i = 0; i < recs.size(); ++i) {
        const StepRecord& r = recs[i];
        const std::string tag = "[" + std::to_string(r.n) + "]";
        detail::push(rep, make_verdict("item4_F_le_eps" + tag, std::log(r.F_norm), r.log_eps_bound + 1e-12, true));
        detail::push(rep, make_verdict("item5_residual" + tag, r.residual, r.residual_tol));
        if (!resonance_after_n0)
            detail::push(rep, make_verdict("item1_strip_floor" + tag, s.r_floor(), r.r_n));
        if (r.resonant) {
            const int mm = ell1(r.m);
            sum_m += mm;
            detail::push(rep, make_verdict("item3_m_le_N" + tag, mm, r.N_n));
            const double dist = std::abs(r.alpha - cplx(0.0, std::numbers::pi * lattice_dot(r.m, ctx.om())));
            detail::push(rep, make_verdict("item2_alpha_near_lattice" + tag, std::log(dist),
                                           std::log(s.kappa) - std::log(4.0) - s.G.log_value(r.N_n), true));
            if (last_resonant_N >= 0)
                detail::push(rep, {"interlacing" + tag, r.N_n > last_resonant_N, static_cast<double>(last_resonant_N),
                                   static_cast<double>(r.N_n)});
            last_resonant_N = r.N_n;
        }
        detail::push(rep, make_verdict("sum_m_le_N2" + tag, static_cast<double>(sum_m),
                                       static_cast<double>(r.N_n) * static_cast<double>(r.N_n)));
        if (r.n > s.n0 && sum_m > 0)
            detail::push(rep, {"kappa_chain" + tag,
                               std::log(s.kappa_prime) > std::log(s.kappa) - s.G.log_value(r.N_n) + s.g.log_value(sum_m),
                               std::log(s.kappa) - s.G.log_value(r.N_n) + s.g.log_value(sum_m),
                               std::log(s.kappa_prime), true});
        if (i > 0) {
            const StepRecord& p = recs[i - 1];
            const cplx shift = p.resonant ? cplx(0.0, std::numbers::pi * lattice_dot(p.m, ctx.om())) : cplx(0.0, 0.0);
            const double gap = std::min(std::abs(p.alpha - shift - r.alpha), std::abs(p.alpha - shift + r.alpha));
            detail::push(rep, make_verdict("item6_alpha_drift" + tag, gap, std::exp(0.5 * p.log_eps_bound)));
        }
    }
    if (rho_target) {
        const NrAlphaResult nr = check_rho_arithmetic(*rho_target, ctx.om(), s.kappa_prime, s.g, rho_scan_N);
        detail::push(rep, {"rho_arithmetic", nr.ok, 0.0, nr.worst_log_ratio, true});
    }
    return rep;
}

}  // namespace kamred
