#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "kamred/approx_fn.hpp"
#include "kamred/error.hpp"
#include "kamred/kam_step.hpp"

namespace kamred {

/// How make_schedule treats an eps0 that fails the smallness conditions.
enum class EpsPolicy {
    Strict,        ///< both conditions, halve until they pass
    IntegralOnly,  ///< only the tail-integral condition, halve until it passes
    Operational,   ///< keep eps0 as given, record the verdicts
};

[[nodiscard]] inline std::string to_string(EpsPolicy p) {
    switch (p) {
        case EpsPolicy::Strict: return "strict";
        case EpsPolicy::IntegralOnly: return "integral_only";
        case EpsPolicy::Operational: return "operational";
    }
    return "unknown";
}

[[nodiscard]] inline EpsPolicy eps_policy_from_string(const std::string& s) {
    if (s == "strict") return EpsPolicy::Strict;
    if (s == "integral_only") return EpsPolicy::IntegralOnly;
    if (s == "operational") return EpsPolicy::Operational;
    throw Error(ErrorKind::Parse, "unknown eps0 policy '" + s + "'");
}

struct ScheduleInputs {
    double kappa = 1.0;
    double kappa_prime = 1.0;
    ApproxFn G = ApproxFn::power(2.0);
    ApproxFn g = ApproxFn::power(2.0);
    double r0 = 0.5;
    int n0 = 0;
    double eps0 = 1e-10;  ///< starting value for the search, or the value kept
    std::optional<double> log_eps0;  ///< overrides eps0 when it is below the double range
    std::optional<double> a;
    double C_prime = 10.0;
    EpsPolicy policy = EpsPolicy::Strict;
};

/// Parameters of the iteration and the derived sequences eps_n and N_n.
struct KamSchedule {
    double kappa = 1.0;
    double kappa_prime = 1.0;
    ApproxFn G = ApproxFn::power(2.0);
    ApproxFn g = ApproxFn::power(2.0);
    ApproxFn Gg = ApproxFn::power(4.0);
    double r0 = 0.5;
    int n0 = 0;
    double a = 1.0 - 1.0 / 196.0;
    double a_bar = 1.0 / 196.0;
    double c0 = 0.0;
    double eps0 = 0.0;
    double log_eps0 = 0.0;
    double C_prime = 10.0;
    EpsPolicy policy = EpsPolicy::Strict;
    std::vector<Verdict> verdicts;  ///< condepsilon, condepsilon2

    [[nodiscard]] double log_one_minus_a() const { return std::log1p(-a); }

    [[nodiscard]] double log_eps(int n) const { return 0.5 * n * log_one_minus_a() + log_eps0; }
    [[nodiscard]] double eps(int n) const { return std::exp(log_eps(n)); }

    /// log of (1-a)^2 kappa^2 / (4 eps_n).
    [[nodiscard]] double log_N_bound(int n) const {
        return 2.0 * log_one_minus_a() + 2.0 * std::log(kappa) - std::log(4.0) - log_eps(n);
    }

    /// Largest integer N with (Gg)(N)^2 <= (1-a)^2 kappa^2 / (4 eps_n).
    [[nodiscard]] int N(int n) const {
        require(n >= 0, "sequence_N requires n >= 0");
        const double bound = log_N_bound(n);
        const double t = Gg.log_inverse(0.5 * bound);
        if (!(t < 2147483000.0)) throw Error(ErrorKind::OutsideRegime, "N_n exceeds the integer range");
        long long k = static_cast<long long>(std::floor(t));
        auto fits = [&](long long v) { return v >= 1 && 2.0 * Gg.log_value(static_cast<double>(v)) <= bound; };
        while (k >= 1 && !fits(k)) --k;
        while (fits(k + 1)) ++k;
        if (k < 1) throw Error(ErrorKind::OutsideRegime, "N_n does not exist: eps_n too large for (G g)(1)");
        return static_cast<int>(k);
    }

    [[nodiscard]] double r_floor() const { return r0 / std::pow(4.0, n0 + 1); }
};

[[nodiscard]] inline int sequence_N(const KamSchedule& s, int n) { return s.N(n); }

/// min(1/196, 1/(Gg)(2)^2).
[[nodiscard]] inline double a_bar_of(const ApproxFn& gg) {
    return std::min(1.0 / 196.0, std::exp(-2.0 * gg.log_value(2.0)));
}

/// r0 / (4^{n0+3} (sup_{t in [1, n0]} log(Gg)(t+1) / t + 1)); the sup is 0 for n0 < 1.
[[nodiscard]] inline double c0_of(const ApproxFn& gg, double r0, int n0) {
    double sup = 0.0;
    if (n0 >= 1) {
        const int samples = 4096;
        sup = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= samples; ++i) {
            const double t = 1.0 + (n0 - 1.0) * i / samples;
            sup = std::max(sup, gg.log_value(t + 1.0) / t);
        }
        for (int k = 1; k <= n0; ++k) sup = std::max(sup, gg.log_value(k + 1.0) / k);
    }
    return r0 / (std::pow(4.0, n0 + 3) * (sup + 1.0));
}

/// Lower limit of the tail-integral condition, (Gg)^{-1}(kappa / (2 (1-a)^{(n0-5)/4} sqrt(eps0))).
[[nodiscard]] inline double condepsilon_lower(const ApproxFn& gg, double kappa, double a, int n0, double log_eps0) {
    const double log_arg = std::log(kappa) - std::log(2.0) - 0.25 * (n0 - 5.0) * std::log1p(-a) - 0.5 * log_eps0;
    return gg.log_inverse(log_arg);
}

/// Tail-integral smallness condition, evaluated in log space.
[[nodiscard]] inline Verdict check_condepsilon(const ApproxFn& gg, double kappa, double a, double r0, int n0,
                                               double log_eps0) {
    const double lower = std::max(1.0, condepsilon_lower(gg, kappa, a, n0, log_eps0));
    const double tail = tail_integral(gg, lower, 2.0).value;
    return make_verdict("condepsilon", tail, r0 / std::pow(4.0, n0 + 2));
}

/// e C' eps0^{c0/4} <= (1-a)^2 kappa^2, in log form.
[[nodiscard]] inline Verdict check_condepsilon2(double kappa, double a, double c0, double C_prime, double log_eps0) {
    return make_verdict("condepsilon2", 1.0 + std::log(C_prime) + 0.25 * c0 * log_eps0,
                        2.0 * std::log1p(-a) + 2.0 * std::log(kappa), true);
}

[[nodiscard]] inline KamSchedule make_schedule(const ScheduleInputs& in) {
    require(in.kappa > 0.0 && in.kappa_prime > 0.0 && in.r0 > 0.0, "make_schedule requires kappa, kappa', r0 > 0");
    require(in.n0 >= 0, "make_schedule requires n0 >= 0");
    require(in.log_eps0.has_value() || in.eps0 > 0.0, "make_schedule requires a positive eps0");
    require(in.C_prime > 0.0, "make_schedule requires C' > 0");
    KamSchedule s;
    s.kappa = in.kappa;
    s.kappa_prime = in.kappa_prime;
    s.G = in.G;
    s.g = in.g;
    s.Gg = ApproxFn::product(in.G, in.g);
    s.r0 = in.r0;
    s.n0 = in.n0;
    s.C_prime = in.C_prime;
    s.policy = in.policy;
    s.a_bar = a_bar_of(s.Gg);
    s.a = in.a.value_or(1.0 - s.a_bar);
    require(s.a >= 1.0 - s.a_bar - 1e-15 && s.a < 1.0, "a must lie in [1 - a_bar, 1)");
    s.c0 = c0_of(s.Gg, s.r0, s.n0);

    auto passes = [&](double log_eps0) {
        const bool integral = check_condepsilon(s.Gg, s.kappa, s.a, s.r0, s.n0, log_eps0).ok;
        if (in.policy == EpsPolicy::IntegralOnly) return integral;
        return integral && check_condepsilon2(s.kappa, s.a, s.c0, s.C_prime, log_eps0).ok;
    };
    double log_eps0 = in.log_eps0.value_or(std::log(in.eps0));
    require(log_eps0 > -std::numeric_limits<double>::infinity(), "make_schedule requires a finite log eps0");
    if (in.policy != EpsPolicy::Operational) {
        const double floor_log = std::log(1e-300);
        while (!passes(log_eps0)) {
            log_eps0 -= std::numbers::ln2;
            if (log_eps0 < floor_log)
                throw Error(ErrorKind::NoFeasibleEpsilon, "no eps0 >= 1e-300 satisfies the smallness conditions");
        }
    }
    s.log_eps0 = log_eps0;
    s.eps0 = std::exp(log_eps0);
    s.verdicts.push_back(check_condepsilon(s.Gg, s.kappa, s.a, s.r0, s.n0, log_eps0));
    s.verdicts.push_back(check_condepsilon2(s.kappa, s.a, s.c0, s.C_prime, log_eps0));
    // Existence of N_0: eps0 <= (1-a)^2 kappa^2 / (4 e (Gg)(1)^2).
    s.verdicts.push_back(make_verdict(
        "N_exists", log_eps0,
        2.0 * std::log1p(-s.a) + 2.0 * std::log(s.kappa) - std::log(4.0) - 1.0 - 2.0 * s.Gg.log_value(1.0), true));
    return s;
}

// ---------------------------------------------------------------------------
// Explicit smallness thresholds
// ---------------------------------------------------------------------------

struct SmallnessCase {
    enum class Kind { Dioph, Exp, ExpLog };
    Kind kind = Kind::Dioph;
    double p1 = 4.0;  ///< Dioph: mu + mu'; Exp: alpha (the larger); ExpLog: delta
    double p2 = 0.0;  ///< Exp: alpha'; ExpLog: alpha

    static SmallnessCase dioph(double total_exponent) { return {Kind::Dioph, total_exponent, 0.0}; }
    static SmallnessCase exp(double alpha, double alpha_p) { return {Kind::Exp, alpha, alpha_p}; }
    static SmallnessCase exp_log(double delta, double alpha) { return {Kind::ExpLog, delta, alpha}; }

    /// The product G g this case describes.
    [[nodiscard]] ApproxFn product() const {
        switch (kind) {
            case Kind::Dioph: return ApproxFn::power(p1);
            case Kind::Exp: return ApproxFn::product(ApproxFn::exp_pow(p1), ApproxFn::exp_pow(p2));
            case Kind::ExpLog: return ApproxFn::product(ApproxFn::exp_log(p1), ApproxFn::exp_pow(p2));
        }
        return ApproxFn::power(p1);
    }
};

struct EpsValue {
    double eps0 = 0.0;      ///< may underflow to 0
    double log_eps0 = 0.0;  ///< may be -inf when even the logarithm overflows
};

/// Closed-form eps0 sufficient for the tail-integral condition.
[[nodiscard]] inline EpsValue smallness_explicit(const SmallnessCase& c, double kappa, double r0, int n0) {
    require(kappa > 0.0 && r0 > 0.0 && n0 >= 0, "smallness_explicit: invalid parameters");
    EpsValue out;
    const double four_n = std::pow(4.0, n0);
    switch (c.kind) {
        case SmallnessCase::Kind::Dioph: {
            require(c.p1 > 2.0, "Dioph case needs mu + mu' > 2");
            out.log_eps0 = 4.0 * c.p1 * std::log(r0 / (64.0 * four_n * c.p1)) + std::log(kappa);
            break;
        }
        case SmallnessCase::Kind::Exp: {
            const double alpha = c.p1;
            require(alpha > 0.0 && alpha < 1.0 && c.p2 < alpha, "Exp case needs alpha' < alpha < 1");
            const double base = 2.0 * 16.0 * four_n / (r0 * (1.0 - alpha));
            out.log_eps0 = std::log(kappa / 4.0) - 2.0 * std::pow(base, alpha / (1.0 - alpha));
            break;
        }
        case SmallnessCase::Kind::ExpLog: {
            const double delta = c.p1, alpha = c.p2;
            require(delta > 1.0 && alpha < 1.0, "ExpLog case needs delta > 1 and alpha < 1");
            const double x = 64.0 * four_n / (r0 * (delta - 1.0) * (1.0 - alpha));
            const double u = std::pow(x, 1.0 / ((delta - 1.0) * (1.0 - alpha)));  // log of the evaluation point
            // log (Gg)(e^u) = e^u / u^delta + e^{alpha u}
            const double lg = std::exp(u - delta * std::log(u)) + std::exp(alpha * u);
            out.log_eps0 = std::log(kappa / 4.0) - 2.0 * lg;
            break;
        }
    }
    out.eps0 = std::exp(out.log_eps0);
    return out;
}

struct BrjunoThreshold {
    EpsValue value;
    double integral = 0.0;  ///< int_1^inf log(Gg)(t) / t^2 dt
    Verdict condepsilon;    ///< the threshold checked against the tail-integral condition
};

/// eps0 = exp(-r0/4^{n0} - |log(kappa / (2 (1-a)^{n0}))| - 2 int_1^inf log(Gg)/t^2).
[[nodiscard]] inline BrjunoThreshold brjuno_sum_threshold(double kappa, double r0, int n0, double a,
                                                          const ApproxFn& G, const ApproxFn& g) {
    const ApproxFn gg = ApproxFn::product(G, g);
    BrjunoThreshold out;
    out.integral = tail_integral(gg, 1.0, 2.0).value;
    out.value.log_eps0 = -r0 / std::pow(4.0, n0) - std::abs(std::log(kappa) - std::log(2.0) - n0 * std::log1p(-a)) -
                         2.0 * out.integral;
    out.value.eps0 = std::exp(out.value.log_eps0);
    out.condepsilon = check_condepsilon(gg, kappa, a, r0, n0, out.value.log_eps0);
    return out;
}

struct StripBound {
    double chain_bound = 0.0;   ///< r0/4^{n0} + log(Gg)(N)/(pi N) - (1/pi) int_N^inf log(Gg)/Y^2
    double direct_bound = 0.0;  ///< r0/4^{n0} - sum_{k >= n0} c0 |log(1-a)| / (2 pi N_k)
    double floor = 0.0;         ///< r0 / 4^{n0+1}
    bool certified = false;     ///< chain_bound >= floor
};

/// Lower bounds for lim r_n when no resonance occurs from n0 on.
/// Throws Divergent when the Brjuno-type integral of Gg is infinite.
[[nodiscard]] inline StripBound rn_lower_bound(const KamSchedule& s) {
    StripBound out;
    const double start = s.r0 / std::pow(4.0, s.n0);
    out.floor = s.r_floor();
    const int n_start = s.N(s.n0);
    const double tail = tail_integral(s.Gg, n_start, 2.0).value;
    out.chain_bound = start + s.Gg.log_value(n_start) / (std::numbers::pi * n_start) - tail / std::numbers::pi;
    double sum = 0.0;
    const double coef = s.c0 * std::abs(s.log_one_minus_a()) / (2.0 * std::numbers::pi);
    for (int k = s.n0; k < s.n0 + 100000; ++k) {
        const double nk = std::max(1.0, std::floor(s.Gg.log_inverse(0.5 * s.log_N_bound(k))));
        const double term = coef / nk;
        sum += term;
        if (term < 1e-18 * std::max(sum, 1e-300)) break;
    }
    out.direct_bound = start - sum;
    out.certified = out.chain_bound >= out.floor;
    return out;
}

}  // namespace kamred
