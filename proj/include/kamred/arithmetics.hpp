#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "kamred/approx_fn.hpp"
#include "kamred/error.hpp"
#include "kamred/freq_index.hpp"
#include "kamred/linalg.hpp"

namespace kamred {

using Omega = std::span<const double>;

namespace detail {

/// Calls f(m) for every m in Z^d with 0 < |m|_1 <= n.
template <class F>
void for_each_l1(int d, int n, F&& f) {
    IntVec m(d, 0);
    auto rec = [&](auto&& self, int i, int rem) -> void {
        if (i == d - 1) {
            for (int v = -rem; v <= rem; ++v) {
                m[i] = v;
                bool nonzero = v != 0;
                for (int j = 0; j < i && !nonzero; ++j) nonzero = m[j] != 0;
                if (nonzero) f(std::as_const(m));
            }
            return;
        }
        for (int v = -rem; v <= rem; ++v) {
            m[i] = v;
            self(self, i + 1, rem - std::abs(v));
        }
    };
    if (n >= 1) rec(rec, 0, n);
}

/// Number of lattice points in the closed l1 ball of radius n in Z^d.
inline double l1_ball_size(int d, int n) {
    // Delannoy-type count sum_k 2^k C(d,k) C(n,k).
    double total = 0.0;
    double c_dk = 1.0;
    for (int k = 0; k <= d; ++k) {
        double c_nk = 1.0;
        for (int j = 0; j < k; ++j) c_nk *= static_cast<double>(n - j) / (j + 1);
        if (k > n) c_nk = 0.0;
        total += std::ldexp(c_dk * c_nk, k);
        c_dk = c_dk * (d - k) / (k + 1);
    }
    return total;
}

/// Calls f(m) for every nonzero m with |m|_1 <= n and |<m, omega> - center| <= halfwidth,
/// possibly together with a few nearby m (the caller re-tests each one).
///
/// The coordinate with the largest |omega_i| is solved for. The last free
/// coordinate is searched in blocks of length ~sqrt(n) against a sorted table
/// of fractional parts, so the cost is O(n^{d-2} sqrt(n) log n) plus the
/// number of hits. Candidates are located in double precision with a rounding
/// margin.
template <class F>
void for_each_in_window(Omega omega, int n, long double center, long double halfwidth, F&& f) {
    const int d = static_cast<int>(omega.size());
    int pivot = 0;
    double reach = std::abs(static_cast<double>(center));
    for (int i = 0; i < d; ++i) {
        reach += std::abs(omega[i]) * n;
        if (std::abs(omega[i]) > std::abs(omega[pivot])) pivot = i;
    }
    const double wp = omega[pivot];
    require(wp != 0.0, "frequency vector must be nonzero");
    const double inv = 1.0 / wp;
    const double c = static_cast<double>(center);
    const double hw = static_cast<double>(halfwidth) + 16.0 * std::numeric_limits<double>::epsilon() * reach;
    IntVec m(d, 0);
    auto inner = [&](double partial, int rem) {
        double a = (c - hw - partial) * inv;
        double b = (c + hw - partial) * inv;
        if (a > b) std::swap(a, b);
        const double lo = std::max(std::ceil(a), static_cast<double>(-rem));
        const double hi = std::min(std::floor(b), static_cast<double>(rem));
        if (lo > hi) return;
        for (long long v = static_cast<long long>(lo); v <= static_cast<long long>(hi); ++v) {
            m[pivot] = static_cast<int>(v);
            bool nonzero = v != 0;
            for (int j = 0; j < d && !nonzero; ++j) nonzero = j != pivot && m[j] != 0;
            if (nonzero) f(std::as_const(m));
        }
        m[pivot] = 0;
    };
    const int last = pivot == d - 1 ? d - 2 : d - 1;
    const bool narrow = last >= 0 && hw * std::abs(inv) < 0.5;
    const double dx = last >= 0 ? omega[last] * inv : 0.0;
    // Sorted (frac(u dx), u) for 0 <= u < block.
    std::vector<std::pair<double, int>> table;
    int block = 1;
    if (narrow && n > 4096) {
        block = static_cast<int>(std::ceil(std::sqrt(2.0 * n + 1.0)));
        table.reserve(block);
        for (int u = 0; u < block; ++u) {
            const double x = static_cast<double>(u) * dx;
            table.emplace_back(x - std::floor(x), u);
        }
        std::sort(table.begin(), table.end());
    }
    auto rec = [&](auto&& self, int i, double partial, int rem) -> void {
        if (i == d) {
            inner(partial, rem);
            return;
        }
        if (i == pivot) {
            self(self, i + 1, partial, rem);
            return;
        }
        if (i == last && narrow) {
            const double base = (c - partial) * inv;
            const double tol = hw * std::abs(inv);
            auto test = [&](int v) {
                const double y = base - static_cast<double>(v) * dx + 0.5;
                auto k = static_cast<long long>(y);
                k -= y < static_cast<double>(k);
                if (std::abs(y - 0.5 - static_cast<double>(k)) > tol) return;
                if (std::abs(k) > rem - std::abs(v)) return;
                m[i] = v;
                m[pivot] = static_cast<int>(k);
                bool nonzero = k != 0;
                for (int j = 0; j < d && !nonzero; ++j) nonzero = j != pivot && m[j] != 0;
                if (nonzero) f(std::as_const(m));
            };
            if (table.empty() || 2 * rem + 1 <= 4 * block) {
                for (int v = -rem; v <= rem; ++v) test(v);
            } else {
                // Block starting at s: v = s + u hits when frac(u dx) is near frac(base - s dx).
                const double guard =
                    tol + 64.0 * std::numeric_limits<double>::epsilon() *
                              (std::abs(base) + (static_cast<double>(rem) + block) * std::abs(dx) + 1.0);
                auto frac = [](double x) { return x - std::floor(x); };
                auto scan = [&](int s, int len, double lo, double hi) {
                    auto it = std::lower_bound(table.begin(), table.end(), std::pair<double, int>{lo, -1});
                    for (; it != table.end() && it->first <= hi; ++it)
                        if (it->second < len) test(s + it->second);
                };
                for (long long s = -rem; s <= rem; s += block) {
                    const int len = static_cast<int>(std::min<long long>(block, rem - s + 1));
                    if (guard >= 0.5) {
                        for (int u = 0; u < len; ++u) test(static_cast<int>(s) + u);
                        continue;
                    }
                    const double t = frac(base - static_cast<double>(s) * dx);
                    scan(static_cast<int>(s), len, std::max(0.0, t - guard), std::min(1.0, t + guard));
                    if (t - guard < 0.0) scan(static_cast<int>(s), len, t - guard + 1.0, 1.0);
                    if (t + guard > 1.0) scan(static_cast<int>(s), len, 0.0, t + guard - 1.0);
                }
            }
            m[i] = 0;
            m[pivot] = 0;
            return;
        }
        for (int v = -rem; v <= rem; ++v) {
            m[i] = v;
            self(self, i + 1, partial + static_cast<double>(v) * omega[i], rem - std::abs(v));
        }
        m[i] = 0;
    };
    if (n >= 1) rec(rec, 0, 0.0, n);
}

/// First nonzero coordinate positive: one representative per +-m pair.
inline bool is_canonical(const IntVec& m) {
    for (int v : m)
        if (v != 0) return v > 0;
    return false;
}

inline long double dot_ld(const IntVec& m, Omega omega) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < m.size(); ++i) s += static_cast<long double>(m[i]) * omega[i];
    return s;
}

inline constexpr double kExhaustiveBudget = 2e5;

}  // namespace detail

// ---------------------------------------------------------------------------
// Frequency non-resonance
// ---------------------------------------------------------------------------

struct NrOmegaResult {
    bool ok = true;
    IntVec worst_m;                  ///< minimizer of |<m,omega>| G(|m|) / kappa, empty if none scanned
    double worst_log_ratio = std::numeric_limits<double>::infinity();
    [[nodiscard]] double worst_ratio() const { return std::exp(worst_log_ratio); }
};

/// Checks |<m, omega>| >= kappa / G(|m|) for 0 < |m| <= n.
///
/// Small balls are scanned exhaustively and report the exact worst m; larger
/// ones only visit the window where a violation is possible.
[[nodiscard]] inline NrOmegaResult check_nr_omega(Omega omega, double kappa, const ApproxFn& G, int n) {
    require(kappa > 0.0, "check_nr_omega requires kappa > 0");
    NrOmegaResult res;
    if (n <= 0) return res;
    const double log_kappa = std::log(kappa);
    auto visit = [&](const IntVec& m) {
        if (!detail::is_canonical(m)) return;
        const double dist = static_cast<double>(std::abs(detail::dot_ld(m, omega)));
        const double lr = std::log(dist) + G.log_value(ell1(m)) - log_kappa;
        if (lr < res.worst_log_ratio || (lr == res.worst_log_ratio && m < res.worst_m)) {
            res.worst_log_ratio = lr;
            res.worst_m = m;
        }
    };
    const int d = static_cast<int>(omega.size());
    if (detail::l1_ball_size(d, n) <= detail::kExhaustiveBudget)
        detail::for_each_l1(d, n, visit);
    else
        detail::for_each_in_window(omega, n, 0.0L, kappa / G.value(1.0), visit);
    res.ok = !(res.worst_log_ratio < 0.0);
    return res;
}

struct GRow {
    int N = 0;
    double G = 0.0;
    IntVec argmin;  ///< m attaining min |<m, omega>| over |m| <= N
};

struct FitGResult {
    double kappa = 0.0;
    std::vector<GRow> rows;  ///< rows[i] describes N = i + 1

    /// Step function through the fitted values; throws if some value is infinite.
    [[nodiscard]] ApproxFn as_function() const {
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) {
            if (!std::isfinite(r.G))
                throw Error(ErrorKind::OutsideRegime, "fitted G is infinite: frequency vector is resonant");
            v.push_back(r.G);
        }
        return ApproxFn::tabulated(std::move(v));
    }
};

/// kappa = min |omega_i| and G(N) = max_{0 < |m| <= N} kappa / |<m, omega>|.
[[nodiscard]] inline FitGResult fit_G(Omega omega, int n_max) {
    require(n_max >= 1, "fit_G requires N_max >= 1");
    const int d = static_cast<int>(omega.size());
    FitGResult out;
    out.kappa = std::numeric_limits<double>::infinity();
    for (double w : omega) out.kappa = std::min(out.kappa, std::abs(w));
    require(out.kappa > 0.0, "fit_G requires every frequency to be nonzero");

    // Minimum per shell, then a running minimum.
    std::vector<long double> shell_min(n_max + 1, std::numeric_limits<long double>::infinity());
    std::vector<IntVec> shell_arg(n_max + 1);
    detail::for_each_l1(d, n_max, [&](const IntVec& m) {
        if (!detail::is_canonical(m)) return;
        const int s = ell1(m);
        const long double v = std::abs(detail::dot_ld(m, omega));
        if (v < shell_min[s] || (v == shell_min[s] && m < shell_arg[s])) {
            shell_min[s] = v;
            shell_arg[s] = m;
        }
    });
    long double best = std::numeric_limits<long double>::infinity();
    IntVec best_m;
    for (int n = 1; n <= n_max; ++n) {
        if (shell_min[n] < best) {
            best = shell_min[n];
            best_m = shell_arg[n];
        }
        const double g = best == 0.0L ? std::numeric_limits<double>::infinity()
                                      : static_cast<double>(static_cast<long double>(out.kappa) / best);
        out.rows.push_back({n, g, best_m});
    }
    return out;
}

/// Largest kappa <= min |omega_i| with omega in NR(kappa, G) up to n.
[[nodiscard]] inline double fit_kappa(Omega omega, const ApproxFn& G, int n) {
    double kappa = std::numeric_limits<double>::infinity();
    for (double w : omega) kappa = std::min(kappa, std::abs(w));
    require(kappa > 0.0, "fit_kappa requires every frequency to be nonzero");
    detail::for_each_l1(static_cast<int>(omega.size()), n, [&](const IntVec& m) {
        if (!detail::is_canonical(m)) return;
        const double v = static_cast<double>(std::abs(detail::dot_ld(m, omega))) * G.value(ell1(m));
        kappa = std::min(kappa, v);
    });
    return kappa;
}

// ---------------------------------------------------------------------------
// Eigenvalue non-resonance
// ---------------------------------------------------------------------------

struct Offender {
    IntVec m;
    double distance = 0.0;   ///< |alpha - i pi <m, omega>|
    double log_ratio = 0.0;  ///< log(distance g(|m|) / kappa')
};

struct NrAlphaResult {
    bool ok = true;
    /// Minimizer of distance * g(|m|) / kappa' among visited m. Exact when
    /// the scan was exhaustive or the minimum is below 1; otherwise empty
    /// when no index came within kappa' / g(1).
    IntVec worst_m;
    double worst_log_ratio = std::numeric_limits<double>::infinity();
    std::vector<Offender> violators;  ///< sorted by ratio, then m
    bool exhaustive = false;
    [[nodiscard]] double worst_ratio() const { return std::exp(worst_log_ratio); }
};

/// Checks |alpha - i pi <m, omega>| >= kappa' / g(|m|) for 0 < |m| <= n.
[[nodiscard]] inline NrAlphaResult check_nr_alpha(cplx alpha, Omega omega, double kappa_p, const ApproxFn& g, int n,
                                                  std::size_t max_violators = 16) {
    require(kappa_p > 0.0, "check_nr_alpha requires kappa' > 0");
    NrAlphaResult res;
    if (n <= 0) {
        res.exhaustive = true;
        return res;
    }
    const double log_kp = std::log(kappa_p);
    const long double im = alpha.imag();
    const double re = alpha.real();
    auto visit = [&](const IntVec& m) {
        const long double off = im - std::numbers::pi_v<long double> * detail::dot_ld(m, omega);
        const double dist = std::hypot(re, static_cast<double>(off));
        const double lr = std::log(dist) + g.log_value(ell1(m)) - log_kp;
        if (lr < res.worst_log_ratio || (lr == res.worst_log_ratio && m < res.worst_m)) {
            res.worst_log_ratio = lr;
            res.worst_m = m;
        }
        if (lr < 0.0) res.violators.push_back({m, dist, lr});
    };
    const int d = static_cast<int>(omega.size());
    if (detail::l1_ball_size(d, n) <= detail::kExhaustiveBudget) {
        res.exhaustive = true;
        detail::for_each_l1(d, n, visit);
    } else {
        // A violator satisfies |alpha - i pi <m,omega>| < kappa' / g(1).
        const double w = kappa_p / g.value(1.0);
        if (std::abs(re) < w)
            detail::for_each_in_window(omega, n, im / std::numbers::pi_v<long double>,
                                       static_cast<long double>(w) / std::numbers::pi_v<long double>, visit);
    }
    std::sort(res.violators.begin(), res.violators.end(), [](const Offender& a, const Offender& b) {
        if (a.log_ratio != b.log_ratio) return a.log_ratio < b.log_ratio;
        return a.m < b.m;
    });
    if (res.violators.size() > max_violators) res.violators.resize(max_violators);
    res.ok = res.violators.empty();
    return res;
}

/// |rho - pi <m, omega>| >= kappa' / g(|m|) for 0 < |m| <= n.
[[nodiscard]] inline NrAlphaResult check_rho_arithmetic(double rho, Omega omega, double kappa_p, const ApproxFn& g,
                                                        int n) {
    return check_nr_alpha(cplx(0.0, rho), omega, kappa_p, g, n);
}

// ---------------------------------------------------------------------------
// Growth comparison of g(t^2) against G(t)
// ---------------------------------------------------------------------------

struct RatioBound {
    bool bounded = false;
    double sup_estimate = 0.0;      ///< sampled sup of g(t^2) / G(t), may be inf
    double log_sup_estimate = 0.0;  ///< log of the same, always finite for finite t
};

namespace detail {

/// Asymptotic scale c t^p (log t)^q of a single log-term.
struct Scale {
    double p = 0.0;
    double q = 0.0;
};

inline std::map<std::pair<double, double>, double> log_scales(const ApproxFn& f, bool squared_arg, double sign) {
    std::map<std::pair<double, double>, double> out;
    for (const auto& term : f.terms()) {
        double p = 0.0, q = 0.0, c = 1.0;
        switch (term.kind) {
            case ApproxFn::Kind::Power: p = 0.0, q = 1.0, c = term.param; break;
            case ApproxFn::Kind::ExpPow: p = term.param, q = 0.0, c = 1.0; break;
            case ApproxFn::Kind::ExpLog: p = 1.0, q = -term.param, c = 1.0; break;
            case ApproxFn::Kind::Tabulated: p = 0.0, q = 0.0, c = std::log(term.table->back()); break;
            case ApproxFn::Kind::Product: break;
        }
        if (squared_arg) {
            c *= std::pow(2.0, q);
            p *= 2.0;
        }
        out[{p, q}] += sign * c;
    }
    return out;
}

}  // namespace detail

/// Decides whether t -> g(t^2) / G(t) is bounded on [1, inf) by comparing
/// the dominant asymptotic scales of log g(t^2) and log G(t), and samples
/// the ratio at log-spaced points of [t_min, t_max].
[[nodiscard]] inline RatioBound ratio_bounded(const ApproxFn& g, const ApproxFn& G, double t_min, double t_max,
                                              int samples) {
    require(t_min >= 1.0 && t_min < t_max, "ratio_bounded requires 1 <= t_min < t_max");
    require(samples >= 2, "ratio_bounded requires at least two samples");
    auto scales = detail::log_scales(g, true, 1.0);
    for (const auto& [k, c] : detail::log_scales(G, false, -1.0)) scales[k] += c;
    RatioBound out;
    out.bounded = true;
    // Highest (p, q) with a nonzero coefficient dominates; constants never matter.
    for (auto it = scales.rbegin(); it != scales.rend(); ++it) {
        if (it->first.first == 0.0 && it->first.second == 0.0) break;
        const double c = it->second;
        if (std::abs(c) <= 1e-14) continue;
        out.bounded = c < 0.0;
        break;
    }
    double best = -std::numeric_limits<double>::infinity();
    const double l0 = std::log(t_min), l1 = std::log(t_max);
    for (int i = 0; i < samples; ++i) {
        const double t = std::exp(l0 + (l1 - l0) * i / (samples - 1));
        best = std::max(best, g.log_value(t * t) - G.log_value(t));
    }
    out.log_sup_estimate = best;
    out.sup_estimate = std::exp(best);
    return out;
}

}  // namespace kamred
