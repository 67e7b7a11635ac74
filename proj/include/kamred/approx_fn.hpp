#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "kamred/error.hpp"

namespace kamred {

/// Positive increasing approximation function f on [1, inf).
///
/// Everything is computed through log f, which is a sum of terms:
///   Power(mu)     mu log t
///   ExpPow(a)     t^a
///   ExpLog(d)     t / (log t)^d for t >= e^d, and t / d^d below
///   Tabulated(v)  log v[floor(t) - 1], clamped to the table ends
/// A Product is a concatenation of terms (log f = sum).
///
/// The ExpLog piece below e^d is the linear continuation that keeps the
/// function strictly increasing; t / (log t)^d itself decreases on (1, e^d).
class ApproxFn {
public:
    enum class Kind { Power, ExpPow, ExpLog, Tabulated, Product };

    struct Term {
        Kind kind = Kind::Power;
        double param = 0.0;
        std::shared_ptr<const std::vector<double>> table;
    };

    static ApproxFn power(double mu) {
        require(mu > 0.0 && std::isfinite(mu), "Power approximation function needs mu > 0");
        return ApproxFn({Term{Kind::Power, mu, nullptr}});
    }

    static ApproxFn exp_pow(double alpha) {
        require(alpha > 0.0 && std::isfinite(alpha), "ExpPow approximation function needs alpha > 0");
        return ApproxFn({Term{Kind::ExpPow, alpha, nullptr}});
    }

    static ApproxFn exp_log(double delta) {
        require(delta > 0.0 && std::isfinite(delta), "ExpLog approximation function needs delta > 0");
        return ApproxFn({Term{Kind::ExpLog, delta, nullptr}});
    }

    /// values[i] is the value on [i + 1, i + 2).
    static ApproxFn tabulated(std::vector<double> values) {
        require(!values.empty(), "Tabulated approximation function needs values");
        require(values.front() >= 1.0, "Tabulated approximation function must start at a value >= 1");
        for (std::size_t i = 1; i < values.size(); ++i)
            require(values[i] >= values[i - 1], "Tabulated approximation function must be nondecreasing");
        return ApproxFn({Term{Kind::Tabulated, 0.0, std::make_shared<const std::vector<double>>(std::move(values))}});
    }

    static ApproxFn product(const ApproxFn& a, const ApproxFn& b) {
        std::vector<Term> t = a.terms_;
        t.insert(t.end(), b.terms_.begin(), b.terms_.end());
        return ApproxFn(std::move(t));
    }

    [[nodiscard]] Kind kind() const noexcept { return terms_.size() == 1 ? terms_.front().kind : Kind::Product; }
    [[nodiscard]] const std::vector<Term>& terms() const noexcept { return terms_; }
    [[nodiscard]] double param() const noexcept { return terms_.front().param; }
    [[nodiscard]] const std::vector<double>& table() const { return *terms_.front().table; }

    [[nodiscard]] double log_value(double t) const {
        double s = 0.0;
        for (const Term& term : terms_) s += log_term(term, t);
        return s;
    }

    [[nodiscard]] double value(double t) const { return std::exp(log_value(t)); }
    [[nodiscard]] double operator()(double t) const { return value(t); }

    /// Smallest t > 0 with log f(t) >= log_y.
    [[nodiscard]] double log_inverse(double log_y) const {
        if (terms_.size() == 1) {
            const Term& term = terms_.front();
            if (term.kind == Kind::Power) return std::exp(log_y / term.param);
            if (term.kind == Kind::ExpPow && log_y > 0.0) return std::pow(log_y, 1.0 / term.param);
        }
        return bisect_log_inverse(log_y);
    }

    [[nodiscard]] double inverse(double y) const {
        require(y > 0.0, "ApproxFn::inverse needs a positive argument");
        return log_inverse(std::log(y));
    }

private:
    explicit ApproxFn(std::vector<Term> terms) : terms_(std::move(terms)) {}

    static double log_term(const Term& term, double t) {
        switch (term.kind) {
            case Kind::Power: return term.param * std::log(t);
            case Kind::ExpPow: return std::pow(t, term.param);
            case Kind::ExpLog: {
                const double d = term.param;
                if (std::log(t) >= d) return t / std::pow(std::log(t), d);
                return t / std::pow(d, d);
            }
            case Kind::Tabulated: {
                const auto& v = *term.table;
                const double idx = std::floor(t) - 1.0;
                if (!(idx > 0.0)) return std::log(v.front());
                if (idx >= static_cast<double>(v.size() - 1)) return std::log(v.back());
                return std::log(v[static_cast<std::size_t>(idx)]);
            }
            case Kind::Product: break;
        }
        return 0.0;
    }

    [[nodiscard]] double bisect_log_inverse(double log_y) const {
        // Work in u = log t.
        double lo = 0.0, hi = 0.0;
        if (log_value(1.0) >= log_y) {
            lo = -1.0;
            while (log_value(std::exp(lo)) >= log_y && lo > -700.0) lo *= 2.0;
            if (log_value(std::exp(lo)) >= log_y) return std::exp(lo);
        } else {
            hi = 1.0;
            while (log_value(std::exp(hi)) < log_y) {
                hi *= 2.0;
                if (hi > 700.0) throw Error(ErrorKind::OutsideRegime, "ApproxFn inverse out of range");
            }
        }
        for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (log_value(std::exp(mid)) >= log_y)
                hi = mid;
            else
                lo = mid;
        }
        return std::exp(hi);
    }

    std::vector<Term> terms_;
};

[[nodiscard]] inline std::string to_string(ApproxFn::Kind k) {
    switch (k) {
        case ApproxFn::Kind::Power: return "power";
        case ApproxFn::Kind::ExpPow: return "exp_pow";
        case ApproxFn::Kind::ExpLog: return "exp_log";
        case ApproxFn::Kind::Tabulated: return "tabulated";
        case ApproxFn::Kind::Product: return "product";
    }
    return "unknown";
}

struct TailIntegral {
    double value = 0.0;
    double error_bound = 0.0;
};

namespace detail {

/// int_a^b t^{-p} dt for p > 1, b may be infinite.
inline double power_segment(double a, double b, double p) {
    const double fa = std::pow(a, 1.0 - p);
    const double fb = std::isinf(b) ? 0.0 : std::pow(b, 1.0 - p);
    return (fa - fb) / (p - 1.0);
}

inline TailIntegral tail_term(const ApproxFn::Term& term, double lower, double p) {
    using K = ApproxFn::Kind;
    const double big_l = lower;
    switch (term.kind) {
        case K::Power: {
            const double q = p - 1.0;
            const double v = term.param * std::pow(big_l, -q) * (std::log(big_l) / q + 1.0 / (q * q));
            return {v, 4e-16 * std::abs(v)};
        }
        case K::ExpPow: {
            const double a = term.param;
            if (a >= p - 1.0) throw Error(ErrorKind::Divergent, "tail integral of ExpPow diverges for alpha >= p - 1");
            const double v = std::pow(big_l, a - p + 1.0) / (p - 1.0 - a);
            return {v, 4e-16 * std::abs(v)};
        }
        case K::ExpLog: {
            const double d = term.param;
            if (p < 2.0 || (p == 2.0 && d <= 1.0))
                throw Error(ErrorKind::Divergent, "tail integral of ExpLog diverges for this exponent");
            const double knee = std::exp(d);
            const double t0 = std::max(big_l, knee);
            double linear = 0.0;
            if (big_l < knee) {
                // int t^{1-p} / d^d over [L, e^d]
                const double seg = p == 2.0 ? std::log(knee / big_l)
                                            : (std::pow(knee, 2.0 - p) - std::pow(big_l, 2.0 - p)) / (2.0 - p);
                linear = seg / std::pow(d, d);
            }
            if (p == 2.0) {
                const double v = linear + std::pow(std::log(t0), 1.0 - d) / (d - 1.0);
                return {v, 4e-16 * std::abs(v)};
            }
            // int_{log t0}^inf e^{(2-p) u} u^{-d} du
            const double u0 = std::log(t0);
            boost::math::quadrature::exp_sinh<double> integrator;
            double err = 0.0;
            const double q = integrator.integrate(
                [&](double s) {
                    const double u = u0 + s;
                    return std::exp((2.0 - p) * u) * std::pow(u, -d);
                },
                1e-13, &err);
            return {linear + q, err + 4e-16 * std::abs(linear)};
        }
        case K::Tabulated: {
            const auto& v = *term.table;
            double s = 0.0;
            // Segment [i+1, i+2) carries v[i]; the last value extends to infinity.
            for (std::size_t i = 0; i < v.size(); ++i) {
                const double a = static_cast<double>(i + 1);
                const double b = i + 1 == v.size() ? std::numeric_limits<double>::infinity() : a + 1.0;
                const double lo = std::max(a, big_l);
                if (lo >= b) continue;
                s += std::log(v[i]) * power_segment(lo, b, p);
            }
            return {s, 1e-15 * std::abs(s) * static_cast<double>(v.size())};
        }
        case K::Product: break;
    }
    return {};
}

}  // namespace detail

/// int_lower^inf log f(t) / t^p dt.
///
/// Closed forms are used for every term except ExpLog with p > 2, which is
/// integrated by double-exponential quadrature. Throws Divergent when the
/// integral is infinite.
[[nodiscard]] inline TailIntegral tail_integral(const ApproxFn& f, double lower, double p) {
    require(lower >= 1.0, "tail_integral requires lower >= 1");
    require(p > 1.0, "tail_integral requires exponent > 1");
    TailIntegral total;
    for (const auto& term : f.terms()) {
        const TailIntegral t = detail::tail_term(term, lower, p);
        total.value += t.value;
        total.error_bound += t.error_bound;
    }
    return total;
}

}  // namespace kamred
