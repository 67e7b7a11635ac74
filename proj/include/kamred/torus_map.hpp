#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kamred/error.hpp"
#include "kamred/freq_index.hpp"
#include "kamred/linalg.hpp"

namespace kamred {

enum class Lattice { Integer, Half };

/// Finitely supported Fourier series on T^d or 2T^d with 2x2 complex
/// matrix coefficients.
///
/// The value is immutable once built. Coefficients are kept sorted by index
/// and coefficients with operator norm below kPruneNorm are dropped. When
/// the reality flag is set, coeff(-k) == conj(coeff(k)) for every stored k.
///
/// truncation_debt() bounds the |.|_r norm, for every r <= debt_radius(), of
/// whatever has been discarded from the exact value by support caps,
/// relative pruning and truncated series.
class TorusMap {
public:
    using Entry = std::pair<FreqIndex, Mat2>;

    static constexpr double kPruneNorm = 1e-300;
    static constexpr std::size_t kDefaultMaxModes = 4096;
    static constexpr double kRealityTol = 1e-14;

    TorusMap() = default;

    explicit TorusMap(int dim) : dim_(dim) {
        require(dim >= 1 && dim <= kMaxDim, "TorusMap dimension must be in [1, 4]");
    }

    static TorusMap zero(int dim) { return TorusMap(dim); }

    static TorusMap constant(int dim, const Mat2& m) {
        TorusMap f(dim);
        f.real_ = m.imag().cwiseAbs().maxCoeff() == 0.0;
        if (op_norm(m) >= kPruneNorm) f.coeffs_.emplace_back(FreqIndex(dim), m);
        return f;
    }

    static TorusMap identity(int dim) { return constant(dim, Mat2::Identity()); }

    /// Builds a map from possibly repeated indices (repeats are summed).
    ///
    /// With real = true the entries must already be conjugate symmetric to
    /// within kRealityTol * max(1, |c|); they are then symmetrized exactly.
    static TorusMap from_entries(int dim, std::vector<Entry> entries, bool real) {
        TorusMap f(dim);
        for (const auto& [k, c] : entries)
            require(k.dim() == dim, "TorusMap entry dimension mismatch");
        f.real_ = real;
        f.coeffs_ = merge_sorted(std::move(entries));
        if (real) {
            for (const auto& [k, c] : f.coeffs_) {
                const Mat2 partner = f.coeff(-k);
                const double defect = op_norm(Mat2(c - partner.conjugate()));
                if (defect > kRealityTol * std::max(1.0, op_norm(c)))
                    throw Error(ErrorKind::InvalidArgument,
                                "TorusMap declared real but coefficients are not conjugate symmetric");
            }
            f.symmetrize();
        }
        return f;
    }

    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] bool is_real() const noexcept { return real_; }
    [[nodiscard]] std::size_t size() const noexcept { return coeffs_.size(); }
    [[nodiscard]] bool empty() const noexcept { return coeffs_.empty(); }
    [[nodiscard]] std::span<const Entry> entries() const noexcept { return coeffs_; }

    [[nodiscard]] Lattice lattice() const noexcept {
        for (const auto& e : coeffs_)
            if (!e.first.is_integer()) return Lattice::Half;
        return Lattice::Integer;
    }

    [[nodiscard]] Mat2 coeff(const FreqIndex& k) const {
        auto it = std::lower_bound(coeffs_.begin(), coeffs_.end(), k,
                                   [](const Entry& e, const FreqIndex& key) { return e.first < key; });
        if (it != coeffs_.end() && it->first == k) return it->second;
        return Mat2::Zero();
    }

    [[nodiscard]] Mat2 mean() const { return coeff(FreqIndex(dim_)); }

    [[nodiscard]] double max_modulus() const noexcept {
        double m = 0.0;
        for (const auto& e : coeffs_) m = std::max(m, e.first.modulus());
        return m;
    }

    [[nodiscard]] double truncation_debt() const noexcept { return debt_; }
    [[nodiscard]] double debt_radius() const noexcept { return debt_r_; }

    /// Copy with `extra` added to the truncation debt, valid up to strip r.
    [[nodiscard]] TorusMap with_added_debt(double extra, double r) const {
        TorusMap f = *this;
        f.add_debt(extra, r);
        return f;
    }

    [[nodiscard]] TorusMap without_debt() const {
        TorusMap f = *this;
        f.debt_ = 0.0;
        f.debt_r_ = std::numeric_limits<double>::infinity();
        return f;
    }

    /// Largest |c(k) - conj(c(-k))| over stored indices.
    [[nodiscard]] double reality_defect() const {
        double worst = 0.0;
        for (const auto& [k, c] : coeffs_)
            worst = std::max(worst, op_norm(Mat2(c - coeff(-k).conjugate())));
        return worst;
    }

    // Construction helpers for the algebra below; not part of the value API.
    static TorusMap assemble(int dim, std::vector<Entry> sorted_entries, bool real, double debt, double debt_r) {
        TorusMap f(dim);
        f.real_ = real;
        f.coeffs_.reserve(sorted_entries.size());
        for (auto& e : sorted_entries)
            if (op_norm(e.second) >= kPruneNorm) f.coeffs_.push_back(std::move(e));
        f.add_debt(debt, debt_r);
        if (real) f.symmetrize();
        return f;
    }

    void add_debt(double extra, double r) {
        if (extra <= 0.0) return;
        debt_ += extra;
        debt_r_ = std::min(debt_r_, r);
    }

private:
    static std::vector<Entry> merge_sorted(std::vector<Entry> entries) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Entry& a, const Entry& b) { return a.first < b.first; });
        std::vector<Entry> out;
        out.reserve(entries.size());
        for (auto& e : entries) {
            if (!out.empty() && out.back().first == e.first)
                out.back().second += e.second;
            else
                out.push_back(std::move(e));
        }
        std::erase_if(out, [](const Entry& e) { return op_norm(e.second) < kPruneNorm; });
        return out;
    }

    void symmetrize() {
        std::vector<Entry> sym;
        sym.reserve(2 * coeffs_.size());
        for (const auto& [k, c] : coeffs_) {
            const FreqIndex nk = -k;
            if (k == nk) {
                sym.emplace_back(k, Mat2(c.real().cast<cplx>()));
                continue;
            }
            const Mat2 partner = coeff(nk);
            const Mat2 v = 0.5 * (c + partner.conjugate());
            // Emit the pair from the smaller index only; a missing partner is emitted here too.
            if (k < nk || op_norm(partner) == 0.0) {
                sym.emplace_back(k, v);
                sym.emplace_back(nk, Mat2(v.conjugate()));
            }
        }
        coeffs_ = merge_sorted(std::move(sym));
    }

    int dim_ = 0;
    bool real_ = true;
    std::vector<Entry> coeffs_;
    double debt_ = 0.0;
    double debt_r_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Norms and truncation
// ---------------------------------------------------------------------------

/// |F|_r = sum_k ||F^(k)||_op e^{2 pi |k| r}.
[[nodiscard]] inline double weighted_norm(const TorusMap& f, double r) {
    require(r >= 0.0, "weighted_norm requires r >= 0");
    double s = 0.0;
    for (const auto& [k, c] : f.entries()) s += op_norm(c) * std::exp(std::numbers::pi * k.ell1_half() * r);
    return s;
}

/// Keeps exactly the coefficients with |m| <= N.
[[nodiscard]] inline TorusMap truncate(const TorusMap& f, double n) {
    require(n >= 0.0, "truncate requires N >= 0");
    std::vector<TorusMap::Entry> kept;
    for (const auto& e : f.entries())
        if (e.first.modulus() <= n) kept.push_back(e);
    return TorusMap::assemble(f.dim(), std::move(kept), f.is_real(), f.truncation_debt(), f.debt_radius());
}

/// F minus its zero mode.
[[nodiscard]] inline TorusMap remove_mean(const TorusMap& f) {
    std::vector<TorusMap::Entry> kept;
    for (const auto& e : f.entries())
        if (!e.first.is_zero()) kept.push_back(e);
    return TorusMap::assemble(f.dim(), std::move(kept), f.is_real(), f.truncation_debt(), f.debt_radius());
}

// ---------------------------------------------------------------------------
// Algebra
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_dim(const TorusMap& a, const TorusMap& b) {
    require(a.dim() == b.dim(), "TorusMap operands have different dimensions");
}

inline double min_radius(const TorusMap& a, const TorusMap& b) {
    return std::min(a.debt_radius(), b.debt_radius());
}

}  // namespace detail

[[nodiscard]] inline TorusMap scale(const TorusMap& f, cplx s) {
    std::vector<TorusMap::Entry> out;
    out.reserve(f.size());
    for (const auto& [k, c] : f.entries()) out.emplace_back(k, Mat2(s * c));
    const bool real = f.is_real() && s.imag() == 0.0;
    return TorusMap::assemble(f.dim(), std::move(out), real, std::abs(s) * f.truncation_debt(), f.debt_radius());
}

[[nodiscard]] inline TorusMap add(const TorusMap& a, const TorusMap& b, cplx b_factor = 1.0) {
    detail::check_same_dim(a, b);
    std::vector<TorusMap::Entry> out;
    out.reserve(a.size() + b.size());
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    while (ia != a.entries().end() || ib != b.entries().end()) {
        if (ib == b.entries().end() || (ia != a.entries().end() && ia->first < ib->first)) {
            out.push_back(*ia++);
        } else if (ia == a.entries().end() || ib->first < ia->first) {
            out.emplace_back(ib->first, Mat2(b_factor * ib->second));
            ++ib;
        } else {
            out.emplace_back(ia->first, Mat2(ia->second + b_factor * ib->second));
            ++ia;
            ++ib;
        }
    }
    const bool real = a.is_real() && b.is_real() && b_factor.imag() == 0.0;
    return TorusMap::assemble(a.dim(), std::move(out), real,
                              a.truncation_debt() + std::abs(b_factor) * b.truncation_debt(),
                              detail::min_radius(a, b));
}

[[nodiscard]] inline TorusMap subtract(const TorusMap& a, const TorusMap& b) { return add(a, b, -1.0); }

/// Adds a constant matrix to the zero mode.
[[nodiscard]] inline TorusMap add_constant(const TorusMap& f, const Mat2& m) {
    return add(f, TorusMap::constant(f.dim(), m));
}

/// Coefficient convolution. Integer and half lattices mix freely.
[[nodiscard]] inline TorusMap mul(const TorusMap& a, const TorusMap& b) {
    detail::check_same_dim(a, b);
    std::unordered_map<FreqIndex, Mat2, FreqIndexHash> acc;
    acc.reserve(a.size() * b.size() / 2 + 1);
    for (const auto& [ka, ca] : a.entries()) {
        for (const auto& [kb, cb] : b.entries()) {
            auto [it, inserted] = acc.try_emplace(ka + kb, ca * cb);
            if (!inserted) it->second.noalias() += ca * cb;
        }
    }
    std::vector<TorusMap::Entry> out(acc.begin(), acc.end());
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

    double debt = 0.0;
    double r_d = detail::min_radius(a, b);
    if (a.truncation_debt() > 0.0 || b.truncation_debt() > 0.0) {
        debt = a.truncation_debt() * weighted_norm(b, r_d) + b.truncation_debt() * weighted_norm(a, r_d) +
               a.truncation_debt() * b.truncation_debt();
    }
    return TorusMap::assemble(a.dim(), std::move(out), a.is_real() && b.is_real(), debt, r_d);
}

[[nodiscard]] inline TorusMap commutator(const TorusMap& a, const TorusMap& b) {
    return subtract(mul(a, b), mul(b, a));
}

/// [M, F] for a constant matrix M, coefficientwise.
[[nodiscard]] inline TorusMap commutator(const Mat2& m, const TorusMap& f) {
    std::vector<TorusMap::Entry> out;
    out.reserve(f.size());
    for (const auto& [k, c] : f.entries()) out.emplace_back(k, Mat2(m * c - c * m));
    const bool real = f.is_real() && m.imag().cwiseAbs().maxCoeff() == 0.0;
    return TorusMap::assemble(f.dim(), std::move(out), real, 2.0 * op_norm(m) * f.truncation_debt(),
                              f.debt_radius());
}

/// Left and right multiplication by constant matrices.
[[nodiscard]] inline TorusMap left_mul(const Mat2& m, const TorusMap& f) {
    std::vector<TorusMap::Entry> out;
    out.reserve(f.size());
    for (const auto& [k, c] : f.entries()) out.emplace_back(k, Mat2(m * c));
    const bool real = f.is_real() && m.imag().cwiseAbs().maxCoeff() == 0.0;
    return TorusMap::assemble(f.dim(), std::move(out), real, op_norm(m) * f.truncation_debt(), f.debt_radius());
}

[[nodiscard]] inline TorusMap right_mul(const TorusMap& f, const Mat2& m) {
    std::vector<TorusMap::Entry> out;
    out.reserve(f.size());
    for (const auto& [k, c] : f.entries()) out.emplace_back(k, Mat2(c * m));
    const bool real = f.is_real() && m.imag().cwiseAbs().maxCoeff() == 0.0;
    return TorusMap::assemble(f.dim(), std::move(out), real, op_norm(m) * f.truncation_debt(), f.debt_radius());
}

/// Derivative along the flow: coefficient at m is multiplied by 2 i pi <m, omega>.
///
/// The debt of the argument is not carried over: the derivative of a
/// discarded tail is not controlled by the same weighted norm.
[[nodiscard]] inline TorusMap dir_derivative(const TorusMap& f, std::span<const double> omega) {
    require(static_cast<int>(omega.size()) == f.dim(), "dir_derivative: omega dimension mismatch");
    std::vector<TorusMap::Entry> out;
    out.reserve(f.size());
    for (const auto& [k, c] : f.entries()) {
        const cplx factor(0.0, 2.0 * std::numbers::pi * k.dot(omega));
        out.emplace_back(k, Mat2(factor * c));
    }
    return TorusMap::assemble(f.dim(), std::move(out), f.is_real(), 0.0, 0.0);
}

struct ExpResult {
    TorusMap value;
    double tail_bound = 0.0;
    int terms = 0;
};

/// Taylor series of exp(X), summed until |X|_r^{K+1}/(K+1)! e^{|X|_r} < tol.
///
/// The certified tail is added to the result's truncation debt at strip r.
[[nodiscard]] inline ExpResult exp_map(const TorusMap& x, double r, double tol) {
    const double xn = weighted_norm(x, r) + x.truncation_debt();
    if (xn > 1.0) throw Error(ErrorKind::OutsideRegime, "exp_map requires |X|_r <= 1");
    ExpResult res{TorusMap::identity(x.dim()), 0.0, 0};
    TorusMap term = TorusMap::identity(x.dim());
    double power_over_fact = 1.0;  // |X|^k / k!
    const double ex = std::exp(xn);
    for (int k = 1; k <= 200; ++k) {
        term = scale(mul(term, x), 1.0 / k);
        res.value = add(res.value, term);
        res.terms = k;
        power_over_fact *= xn / k;
        const double tail = power_over_fact * xn / (k + 1) * ex;
        if (term.empty() || tail < tol) {
            res.tail_bound = term.empty() ? 0.0 : tail;
            break;
        }
    }
    res.value.add_debt(res.tail_bound, r);
    return res;
}

/// Literal evaluation sum_k F^(k) e^{i pi <half_k, theta>}.
[[nodiscard]] inline Mat2 eval(const TorusMap& f, std::span<const double> theta) {
    require(static_cast<int>(theta.size()) == f.dim(), "eval: theta dimension mismatch");
    Mat2 s = Mat2::Zero();
    for (const auto& [k, c] : f.entries()) {
        const double ph = std::numbers::pi * 2.0 * k.phase(theta);
        s += cplx(std::cos(ph), std::sin(ph)) * c;
    }
    return s;
}

/// Drops every coefficient whose weighted contribution at r is below
/// rel * |F|_r and books the dropped weight as truncation debt.
[[nodiscard]] inline TorusMap prune_relative(const TorusMap& f, double r, double rel) {
    const double total = weighted_norm(f, r);
    const double threshold = rel * total;
    std::vector<TorusMap::Entry> kept;
    kept.reserve(f.size());
    double dropped = 0.0;
    for (const auto& e : f.entries()) {
        const double w = op_norm(e.second) * std::exp(std::numbers::pi * e.first.ell1_half() * r);
        if (w < threshold)
            dropped += w;
        else
            kept.push_back(e);
    }
    TorusMap out = TorusMap::assemble(f.dim(), std::move(kept), f.is_real(), f.truncation_debt(), f.debt_radius());
    out.add_debt(dropped, r);
    return out;
}

/// Enforces a hard support cap, dropping the smallest weighted coefficients.
///
/// Conjugate pairs have equal weight and are dropped together for real maps.
[[nodiscard]] inline TorusMap cap_support(const TorusMap& f, std::size_t max_modes, double r) {
    if (f.size() <= max_modes) return f;
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(f.size());
    const auto entries = f.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const double w = op_norm(entries[i].second) * std::exp(std::numbers::pi * entries[i].first.ell1_half() * r);
        order.emplace_back(w, i);
    }
    // Ties broken by index keep the selection deterministic.
    std::sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return entries[x.second].first < entries[y.second].first;
    });
    std::vector<char> keep(entries.size(), 0);
    std::size_t kept_count = 0;
    double dropped = 0.0;
    for (const auto& [w, i] : order) {
        if (keep[i]) continue;
        if (kept_count < max_modes) {
            keep[i] = 1;
            ++kept_count;
            if (f.is_real()) {
                const FreqIndex partner = -entries[i].first;
                const auto it = std::lower_bound(entries.begin(), entries.end(), partner,
                                                 [](const TorusMap::Entry& e, const FreqIndex& k) { return e.first < k; });
                const auto j = static_cast<std::size_t>(it - entries.begin());
                if (it != entries.end() && it->first == partner && !keep[j]) {
                    keep[j] = 1;
                    ++kept_count;
                }
            }
        }
    }
    std::vector<TorusMap::Entry> kept;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (keep[i])
            kept.push_back(entries[i]);
        else
            dropped += op_norm(entries[i].second) * std::exp(std::numbers::pi * entries[i].first.ell1_half() * r);
    }
    TorusMap out = TorusMap::assemble(f.dim(), std::move(kept), f.is_real(), f.truncation_debt(), f.debt_radius());
    out.add_debt(dropped, r);
    return out;
}

inline TorusMap operator+(const TorusMap& a, const TorusMap& b) { return add(a, b); }
inline TorusMap operator-(const TorusMap& a, const TorusMap& b) { return subtract(a, b); }
inline TorusMap operator*(const TorusMap& a, const TorusMap& b) { return mul(a, b); }
inline TorusMap operator*(cplx s, const TorusMap& f) { return scale(f, s); }

}  // namespace kamred
