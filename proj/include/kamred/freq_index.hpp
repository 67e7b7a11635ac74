#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "kamred/error.hpp"

namespace kamred {

inline constexpr int kMaxDim = 4;

/// Integer lattice vector m in Z^d.
using IntVec = std::vector<int>;

[[nodiscard]] inline int ell1(std::span<const int> m) {
    int s = 0;
    for (int v : m) s += std::abs(v);
    return s;
}

[[nodiscard]] inline double lattice_dot(std::span<const int> m, std::span<const double> omega) {
    // long double keeps the cancellation error small for large |m|.
    long double s = 0.0L;
    for (std::size_t i = 0; i < m.size(); ++i) s += static_cast<long double>(m[i]) * omega[i];
    return static_cast<double>(s);
}

[[nodiscard]] inline std::string format_intvec(std::span<const int> m, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(m[i]);
    }
    return out;
}

/// Fourier index on the double torus 2T^d.
///
/// Stores half_k = 2m, so the represented frequency is half_k / 2. Even
/// entries are genuine T^d modes, odd entries only live on 2T^d.
class FreqIndex {
public:
    FreqIndex() = default;

    explicit FreqIndex(int dim) : dim_(dim) {
        require(dim >= 1 && dim <= kMaxDim, "FreqIndex dimension must be in [1, 4]");
    }

    static FreqIndex from_half(std::span<const int> half_k) {
        FreqIndex k(static_cast<int>(half_k.size()));
        for (int i = 0; i < k.dim_; ++i) k.h_[i] = half_k[i];
        return k;
    }

    static FreqIndex from_half(std::initializer_list<int> half_k) {
        return from_half(std::span<const int>(half_k.begin(), half_k.size()));
    }

    static FreqIndex from_integer(std::span<const int> m) {
        FreqIndex k(static_cast<int>(m.size()));
        for (int i = 0; i < k.dim_; ++i) k.h_[i] = 2 * m[i];
        return k;
    }

    static FreqIndex from_integer(std::initializer_list<int> m) {
        return from_integer(std::span<const int>(m.begin(), m.size()));
    }

    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] int half(int i) const noexcept { return h_[i]; }

    [[nodiscard]] std::vector<int> half_k() const { return {h_.begin(), h_.begin() + dim_}; }

    /// Integer vector m; only meaningful when is_integer().
    [[nodiscard]] IntVec integer() const {
        IntVec m(dim_);
        for (int i = 0; i < dim_; ++i) m[i] = h_[i] / 2;
        return m;
    }

    /// Sum of |half_k_i|, i.e. twice the modulus |m|.
    [[nodiscard]] int ell1_half() const noexcept {
        int s = 0;
        for (int i = 0; i < dim_; ++i) s += std::abs(h_[i]);
        return s;
    }

    [[nodiscard]] double modulus() const noexcept { return 0.5 * ell1_half(); }

    [[nodiscard]] bool is_integer() const noexcept {
        for (int i = 0; i < dim_; ++i)
            if (h_[i] % 2 != 0) return false;
        return true;
    }

    [[nodiscard]] bool is_zero() const noexcept {
        for (int i = 0; i < dim_; ++i)
            if (h_[i] != 0) return false;
        return true;
    }

    /// <m, omega> with m = half_k / 2.
    [[nodiscard]] double dot(std::span<const double> omega) const {
        long double s = 0.0L;
        for (int i = 0; i < dim_; ++i) s += static_cast<long double>(h_[i]) * omega[i];
        return static_cast<double>(0.5L * s);
    }

    /// <half_k, theta> / 2, the phase factor exponent divided by 2 pi.
    [[nodiscard]] double phase(std::span<const double> theta) const { return dot(theta); }

    [[nodiscard]] FreqIndex operator+(const FreqIndex& o) const noexcept {
        FreqIndex r = *this;
        for (int i = 0; i < dim_; ++i) r.h_[i] += o.h_[i];
        return r;
    }

    [[nodiscard]] FreqIndex operator-() const noexcept {
        FreqIndex r = *this;
        for (int i = 0; i < dim_; ++i) r.h_[i] = -r.h_[i];
        return r;
    }

    [[nodiscard]] FreqIndex operator-(const FreqIndex& o) const noexcept { return *this + (-o); }

    auto operator<=>(const FreqIndex&) const = default;
    bool operator==(const FreqIndex&) const = default;

    [[nodiscard]] std::size_t hash() const noexcept {
        std::size_t h = static_cast<std::size_t>(dim_);
        for (int i = 0; i < dim_; ++i)
            h = h * 1000003u ^ static_cast<std::size_t>(static_cast<std::uint32_t>(h_[i]));
        return h;
    }

private:
    // dim_ first so the defaulted ordering groups by dimension.
    int dim_ = 0;
    std::array<std::int32_t, kMaxDim> h_{};
};

struct FreqIndexHash {
    std::size_t operator()(const FreqIndex& k) const noexcept { return k.hash(); }
};

}  // namespace kamred
