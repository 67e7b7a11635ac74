#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "test_util.hpp"

using namespace kt;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1)));
    return out;
}

// Plain enumeration of the l1 ball, used as an oracle for the windowed scans.
template <class F>
void brute_ball(int d, int n, F&& f) {
    IntVec m(d, 0);
    auto rec = [&](auto&& self, int i, int rem) -> void {
        if (i == d) {
            if (ell1(m) > 0) f(m);
            return;
        }
        for (int v = -rem; v <= rem; ++v) {
            m[i] = v;
            self(self, i + 1, rem - std::abs(v));
        }
        m[i] = 0;
    };
    rec(rec, 0, n);
}

double dot(const IntVec& m, const std::vector<double>& w) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < m.size(); ++i) s += static_cast<long double>(m[i]) * w[i];
    return static_cast<double>(s);
}

KamSchedule power4_schedule(double log_eps0) {
    KamSchedule s;
    s.G = ApproxFn::power(2.0);
    s.g = ApproxFn::power(2.0);
    s.Gg = ApproxFn::power(4.0);
    s.kappa = 1.0;
    s.a = 1.0 - 1.0 / 196.0;
    s.log_eps0 = log_eps0;
    s.eps0 = std::exp(log_eps0);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Approximation functions
// ---------------------------------------------------------------------------

TEST(ApproxFn, InverseRoundTrip) {
    const std::vector<ApproxFn> fns{ApproxFn::power(2.0), ApproxFn::power(0.7), ApproxFn::exp_pow(0.5),
                                    ApproxFn::exp_log(2.0),
                                    ApproxFn::product(ApproxFn::power(2.0), ApproxFn::exp_pow(0.3))};
    for (const auto& f : fns) {
        for (double t : log_grid(1.0, 1e6, 97)) {
            const double back = f.log_inverse(f.log_value(t));
            EXPECT_NEAR(back / t, 1.0, 1e-9) << to_string(f.kind()) << " t=" << t;
        }
    }
}

TEST(ApproxFn, IncreasingAndAtLeastOne) {
    const std::vector<ApproxFn> fns{ApproxFn::power(3.0), ApproxFn::exp_pow(0.9), ApproxFn::exp_log(1.5),
                                    ApproxFn::tabulated({1.0, 2.0, 2.0, 7.0})};
    for (const auto& f : fns) {
        double prev = -1.0;
        for (double t : log_grid(1.0, 1e4, 200)) {
            const double v = f.log_value(t);
            EXPECT_GE(v, 0.0);
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(ApproxFn, ExpLogIsContinuousAtKnee) {
    const auto f = ApproxFn::exp_log(2.0);
    const double knee = std::exp(2.0);
    EXPECT_NEAR(f.log_value(knee * (1 - 1e-12)), f.log_value(knee * (1 + 1e-12)), 1e-9);
}

TEST(ApproxFn, TabulatedInverseHitsJump) {
    const auto f = ApproxFn::tabulated({2.0, 3.0, 5.0});
    EXPECT_NEAR(f.inverse(3.0), 2.0, 1e-12);
    EXPECT_NEAR(f.inverse(5.0), 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(f.value(100.0), 5.0);
}

TEST(ApproxFn, RejectsInvalidParameters) {
    EXPECT_THROW((void)ApproxFn::power(0.0), Error);
    EXPECT_THROW((void)ApproxFn::exp_pow(-1.0), Error);
    EXPECT_THROW((void)ApproxFn::tabulated({}), Error);
    EXPECT_THROW((void)ApproxFn::tabulated({0.5}), Error);
    EXPECT_THROW((void)ApproxFn::tabulated({3.0, 2.0}), Error);
}

TEST(TailIntegral, PowerEqualsExponent) {
    for (double mu : {0.5, 2.0, 4.0, 7.5}) EXPECT_NEAR(tail_integral(ApproxFn::power(mu), 1.0, 2.0).value, mu, 1e-12);
}

TEST(TailIntegral, PowerFromLowerLimit) {
    // int_L^inf mu log t / t^2 = mu (log L + 1) / L
    const double L = 7.0;
    EXPECT_NEAR(tail_integral(ApproxFn::power(3.0), L, 2.0).value, 3.0 * (std::log(L) + 1.0) / L, 1e-13);
}

TEST(TailIntegral, ExpPowHalfIsTwo) {
    EXPECT_NEAR(tail_integral(ApproxFn::exp_pow(0.5), 1.0, 2.0).value, 2.0, 1e-13);
}

TEST(TailIntegral, ExpPowOneDiverges) {
    try {
        (void)tail_integral(ApproxFn::exp_pow(1.0), 1.0, 2.0);
        FAIL() << "expected Divergent";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Divergent);
    }
}

TEST(TailIntegral, ExpLogClosedForms) {
    // delta = 2, p = 2: 1/4 * log(e^2) + 1/log(e^2) = 1
    EXPECT_NEAR(tail_integral(ApproxFn::exp_log(2.0), 1.0, 2.0).value, 1.0, 1e-13);
    // delta = 2, p = 3: (1 - e^-2)/4 + e^-2/2 - E1(2)
    const double e1_2 = -std::expint(-2.0);
    const double expect = (1.0 - std::exp(-2.0)) / 4.0 + std::exp(-2.0) / 2.0 - e1_2;
    EXPECT_NEAR(tail_integral(ApproxFn::exp_log(2.0), 1.0, 3.0).value, expect, 1e-11);
    EXPECT_THROW((void)tail_integral(ApproxFn::exp_log(1.0), 1.0, 2.0), Error);
}

TEST(TailIntegral, TabulatedPiecewise) {
    const auto f = ApproxFn::tabulated({2.0, 3.0, 5.0});
    const double expect = std::log(2.0) * 0.5 + std::log(3.0) * (0.5 - 1.0 / 3.0) + std::log(5.0) / 3.0;
    EXPECT_NEAR(tail_integral(f, 1.0, 2.0).value, expect, 1e-14);
}

TEST(TailIntegral, ProductIsSum) {
    const auto f = ApproxFn::product(ApproxFn::power(2.0), ApproxFn::exp_pow(0.5));
    EXPECT_NEAR(tail_integral(f, 1.0, 2.0).value, 4.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Frequency non-resonance
// ---------------------------------------------------------------------------

TEST(NrOmega, GoldenPasses) {
    const auto r = check_nr_omega(kGoldenOmega, 0.2, ApproxFn::power(2.0), 50);
    EXPECT_TRUE(r.ok);
    // The worst index for t^2 is the unit vector e1: |1| * 1 / 0.2.
    EXPECT_EQ(r.worst_m, (IntVec{1, 0}));
    EXPECT_NEAR(r.worst_ratio(), 5.0, 1e-12);
}

TEST(NrOmega, RationalFails) {
    const auto r = check_nr_omega(std::vector<double>{1.0, 0.5}, 0.2, ApproxFn::power(2.0), 50);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.worst_m, (IntVec{1, -2}));
}

TEST(NrOmega, VacuousAtZero) {
    const auto r = check_nr_omega(std::vector<double>{1.0, 0.5}, 0.2, ApproxFn::power(2.0), 0);
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(r.worst_m.empty());
}

TEST(NrOmega, WindowedMatchesBruteForce2D) {
    // N = 400 in d = 2 exceeds the exhaustive budget.
    const double kappa = 2.0;
    const auto G = ApproxFn::power(1.0);
    const auto r = check_nr_omega(kGoldenOmega, kappa, G, 400);
    double best = std::numeric_limits<double>::infinity();
    IntVec best_m;
    brute_ball(2, 400, [&](const IntVec& m) {
        if (m[0] < 0 || (m[0] == 0 && m[1] < 0)) return;
        const double v = std::abs(dot(m, kGoldenOmega)) * ell1(m) / kappa;
        if (v < best) best = v, best_m = m;
    });
    ASSERT_LT(best, 1.0);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.worst_m, best_m);
    EXPECT_NEAR(r.worst_ratio(), best, 1e-9 * best);
}

TEST(NrOmega, WindowedMatchesBruteForce3D) {
    const std::vector<double> w{1.0, std::sqrt(2.0), std::sqrt(3.0)};
    const double kappa = 0.5;
    const auto G = ApproxFn::power(2.0);
    const auto r = check_nr_omega(w, kappa, G, 120);
    double best = std::numeric_limits<double>::infinity();
    IntVec best_m;
    brute_ball(3, 120, [&](const IntVec& m) {
        if (!(m > IntVec(3, 0))) return;
        const double v = std::abs(dot(m, w)) * ell1(m) * ell1(m) / kappa;
        if (v < best) best = v, best_m = m;
    });
    ASSERT_LT(best, 1.0);
    EXPECT_EQ(r.worst_m, best_m);
    EXPECT_NEAR(r.worst_ratio(), best, 1e-8 * best);
}

namespace {

/// Exact window members, solving for the last coordinate in long double.
std::set<IntVec> window_oracle(const std::vector<double>& w, int n, long double center, long double hw) {
    std::set<IntVec> out;
    const int d = static_cast<int>(w.size());
    IntVec m(d, 0);
    auto rec = [&](auto&& self, int i, long double partial, int rem) -> void {
        if (i == d - 1) {
            const long double x = (center - partial) / w[d - 1];
            for (long long k = std::llround(x) - 1; k <= std::llround(x) + 1; ++k) {
                if (std::llabs(k) > rem) continue;
                m[d - 1] = static_cast<int>(k);
                if (ell1(m) > 0 && std::abs(partial + k * static_cast<long double>(w[d - 1]) - center) <= hw)
                    out.insert(m);
            }
            return;
        }
        for (int v = -rem; v <= rem; ++v) {
            m[i] = v;
            self(self, i + 1, partial + v * static_cast<long double>(w[i]), rem - std::abs(v));
        }
        m[i] = 0;
    };
    rec(rec, 0, 0.0L, n);
    return out;
}

void expect_window_matches(const std::vector<double>& w, int n, long double center, long double hw) {
    const auto expected = window_oracle(w, n, center, hw);
    std::set<IntVec> got;
    detail::for_each_in_window(w, n, center, hw, [&](const IntVec& m) {
        long double dot = 0.0L;
        for (std::size_t i = 0; i < w.size(); ++i) dot += m[i] * static_cast<long double>(w[i]);
        EXPECT_LE(ell1(m), n);
        if (std::abs(dot - center) <= hw) got.insert(m);
    });
    EXPECT_EQ(got, expected) << "n " << n << " center " << static_cast<double>(center);
}

}  // namespace

TEST(WindowSearch, LargeBallMatchesExactEnumeration2D) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int trial = 0; trial < 20; ++trial) {
        const long double hw = std::pow(10.0L, -2 - trial % 4);
        expect_window_matches(kGoldenOmega, 30000, u(rng), hw);
        expect_window_matches({std::sqrt(2.0), -1.0}, 20000, u(rng), hw);
    }
    // Exact lattice point as center.
    expect_window_matches(kGoldenOmega, 50000, 3.0L + 5.0L * static_cast<long double>(kGolden), 1e-12L);
}

TEST(WindowSearch, LargeBallMatchesExactEnumeration3D) {
    const std::vector<double> w{1.0, std::sqrt(2.0), std::sqrt(3.0)};
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    expect_window_matches(w, 4200, u(rng), 1e-5L);
}

TEST(FitG, GoldenFibonacciSteps) {
    const auto fit = fit_G(kGoldenOmega, 5);
    ASSERT_EQ(fit.rows.size(), 5u);
    EXPECT_DOUBLE_EQ(fit.kappa, 1.0);
    const double phi = kGolden;
    const double expect[5] = {1.0, phi, phi * phi, phi * phi, phi * phi * phi};
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(fit.rows[i].G, expect[i], 1e-12) << "N=" << i + 1;
    EXPECT_EQ(fit.rows[4].argmin, (IntVec{3, -2}));
}

TEST(FitG, MonotoneAndConsistent) {
    const std::vector<double> w{1.0, std::sqrt(2.0), std::cbrt(5.0)};
    const auto fit = fit_G(w, 40);
    for (std::size_t i = 1; i < fit.rows.size(); ++i) EXPECT_GE(fit.rows[i].G, fit.rows[i - 1].G);
    const auto G = fit.as_function();
    EXPECT_TRUE(check_nr_omega(w, fit.kappa * (1 - 1e-12), G, 40).ok);
}

TEST(FitG, OneDimensionalIsConstant) {
    const auto fit = fit_G(std::vector<double>{0.7}, 30);
    for (const auto& row : fit.rows) EXPECT_NEAR(row.G, 1.0, 1e-15);
}

TEST(FitG, ResonantFrequencyHasNoFunction) {
    const auto fit = fit_G(std::vector<double>{1.0, 2.0}, 4);
    EXPECT_TRUE(std::isinf(fit.rows.back().G));
    EXPECT_THROW((void)fit.as_function(), Error);
}

// ---------------------------------------------------------------------------
// Eigenvalue non-resonance
// ---------------------------------------------------------------------------

TEST(NrAlpha, ZeroEigenvaluePasses) {
    // min over m of pi |<m,omega>| |m|^2 is pi, at +-e1; ties go to the smaller index.
    const auto r = check_nr_alpha(cplx(0.0, 0.0), kGoldenOmega, 0.5, ApproxFn::power(2.0), 50);
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(r.exhaustive);
    EXPECT_EQ(r.worst_m, (IntVec{-1, 0}));
    EXPECT_NEAR(r.worst_ratio(), std::numbers::pi / 0.5, 1e-12);
}

TEST(NrAlpha, LatticePointIsOffender) {
    const IntVec m0{2, -1};
    const cplx alpha(0.0, std::numbers::pi * dot(m0, kGoldenOmega));
    const auto r = check_nr_alpha(alpha, kGoldenOmega, 0.5, ApproxFn::power(2.0), 50);
    EXPECT_FALSE(r.ok);
    ASSERT_FALSE(r.violators.empty());
    EXPECT_EQ(r.violators.front().m, m0);
    EXPECT_LT(r.violators.front().distance, 1e-12);
}

TEST(NrAlpha, LargeRealPartPasses) {
    const IntVec m0{2, -1};
    const cplx alpha(10.0, std::numbers::pi * dot(m0, kGoldenOmega));
    EXPECT_TRUE(check_nr_alpha(alpha, kGoldenOmega, 0.5, ApproxFn::power(2.0), 50).ok);
    EXPECT_TRUE(check_nr_alpha(alpha, kGoldenOmega, 0.5, ApproxFn::power(2.0), 2000).ok);
}

TEST(NrAlpha, MonotoneInKappaPrime) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const cplx alpha(0.01 * u(rng), u(rng));
        std::size_t prev = 0;
        bool failed = false;
        for (double kp : {0.01, 0.05, 0.2, 1.0, 5.0}) {
            const auto r = check_nr_alpha(alpha, kGoldenOmega, kp, ApproxFn::power(1.0), 60, 100000);
            EXPECT_GE(r.violators.size(), prev);
            if (failed) {
                EXPECT_FALSE(r.ok);
            }
            failed = !r.ok;
            prev = r.violators.size();
        }
    }
}

TEST(NrAlpha, WindowedViolatorsMatchBruteForce) {
    const cplx alpha(1e-3, 1.2345);
    const double kp = 1.0;
    const auto g = ApproxFn::power(1.0);
    const auto r = check_nr_alpha(alpha, kGoldenOmega, kp, g, 400, 1000000);
    EXPECT_FALSE(r.exhaustive);
    std::set<IntVec> expect;
    brute_ball(2, 400, [&](const IntVec& m) {
        const double d = std::hypot(alpha.real(), alpha.imag() - std::numbers::pi * dot(m, kGoldenOmega));
        if (d * ell1(m) < kp) expect.insert(m);
    });
    ASSERT_FALSE(expect.empty());
    std::set<IntVec> got;
    for (const auto& o : r.violators) got.insert(o.m);
    EXPECT_EQ(got, expect);
}

TEST(NrAlpha, RotationNumberWrapper) {
    const IntVec m0{1, 1};
    const double rho = std::numbers::pi * dot(m0, kGoldenOmega) + 1e-9;
    const auto r = check_rho_arithmetic(rho, kGoldenOmega, 0.1, ApproxFn::power(2.0), 20);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.violators.front().m, m0);
}

// ---------------------------------------------------------------------------
// Growth comparison
// ---------------------------------------------------------------------------

TEST(RatioBounded, PowerPairIsBoundedBySup1) {
    const auto r = ratio_bounded(ApproxFn::power(1.0), ApproxFn::power(2.0), 1.0, 1e6, 200);
    EXPECT_TRUE(r.bounded);
    EXPECT_NEAR(r.sup_estimate, 1.0, 1e-12);
}

TEST(RatioBounded, PowerPairUnbounded) {
    EXPECT_FALSE(ratio_bounded(ApproxFn::power(2.0), ApproxFn::power(2.0), 1.0, 1e6, 200).bounded);
}

TEST(RatioBounded, ExpPowPairs) {
    // g(t^2) = exp(t^{2 alpha'}) against G(t) = exp(t^alpha).
    EXPECT_TRUE(ratio_bounded(ApproxFn::exp_pow(0.4), ApproxFn::exp_pow(0.9), 1.0, 1e6, 200).bounded);
    EXPECT_FALSE(ratio_bounded(ApproxFn::exp_pow(0.6), ApproxFn::exp_pow(0.9), 1.0, 1e6, 200).bounded);
}

TEST(RatioBounded, PolynomialAgainstExponential) {
    EXPECT_TRUE(ratio_bounded(ApproxFn::power(5.0), ApproxFn::exp_pow(0.1), 1.0, 1e6, 200).bounded);
    EXPECT_FALSE(ratio_bounded(ApproxFn::exp_pow(0.1), ApproxFn::power(5.0), 1.0, 1e6, 200).bounded);
}

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

TEST(Schedule, SequenceNFrozenValue) {
    const auto s = power4_schedule(std::log(1e-20));
    EXPECT_EQ(sequence_N(s, 0), 71);
    // 71^8 <= (1/196)^2 / (4e-20) < 72^8
    const long double bound = (1.0L / 196) * (1.0L / 196) / (4e-20L);
    EXPECT_LE(std::pow(71.0L, 8), bound);
    EXPECT_GT(std::pow(72.0L, 8), bound);
}

TEST(Schedule, SequenceNBracketsAndIncreases) {
    const auto s = power4_schedule(std::log(1e-20));
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> u(0, 45);
    for (int i = 0; i < 50; ++i) {
        const int n = u(rng);
        const int N = s.N(n);
        const long double log_bound =
            2.0L * std::log(1.0L / 196) - std::log(4.0L) - (0.5L * n * std::log(1.0L / 196) + std::log(1e-20L));
        EXPECT_LE(8.0L * std::log(static_cast<long double>(N)), log_bound * (1 + 1e-15L)) << n;
        EXPECT_GT(8.0L * std::log(static_cast<long double>(N) + 1), log_bound * (1 - 1e-15L)) << n;
    }
    int prev = 0;
    for (int n = 0; n < 46; ++n) {
        EXPECT_GE(s.N(n), prev);
        prev = s.N(n);
    }
}

TEST(Schedule, SequenceNMissingThrows) {
    const auto s = power4_schedule(std::log(0.1));
    try {
        (void)s.N(0);
        FAIL() << "expected OutsideRegime";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::OutsideRegime);
    }
}

TEST(Schedule, ABarAndC0) {
    EXPECT_DOUBLE_EQ(a_bar_of(ApproxFn::power(4.0)), 1.0 / 256.0);
    EXPECT_DOUBLE_EQ(a_bar_of(ApproxFn::power(2.0)), 1.0 / 196.0);
    EXPECT_DOUBLE_EQ(c0_of(ApproxFn::power(4.0), 0.5, 0), 0.5 / 64.0);
    // log(t+1)/t decreases, so the sup sits at t = 1.
    EXPECT_NEAR(c0_of(ApproxFn::power(4.0), 0.5, 2), 0.5 / (1024.0 * (1.0 + 4.0 * std::log(2.0))), 1e-15);
}

TEST(Schedule, EpsDecaysGeometrically) {
    const auto s = power4_schedule(std::log(1e-10));
    for (int n = 0; n < 10; ++n) EXPECT_NEAR(s.eps(n + 2) / s.eps(n), 1.0 / 196.0, 1e-12);
}

TEST(Schedule, StrictPolicyInfeasibleForSmallStrip) {
    // The second condition needs log eps0 below -7000 here.
    ScheduleInputs in;
    in.r0 = 0.5;
    in.policy = EpsPolicy::Strict;
    try {
        (void)make_schedule(in);
        FAIL() << "expected NoFeasibleEpsilon";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoFeasibleEpsilon);
    }
    in.policy = EpsPolicy::IntegralOnly;
    const auto s = make_schedule(in);
    EXPECT_TRUE(s.verdicts[0].ok);
    EXPECT_FALSE(s.verdicts[1].ok);
}

TEST(Schedule, StrictPolicyMeetsBothConditions) {
    ScheduleInputs in;
    in.kappa = 1.0;
    in.r0 = 50.0;
    in.eps0 = 1e-3;
    in.policy = EpsPolicy::Strict;
    const auto s = make_schedule(in);
    EXPECT_LE(s.eps0, 1e-3);
    EXPECT_TRUE(all_ok(s.verdicts));
    EXPECT_FALSE(check_condepsilon(s.Gg, s.kappa, s.a, s.r0, s.n0, s.log_eps0 + 2.0 * std::numbers::ln2).ok &&
                 check_condepsilon2(s.kappa, s.a, s.c0, s.C_prime, s.log_eps0 + 2.0 * std::numbers::ln2).ok);
}

TEST(Schedule, OperationalKeepsEpsAndRecordsVerdicts) {
    ScheduleInputs in;
    in.eps0 = 1e-10;
    in.policy = EpsPolicy::Operational;
    const auto s = make_schedule(in);
    EXPECT_DOUBLE_EQ(s.eps0, 1e-10);
    ASSERT_EQ(s.verdicts.size(), 3u);
    EXPECT_EQ(s.verdicts[0].name, "condepsilon");
    EXPECT_FALSE(s.verdicts[0].ok);
    EXPECT_EQ(s.verdicts[2].name, "N_exists");
    EXPECT_TRUE(s.verdicts[2].ok);
}

TEST(Schedule, NExistsVerdictFailsForLargeEps) {
    ScheduleInputs in;
    in.eps0 = 1e-3;
    in.policy = EpsPolicy::Operational;
    EXPECT_FALSE(make_schedule(in).verdicts[2].ok);
}

TEST(Schedule, RejectsAOutsideRange) {
    ScheduleInputs in;
    in.a = 0.5;
    EXPECT_THROW((void)make_schedule(in), Error);
}

TEST(Smallness, DiophantinePassesTailCondition) {
    for (double p : {4.0, 5.0, 6.5})
        for (double r0 : {0.1, 0.5, 1.0})
            for (int n0 : {0, 1, 2}) {
                const auto v = smallness_explicit(SmallnessCase::dioph(p), 1.0, r0, n0);
                const auto gg = ApproxFn::power(p);
                const double a = 1.0 - a_bar_of(gg);
                EXPECT_TRUE(check_condepsilon(gg, 1.0, a, r0, n0, v.log_eps0).ok) << p << " " << r0 << " " << n0;
            }
}

TEST(Smallness, DiophantineClosedForm) {
    // (r0 / (4^{n0+3} (mu+mu')))^{4 (mu+mu')} kappa with r0 = 1, n0 = 0, mu+mu' = 4, kappa = 0.5
    const auto v = smallness_explicit(SmallnessCase::dioph(4.0), 0.5, 1.0, 0);
    EXPECT_NEAR(v.log_eps0, 16.0 * std::log(1.0 / 256.0) + std::log(0.5), 1e-12);
}

TEST(Smallness, ExponentialPassesTailCondition) {
    const auto c = SmallnessCase::exp(0.5, 0.3);
    for (double r0 : {0.1, 0.5, 1.0})
        for (int n0 : {0, 1, 2}) {
            const auto v = smallness_explicit(c, 1.0, r0, n0);
            EXPECT_TRUE(std::isfinite(v.log_eps0));
            const auto gg = c.product();
            EXPECT_TRUE(check_condepsilon(gg, 1.0, 1.0 - a_bar_of(gg), r0, n0, v.log_eps0).ok) << r0 << " " << n0;
        }
}

TEST(Smallness, ExponentialUnderflowHandledInLogSpace) {
    const auto c = SmallnessCase::exp(0.5, 0.3);
    const auto v = smallness_explicit(c, 1.0, 0.5, 5);
    EXPECT_EQ(v.eps0, 0.0);
    EXPECT_TRUE(std::isfinite(v.log_eps0));
    // base = 2 * 4^7 / (0.5 * 0.5) = 131072, exponent alpha/(1-alpha) = 1
    EXPECT_NEAR(v.log_eps0, std::log(0.25) - 2.0 * 131072.0, 1e-9);
    const auto gg = c.product();
    EXPECT_TRUE(check_condepsilon(gg, 1.0, 1.0 - a_bar_of(gg), 0.5, 5, v.log_eps0).ok);
}

TEST(Smallness, ExpLogPassesTailCondition) {
    const auto c = SmallnessCase::exp_log(3.0, 0.5);
    const auto v = smallness_explicit(c, 1.0, 0.5, 0);
    ASSERT_TRUE(std::isfinite(v.log_eps0));
    const auto gg = c.product();
    EXPECT_TRUE(check_condepsilon(gg, 1.0, 1.0 - a_bar_of(gg), 0.5, 0, v.log_eps0).ok);
}

TEST(Brjuno, IntegralAndThreshold) {
    const auto G = ApproxFn::power(2.0), g = ApproxFn::power(2.0);
    const double a = 1.0 - 1.0 / 196.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int n0 : {0, 1, 2, 3}) {
        const auto b = brjuno_sum_threshold(1.0, 0.5, n0, a, G, g);
        EXPECT_NEAR(b.integral, 4.0, 1e-12);
        const double expect = -0.5 / std::pow(4.0, n0) - std::abs(std::log(0.5) - n0 * std::log(1.0 / 196.0)) - 8.0;
        EXPECT_NEAR(b.value.log_eps0, expect, 1e-12);
        EXPECT_LT(b.value.log_eps0, prev);
        prev = b.value.log_eps0;
    }
}

TEST(Brjuno, DivergentIntegralThrows) {
    EXPECT_THROW((void)brjuno_sum_threshold(1.0, 0.5, 0, 0.999, ApproxFn::exp_pow(1.0), ApproxFn::power(1.0)), Error);
}

TEST(StripBound, PowerCaseFinite) {
    ScheduleInputs in;
    in.eps0 = 1e-12;
    in.policy = EpsPolicy::Operational;
    const auto s = make_schedule(in);
    const auto b = rn_lower_bound(s);
    EXPECT_TRUE(std::isfinite(b.chain_bound));
    EXPECT_TRUE(std::isfinite(b.direct_bound));
    EXPECT_DOUBLE_EQ(b.floor, 0.5 / 4.0);
    EXPECT_LT(b.direct_bound, 0.5);
    EXPECT_GT(b.direct_bound, 0.0);
}

TEST(StripBound, SubexponentialFiniteAndExponentialDiverges) {
    ScheduleInputs in;
    in.G = ApproxFn::exp_pow(0.5);
    in.g = ApproxFn::exp_pow(0.3);
    in.log_eps0 = -400.0;
    in.policy = EpsPolicy::Operational;
    const auto b = rn_lower_bound(make_schedule(in));
    EXPECT_TRUE(std::isfinite(b.chain_bound));

    in.G = ApproxFn::exp_pow(1.0);
    in.g = ApproxFn::power(1.0);
    try {
        (void)rn_lower_bound(make_schedule(in));
        FAIL() << "expected Divergent";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Divergent);
    }
}
