#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "test_util.hpp"

using namespace kt;

namespace {

TorusMap constant_system(const Sl2& a) { return TorusMap::constant(2, a.complex()); }

const std::vector<double> kOrigin{0.0, 0.0};

/// E = 1 Schrodinger operator with potential 0.3 (cos 2 pi theta_1 + cos 2 pi theta_2).
TorusMap schrodinger_full() {
    io::SchrodingerSpec spec;
    spec.E = 1.0;
    spec.V = {{{1, 0}, 0.3}, {{0, 1}, 0.3}};
    const auto [a, f] = io::schrodinger_system(spec, 2);
    return add_constant(f, a.complex());
}

ScheduleInputs operational(double eps0, const ApproxFn& g = ApproxFn::power(2.0)) {
    ScheduleInputs in;
    in.eps0 = eps0;
    in.g = g;
    in.policy = EpsPolicy::Operational;
    return in;
}

}  // namespace

TEST(RotationNumber, CounterclockwiseGenerator) {
    const double rho0 = 0.7;
    const auto est = rotation_number(constant_system(Sl2::from_entries(0.0, -rho0, rho0)), kGoldenOmega, kOrigin, 0.3,
                                     1000.0, 1e-2);
    EXPECT_NEAR(est.rho, rho0, 2.0 * est.error_estimate + 1e-12);
    EXPECT_GE(est.error_estimate, std::abs(est.rho - est.rho_half_step));
}

TEST(RotationNumber, ClockwiseGeneratorHasNegativeSign) {
    // X(t) is a rotation by -rho0 t in the counterclockwise convention.
    const double rho0 = 0.7;
    const auto est = rotation_number(constant_system(Sl2::from_entries(0.0, rho0, -rho0)), kGoldenOmega, kOrigin, 0.0,
                                     1000.0, 1e-2);
    EXPECT_NEAR(est.rho, -rho0, 2.0 * est.error_estimate + 1e-12);
}

TEST(RotationNumber, HyperbolicHasNoWinding) {
    const auto est =
        rotation_number(constant_system(Sl2::from_entries(0.8, 0.0, 0.0)), kGoldenOmega, kOrigin, 1.0, 1000.0, 1e-2);
    EXPECT_LT(std::abs(est.rho), 1e-6);
}

TEST(RotationNumber, IndependentOfStartingPhaseAndDirection) {
    const TorusMap sys = schrodinger_full();
    const auto ref = rotation_number(sys, kGoldenOmega, kOrigin, 0.0, 2000.0, 2e-2);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        const std::vector<double> theta0{u(rng), u(rng)};
        const double phi0 = 2.0 * std::numbers::pi * u(rng);
        const auto est = rotation_number(sys, kGoldenOmega, theta0, phi0, 2000.0, 2e-2);
        EXPECT_NEAR(est.rho, ref.rho, 2.0 * std::max(est.error_estimate, ref.error_estimate)) << "choice " << i;
    }
}

TEST(RotationNumber, FourthOrderUnderStepHalving) {
    const double rho0 = 2.0;
    const TorusMap sys = constant_system(Sl2::from_entries(0.0, -rho0, rho0));
    RotationOptions opts;
    opts.refine = false;
    std::vector<double> lh, le;
    for (double h = 0.1; h > 0.01; h *= 0.5) {
        const auto est = rotation_number(sys, kGoldenOmega, kOrigin, 0.0, 100.0, h, opts);
        lh.push_back(std::log(h));
        le.push_back(std::log(std::abs(est.rho - rho0)));
    }
    ASSERT_EQ(lh.size(), 4u);
    const double mx = std::accumulate(lh.begin(), lh.end(), 0.0) / 4.0;
    const double my = std::accumulate(le.begin(), le.end(), 0.0) / 4.0;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < 4; ++i) {
        sxy += (lh[i] - mx) * (le[i] - my);
        sxx += (lh[i] - mx) * (lh[i] - mx);
    }
    EXPECT_NEAR(sxy / sxx, 4.0, 0.5);
}

TEST(RotationNumber, RejectsBadStep) {
    EXPECT_THROW((void)rotation_number(schrodinger_full(), kGoldenOmega, kOrigin, 0.0, 10.0, 0.0), Error);
    EXPECT_THROW((void)rotation_number(schrodinger_full(), kGoldenOmega, kOrigin, 0.0, 1.0, 2.0), Error);
}

TEST(RotationNumber, TooFastRotationRaisesStepTooLarge) {
    const double huge = 1e7;
    RotationOptions opts;
    opts.refine = false;
    try {
        (void)rotation_number(constant_system(Sl2::from_entries(0.0, -huge, huge)), kGoldenOmega, kOrigin, 0.0, 1.0,
                              0.5, opts);
        FAIL() << "expected StepTooLarge";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StepTooLarge);
    }
}

TEST(RotationNumber, ConjugationShiftsByLatticeOffset) {
    // Conjugating by the resonance-removal map changes rho by pi <m, omega> exactly.
    const Sl2 a = Sl2::from_entries(0.1, -2.0, 1.5);
    std::mt19937_64 rng(12);
    const TorusMap f = random_map(rng, 2, 3, 2, true, 0.05, true);
    const IntVec m{1, 0};
    const auto el = eliminate_resonance(a, m, kGoldenOmega);
    const TorusMap conj = add_constant(mul(mul(el.phi_inv, f), el.phi), el.a_tilde.complex());
    const auto before = rotation_number(add_constant(f, a.complex()), kGoldenOmega, kOrigin, 0.0, 2000.0, 1e-2);
    const auto after = rotation_number(conj, kGoldenOmega, kOrigin, 0.0, 2000.0, 1e-2);
    const double offset = std::numbers::pi * lattice_dot(m, kGoldenOmega);
    EXPECT_NEAR(std::abs(before.rho - after.rho), offset, 2.0 * (before.error_estimate + after.error_estimate));
}

TEST(RotationOfConstant, AbsImaginaryPart) {
    EXPECT_DOUBLE_EQ(rotation_of_constant(Sl2::from_entries(0.0, -0.4, 0.4)), 0.4);
    EXPECT_DOUBLE_EQ(rotation_of_constant(Sl2::from_entries(0.0, 0.4, -0.4)), 0.4);
    EXPECT_DOUBLE_EQ(rotation_of_constant(Sl2::from_entries(0.5, 0.0, 0.0)), 0.0);
}

TEST(Additivity, NoResonanceMatchesReducedConstant) {
    const Sl2 a = Sl2::from_entries(0.0, -1.0, 1.0);
    const TorusMap f = single_mode({1, 0}, Mat2(1e-12 * E12())) + single_mode({-1, 0}, Mat2(1e-12 * E12()));
    const auto s = make_schedule(operational(1e-10));
    const auto res = run(a, f, [] {
        ArithContext c;
        c.omega = kGoldenOmega;
        c.kappa = 1.0;
        return c;
    }(), s);
    ASSERT_EQ(res.certificate.status, RunStatus::Reduced);
    const auto est = rotation_number(add_constant(f, a.complex()), kGoldenOmega, kOrigin, 0.0, 1e4, 1e-2);
    const auto rep = verify_additivity(est.rho, res.certificate.B, res.trace, s, kGoldenOmega, 2.0 * est.error_estimate);
    EXPECT_TRUE(rep.ok) << rep.mismatch << " vs " << rep.bound;
    EXPECT_EQ(rep.offset, 0.0);
}

TEST(Additivity, HyperbolicLimitLeavesOnlyOffset) {
    RunTrace trace;
    StepRecord r;
    r.resonant = true;
    r.m = {1, -1};
    r.log_eps_bound = std::log(1e-20);
    trace.records.push_back(r);
    const auto s = make_schedule(operational(1e-20));
    const double offset = std::numbers::pi * (1.0 - kGolden);
    const auto rep = verify_additivity(std::abs(offset), Sl2::from_entries(0.5, 0.0, 0.0), trace, s, kGoldenOmega, 1e-12);
    EXPECT_TRUE(rep.ok);
    EXPECT_DOUBLE_EQ(rep.offset, offset);
    EXPECT_FALSE(verify_additivity(std::abs(offset) + 1e-3, 0.0, trace, s, kGoldenOmega, 1e-12).ok);
}

TEST(Additivity, ConstructedSingleResonance) {
    ArithContext ctx;
    ctx.omega = kGoldenOmega;
    ctx.kappa = 1.0;
    const Sl2 a = Sl2::from_entries(0.0, -(std::numbers::pi + 1e-12), std::numbers::pi + 1e-12);
    Mat2 c = Mat2::Zero();
    c(0, 1) = 1e-14;
    c(1, 0) = 0.5e-14;
    const TorusMap f = single_mode({1, 0}, c) + single_mode({-1, 0}, c);
    ScheduleInputs in = operational(weighted_norm(f, 1.0));
    in.r0 = 1.0;
    const auto s = make_schedule(in);
    const auto res = run(a, f, ctx, s);
    ASSERT_EQ(res.certificate.status, RunStatus::Reduced);
    ASSERT_EQ(res.trace.resonances_after_n0, 1);
    const auto est = rotation_number(add_constant(f, a.complex()), kGoldenOmega, kOrigin, 0.0, 1e4, 1e-2);
    const auto rep = verify_additivity(est.rho, res.certificate.B, res.trace, s, kGoldenOmega, 2.0 * est.error_estimate);
    EXPECT_DOUBLE_EQ(rep.offset, std::numbers::pi);
    EXPECT_TRUE(rep.ok) << rep.mismatch << " vs " << rep.bound;
}

TEST(RhoArithmetic, LatticePointIsOffender) {
    const IntVec m0{2, -1};
    const double rho = std::numbers::pi * lattice_dot(m0, kGoldenOmega);
    const auto res = check_rho_arithmetic(rho, kGoldenOmega, 1e-3, ApproxFn::power(1.0), 10);
    EXPECT_FALSE(res.ok);
    ASSERT_FALSE(res.violators.empty());
    EXPECT_EQ(res.violators.front().m, m0);
}

TEST(RhoArithmetic, FarFromLatticePasses) {
    const std::vector<double> small{0.01, 0.01 * kGolden};
    EXPECT_TRUE(check_rho_arithmetic(10.0, small, 0.1, ApproxFn::power(1.0), 50).ok);
}

TEST(RhoArithmetic, MonotoneInKappaPrime) {
    const double rho = 0.1234;
    bool failed = false;
    for (double kp = 1e-4; kp < 10.0; kp *= 2.0) {
        const bool ok = check_rho_arithmetic(rho, kGoldenOmega, kp, ApproxFn::power(1.0), 40).ok;
        if (failed) {
            EXPECT_FALSE(ok) << kp;
        }
        failed = failed || !ok;
    }
    EXPECT_TRUE(failed);
}
