#include <gtest/gtest.h>

#include <Eigen/LU>

#include "test_util.hpp"

using namespace kt;

// ---------------------------------------------------------------------------
// Frequency indices
// ---------------------------------------------------------------------------

TEST(FreqIndex, ModulusCountsHalfSteps) {
    const FreqIndex k = FreqIndex::from_half({1, -3});
    EXPECT_DOUBLE_EQ(k.modulus(), 2.0);
    EXPECT_FALSE(k.is_integer());
    EXPECT_TRUE(FreqIndex::from_integer({2, -1}).is_integer());
    EXPECT_DOUBLE_EQ(FreqIndex::from_integer({2, -1}).modulus(), 3.0);
}

TEST(FreqIndex, DotUsesHalfFrequencies) {
    const std::vector<double> w{1.0, 2.0};
    EXPECT_DOUBLE_EQ(FreqIndex::from_half({1, 1}).dot(w), 1.5);
    EXPECT_DOUBLE_EQ(FreqIndex::from_integer({1, -1}).dot(w), -1.0);
}

// ---------------------------------------------------------------------------
// Weighted norm and truncation
// ---------------------------------------------------------------------------

TEST(TorusMapNorm, ConstantMapNormIsOperatorNormForAnyStrip) {
    std::mt19937_64 rng(1);
    const Mat2 m = random_matrix(rng);
    const TorusMap f = TorusMap::constant(2, m);
    for (double r : {0.0, 0.3, 2.0}) EXPECT_NEAR(weighted_norm(f, r), svd_norm(m), 1e-14 * svd_norm(m));
}

TEST(TorusMapNorm, CosineMapMatchesDirectSum) {
    std::mt19937_64 rng(2);
    const Mat2 m = random_matrix(rng, 1.0, true);
    // 2 cos(2 pi theta) M has coefficients M at k = +-1.
    const TorusMap f = TorusMap::from_entries(
        1, {{FreqIndex::from_integer({1}), m}, {FreqIndex::from_integer({-1}), m}}, true);
    const double expected = 2.0 * svd_norm(m) * std::exp(2.0 * std::numbers::pi * 0.1);
    EXPECT_NEAR(weighted_norm(f, 0.1), expected, 1e-14 * expected);
}

TEST(TorusMapNorm, EmptyMapHasZeroNorm) { EXPECT_EQ(weighted_norm(TorusMap::zero(3), 0.7), 0.0); }

TEST(TorusMapNorm, OperatorNormMatchesSvd) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Mat2 m = random_matrix(rng);
        EXPECT_NEAR(op_norm(m), svd_norm(m), 1e-13 * svd_norm(m));
    }
}

TEST(TorusMapNorm, MonotoneInStripWidth) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        const TorusMap f = random_map(rng, 2, 10, 6, i % 2 == 0);
        EXPECT_LE(weighted_norm(f, 0.1), weighted_norm(f, 0.2));
        EXPECT_LE(weighted_norm(f, 0.0), weighted_norm(f, 0.1));
    }
}

TEST(TorusMapNorm, SupOfValuesBoundedByNorm) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const TorusMap f = random_map(rng, 2, 12, 5, true);
    const double bound = weighted_norm(f, 0.0);
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> th{u(rng), u(rng)};
        EXPECT_LE(svd_norm(eval(f, th)), bound * (1.0 + 1e-13));
    }
}

TEST(Truncate, ConstantMapUnchanged) {
    const TorusMap f = TorusMap::constant(2, E12());
    const TorusMap t = truncate(f, 0.0);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t.coeff(FreqIndex(2)), E12());
}

TEST(Truncate, KeepsOnlyModesWithinRadius) {
    const Mat2 i = Mat2::Identity();
    const TorusMap f = TorusMap::from_entries(
        2, {{FreqIndex::from_integer({1, 0}), i}, {FreqIndex::from_integer({2, 1}), i}, {FreqIndex::from_integer({0, -1}), i}},
        false);
    const TorusMap t = truncate(f, 2.0);
    EXPECT_EQ(t.size(), 2u);
    for (const auto& [k, c] : t.entries()) EXPECT_EQ(k.modulus(), 1.0);
}

TEST(Truncate, TailNormIsDifferenceOfNorms) {
    std::mt19937_64 rng(6);
    const TorusMap f = random_map(rng, 2, 20, 8, false);
    const TorusMap low = truncate(f, 4.0);
    const TorusMap tail = subtract(f, low);
    const double r = 0.3;
    const double lhs = weighted_norm(tail, r);
    const double rhs = weighted_norm(f, r) - weighted_norm(low, r);
    EXPECT_NEAR(lhs, rhs, 1e-13 * weighted_norm(f, r));
}

// ---------------------------------------------------------------------------
// Products, derivative, exponential
// ---------------------------------------------------------------------------

TEST(Mul, ConstantsMultiplyAsMatrices) {
    std::mt19937_64 rng(7);
    const Mat2 a = random_matrix(rng), b = random_matrix(rng);
    const TorusMap p = mul(TorusMap::constant(1, a), TorusMap::constant(1, b));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_LT(svd_norm(p.coeff(FreqIndex(1)) - a * b), 1e-14);
}

TEST(Mul, DeltasConvolve) {
    const Mat2 i = Mat2::Identity();
    const TorusMap p = mul(single_mode({1, 2}, i), single_mode({-3, 1}, i));
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.entries()[0].first, FreqIndex::from_integer({-2, 3}));
    EXPECT_EQ(p.entries()[0].second, i);
}

TEST(Mul, Submultiplicative) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 100; ++i) {
        const TorusMap a = random_map(rng, 2, 10, 5, false);
        const TorusMap b = random_map(rng, 2, 10, 5, false);
        const double r = 0.25;
        EXPECT_LE(weighted_norm(mul(a, b), r), weighted_norm(a, r) * weighted_norm(b, r) * (1.0 + 1e-13));
    }
}

TEST(DirDerivative, ConstantMapVanishes) {
    EXPECT_TRUE(dir_derivative(TorusMap::constant(2, E12()), kGoldenOmega).empty());
}

TEST(DirDerivative, SingleModeMultipliesByFrequency) {
    std::mt19937_64 rng(9);
    const Mat2 c = random_matrix(rng);
    const IntVec m{2, -1};
    const TorusMap d = dir_derivative(single_mode(m, c), kGoldenOmega);
    const cplx factor(0.0, 2.0 * std::numbers::pi * (2.0 - kGolden));
    EXPECT_LT(svd_norm(d.coeff(FreqIndex::from_integer(m)) - factor * c), 1e-13);
}

TEST(DirDerivative, HalfLatticeModeUsesHalfFrequency) {
    const Mat2 c = Mat2::Identity();
    const TorusMap f = TorusMap::from_entries(2, {{FreqIndex::from_half({1, 0}), c}}, false);
    const TorusMap d = dir_derivative(f, kGoldenOmega);
    EXPECT_NEAR(std::abs(d.coeff(FreqIndex::from_half({1, 0}))(0, 0) - cplx(0.0, std::numbers::pi)), 0.0, 1e-14);
}

TEST(DirDerivative, LeibnizRule) {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 20; ++i) {
        const TorusMap a = random_map(rng, 2, 6, 4, false);
        const TorusMap b = random_map(rng, 2, 6, 4, false);
        const TorusMap lhs = dir_derivative(mul(a, b), kGoldenOmega);
        const TorusMap rhs = add(mul(dir_derivative(a, kGoldenOmega), b), mul(a, dir_derivative(b, kGoldenOmega)));
        EXPECT_LT(weighted_norm(subtract(lhs, rhs), 0.2), 1e-12 * (1.0 + weighted_norm(lhs, 0.2)));
    }
}

TEST(ExpMap, ZeroGivesIdentity) {
    const ExpResult e = exp_map(TorusMap::zero(2), 0.5, 1e-16);
    ASSERT_EQ(e.value.size(), 1u);
    EXPECT_EQ(e.value.coeff(FreqIndex(2)), Mat2(Mat2::Identity()));
    EXPECT_EQ(e.tail_bound, 0.0);
}

TEST(ExpMap, NilpotentConstantIsExact) {
    const Mat2 x = 0.3 * E12();
    const ExpResult e = exp_map(TorusMap::constant(1, x), 0.5, 1e-16);
    ASSERT_EQ(e.value.size(), 1u);
    EXPECT_EQ(e.value.coeff(FreqIndex(1)), Mat2(Mat2::Identity() + x));
}

TEST(ExpMap, InverseByNegation) {
    std::mt19937_64 rng(11);
    const double r = 0.2;
    for (int i = 0; i < 20; ++i) {
        TorusMap x = random_map(rng, 2, 5, 3, i % 2 == 0, 1.0);
        x = scale(x, 0.3 / weighted_norm(x, r));
        const TorusMap p = mul(exp_map(x, r, 1e-15).value, exp_map(scale(x, -1.0), r, 1e-15).value);
        EXPECT_LT(weighted_norm(subtract(p, TorusMap::identity(2)), r), 1e-12);
    }
}

TEST(ExpMap, RejectsLargeArgument) {
    const TorusMap x = TorusMap::constant(1, 2.0 * E12());
    EXPECT_THROW((void)exp_map(x, 0.0, 1e-16), Error);
}

TEST(ExpMap, TailBoundCertified) {
    std::mt19937_64 rng(12);
    TorusMap x = random_map(rng, 1, 4, 3, false);
    x = scale(x, 0.9 / weighted_norm(x, 0.1));
    const ExpResult coarse = exp_map(x, 0.1, 1e-6);
    const ExpResult fine = exp_map(x, 0.1, 1e-18);
    EXPECT_LE(weighted_norm(subtract(coarse.value, fine.value), 0.1), coarse.tail_bound + 1e-15);
    EXPECT_EQ(coarse.value.truncation_debt(), coarse.tail_bound);
}

// ---------------------------------------------------------------------------
// Evaluation and reality
// ---------------------------------------------------------------------------

TEST(Eval, ConstantMapAtAnyPoint) {
    const TorusMap f = TorusMap::constant(2, E12());
    EXPECT_EQ(eval(f, std::vector<double>{0.3, 0.9}), E12());
}

TEST(Eval, RealMapIsRealOnRealPoints) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const TorusMap f = random_map(rng, 3, 15, 6, true);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> th{u(rng), u(rng), u(rng)};
        EXPECT_LT(eval(f, th).imag().cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Eval, DiscreteFourierTransformRecoversCoefficients) {
    std::mt19937_64 rng(14);
    const TorusMap f = random_map(rng, 1, 8, 10, false);
    const int n = 64;
    for (int k = -12; k <= 12; ++k) {
        Mat2 acc = Mat2::Zero();
        for (int j = 0; j < n; ++j) {
            const double th = static_cast<double>(j) / n;
            const double ph = -2.0 * std::numbers::pi * k * th;
            acc += cplx(std::cos(ph), std::sin(ph)) * eval(f, std::vector<double>{th});
        }
        acc /= static_cast<double>(n);
        EXPECT_LT(svd_norm(acc - f.coeff(FreqIndex::from_integer({k}))), 1e-13) << "k = " << k;
    }
}

TEST(Reality, PreservedByAlgebra) {
    std::mt19937_64 rng(15);
    const TorusMap a = random_map(rng, 2, 8, 4, true);
    const TorusMap b = random_map(rng, 2, 8, 4, true);
    for (const TorusMap& f : {add(a, b), mul(a, b), truncate(a, 2.0), dir_derivative(a, kGoldenOmega),
                              exp_map(scale(a, 0.3 / weighted_norm(a, 0.1)), 0.1, 1e-16).value}) {
        EXPECT_TRUE(f.is_real());
        EXPECT_LE(f.reality_defect(), 1e-14 * std::max(1.0, weighted_norm(f, 0.0)));
    }
}

TEST(Reality, RejectsAsymmetricRealDeclaration) {
    EXPECT_THROW((void)TorusMap::from_entries(1, {{FreqIndex::from_integer({1}), E12()}}, true), Error);
}

TEST(TorusMapInvariants, ZeroCoefficientsPrunedAndLatticeTracked) {
    const TorusMap f = TorusMap::from_entries(
        1, {{FreqIndex::from_integer({1}), E12()}, {FreqIndex::from_integer({1}), Mat2(-E12())}}, false);
    EXPECT_TRUE(f.empty());
    const TorusMap h = TorusMap::from_entries(1, {{FreqIndex::from_half({1}), E12()}}, false);
    EXPECT_EQ(h.lattice(), Lattice::Half);
    EXPECT_EQ(single_mode({2}, E12()).lattice(), Lattice::Integer);
}

TEST(CapSupport, BooksDroppedWeightAsDebt) {
    std::mt19937_64 rng(16);
    const TorusMap f = random_map(rng, 2, 40, 10, true);
    const double r = 0.1;
    const TorusMap capped = cap_support(f, 20, r);
    EXPECT_LE(capped.size(), 21u);
    EXPECT_TRUE(capped.is_real());
    EXPECT_LE(capped.reality_defect(), 1e-15);
    EXPECT_NEAR(weighted_norm(capped, r) + capped.truncation_debt(), weighted_norm(f, r), 1e-13 * weighted_norm(f, r));
}

// ---------------------------------------------------------------------------
// sl(2) and eigen data
// ---------------------------------------------------------------------------

TEST(Sl2, RejectsTrace) {
    RealMat2 m;
    m << 1.0, 0.0, 0.0, 1.0;
    EXPECT_THROW(Sl2{m}, Error);
}

TEST(Eigen, DiagonalHyperbolic) {
    const EigenData e = eigen(Sl2::from_entries(1.0, 0.0, 0.0));
    EXPECT_FALSE(e.defective);
    EXPECT_NEAR(std::abs(e.alpha - cplx(1.0, 0.0)), 0.0, 1e-15);
    EXPECT_LT(svd_norm(e.P - Mat2::Identity()), 1e-15);
}

TEST(Eigen, EllipticRotationGenerator) {
    const double rho = 0.7;
    // [[0, 1], [-rho^2, 0]]: det = rho^2, alpha = sqrt(-rho^2) = i rho.
    const EigenData e = eigen(Sl2::from_entries(0.0, 1.0, -rho * rho));
    EXPECT_NEAR(std::abs(e.alpha - cplx(0.0, rho)), 0.0, 1e-15);
}

TEST(Eigen, NilpotentIsDefective) {
    const EigenData e = eigen(Sl2::from_entries(0.0, 1.0, 0.0));
    EXPECT_TRUE(e.defective);
    EXPECT_EQ(e.alpha, cplx(0.0, 0.0));
    EXPECT_EQ(e.P, Mat2(Mat2::Identity()));
}

TEST(Eigen, ReconstructionNormalizationAndBranch) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 500; ++i) {
        const Sl2 a = random_sl2(rng);
        const EigenData e = eigen(a);
        if (e.defective) continue;
        Mat2 d = Mat2::Zero();
        d(0, 0) = e.alpha;
        d(1, 1) = -e.alpha;
        EXPECT_LT(svd_norm(e.P * d * e.P_inv - a.complex()), 1e-10 * (1.0 + a.norm()));
        EXPECT_NEAR(svd_norm(e.P), 1.0, 1e-13);
        EXPECT_TRUE(e.alpha.real() > 0.0 || (e.alpha.real() == 0.0 && e.alpha.imag() >= 0.0));
        const EigenData again = eigen(a);
        EXPECT_EQ(again.alpha, e.alpha);
        EXPECT_EQ(again.P, e.P);
    }
}

// ---------------------------------------------------------------------------
// Mode operator M -> 2 i pi <m, omega> M - [A, M]
// ---------------------------------------------------------------------------

namespace {

/// Matrix of the mode operator in the entry basis, assembled column by column.
Eigen::Matrix4cd mode_operator_matrix(const Mat2& a, cplx inu) {
    Eigen::Matrix4cd l;
    for (int col = 0; col < 4; ++col) {
        Mat2 basis = Mat2::Zero();
        basis(col / 2, col % 2) = 1.0;
        const Mat2 image = inu * basis - (a * basis - basis * a);
        for (int row = 0; row < 4; ++row) l(row, col) = image(row / 2, row % 2);
    }
    return l;
}

Mat2 dense_oracle(const Mat2& a, cplx inu, const Mat2& rhs) {
    Eigen::Vector4cd b;
    for (int i = 0; i < 4; ++i) b(i) = rhs(i / 2, i % 2);
    const Eigen::Vector4cd x = mode_operator_matrix(a, inu).partialPivLu().solve(b);
    Mat2 out;
    for (int i = 0; i < 4; ++i) out(i / 2, i % 2) = x(i);
    return out;
}

}  // namespace

TEST(ModeOperator, DiagonalGeneratorOnRaisingMatrix) {
    const double alpha = 0.4;
    const IntVec m{1, 1};
    const Mat2 got = lm_inverse(FreqIndex::from_integer(m), kGoldenOmega, Sl2::from_entries(alpha, 0.0, 0.0), E12());
    const cplx denom = cplx(0.0, 2.0 * std::numbers::pi * (1.0 + kGolden)) - 2.0 * alpha;
    EXPECT_LT(svd_norm(got - E12() / denom), 1e-15);
}

TEST(ModeOperator, ZeroGeneratorDividesByFrequency) {
    std::mt19937_64 rng(18);
    const Mat2 rhs = random_traceless(rng);
    const IntVec m{3, -2};
    const Mat2 got = lm_inverse(FreqIndex::from_integer(m), kGoldenOmega, Sl2(), rhs);
    const cplx inu(0.0, 2.0 * std::numbers::pi * (3.0 - 2.0 * kGolden));
    EXPECT_LT(svd_norm(got - rhs / inu), 1e-14 * svd_norm(rhs / inu));
}

TEST(ModeOperator, AgreesWithDenseSolve) {
    std::mt19937_64 rng(19);
    for (int i = 0; i < 200; ++i) {
        const Sl2 a = i % 10 == 0 ? Sl2::from_entries(0.0, 1e-14 * (i + 1), 0.0) : random_sl2(rng);
        const FreqIndex m = FreqIndex::from_integer(random_index(rng, 2, 8));
        const Mat2 rhs = random_traceless(rng);
        const Mat2 got = lm_inverse(m, kGoldenOmega, a, rhs);
        const cplx inu(0.0, 2.0 * std::numbers::pi * m.dot(kGoldenOmega));
        const Mat2 want = dense_oracle(a.complex(), inu, rhs);
        EXPECT_LT(svd_norm(got - want), 1e-12 * svd_norm(want)) << "instance " << i;
        EXPECT_LT(std::abs(got.trace()), 1e-13 * (1.0 + svd_norm(got)));
    }
}

TEST(ModeOperator, SingularWhenFrequencyVanishes) {
    const std::vector<double> dependent{1.0, 0.5};
    EXPECT_THROW((void)lm_inverse(FreqIndex::from_integer({1, -2}), dependent, Sl2(), E12()), Error);
}

TEST(OperatorBound, GoldenMeanZeroGenerator) {
    const double kappa = 0.2;
    const int n = 30;
    for (int m1 = -n; m1 <= n; ++m1)
        for (int m2 = -(n - std::abs(m1)); m2 <= n - std::abs(m1); ++m2) {
            if (m1 == 0 && m2 == 0) continue;
            const double gm = std::pow(std::abs(m1) + std::abs(m2), 2.0);
            EXPECT_NO_THROW((void)operator_bound_check(FreqIndex::from_integer({m1, m2}), kGoldenOmega, Sl2(), kappa,
                                                       double(n) * n, gm));
        }
}

TEST(OperatorBound, BoundaryEigenvalueMeasuresHalfTheBound) {
    // alpha = i pi <m, omega> + i D with D = kappa / (4 G(N) g(|m|)); the
    // closest spectral point is -2 i D, so the measured norm is 2 G g / kappa.
    const double kappa = 0.5, G_N = 100.0, g_m = 4.0;
    const IntVec m{1, 1};
    const double d = kappa / (4.0 * G_N * g_m);
    const double beta = std::numbers::pi * (1.0 + kGolden) + d;
    const double measured = operator_bound_check(FreqIndex::from_integer(m), kGoldenOmega,
                                                 Sl2::from_entries(0.0, beta, -beta), kappa, G_N, g_m);
    EXPECT_NEAR(measured, 2.0 * G_N * g_m / kappa, 1e-6 * G_N * g_m / kappa);
}

TEST(OperatorBound, FarFromResonanceFrequencyBranchDominates) {
    const double kappa = 0.2, G_N = 900.0;
    const Sl2 a = Sl2::from_entries(25.0, 0.0, 0.0);
    const FreqIndex m = FreqIndex::from_integer({1, 0});
    const double measured = operator_bound_check(m, kGoldenOmega, a, kappa, G_N, 1.0);
    EXPECT_LE(measured, G_N / kappa);
    EXPECT_NEAR(measured, 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(OperatorBound, ThrowsWhenBoundViolated) {
    const double beta = std::numbers::pi * (1.0 + kGolden) + 1e-9;
    EXPECT_THROW((void)operator_bound_check(FreqIndex::from_integer({1, 1}), kGoldenOmega,
                                            Sl2::from_entries(0.0, beta, -beta), 1.0, 1.0, 1.0),
                 Error);
}
