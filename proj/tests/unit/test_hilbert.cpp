#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace vibsync;

TEST(ProductBasis, IndexRoundTrip) {
    const ProductBasis basis(3);
    for (std::size_t i = 0; i < basis.dimension(); ++i) EXPECT_EQ(basis.index(basis.label(i)), i);
    EXPECT_EQ(basis.index({2, 0, 0}), 16u);
    EXPECT_EQ(basis.index({1, 1, 2}), 6u);
    EXPECT_THROW(basis.label(32), IndexOutOfRange);
}

// Element-wise construction for M = 1, no Kronecker products involved.
TEST(Hamiltonian, MatchesHandAssembledTwoLevelModes) {
    DimerParams p;
    p.m_levels = 1;
    p.omega2 = 1090.0;
    p.g2 = 250.0;
    const double th = 0.5 * std::atan(2.0 * p.v / p.delta_e);
    const double c = std::cos(th), s = std::sin(th);
    const double split = std::sqrt(p.delta_e * p.delta_e + 4.0 * p.v * p.v);
    const double e[2] = {0.5 * (p.delta_e - split), 0.5 * (p.delta_e + split)};
    const double t1[2][2] = {{c * c, -c * s}, {-c * s, s * s}};
    const double t2[2][2] = {{s * s, c * s}, {c * s, c * c}};
    auto x = [](int n, int m) { return std::abs(n - m) == 1 ? std::sqrt(double(std::max(n, m))) : 0.0; };

    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(8, 8);
    for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b) {
            const int d = a / 4, n1 = (a / 2) % 2, n2 = a % 2;
            const int dp = b / 4, m1 = (b / 2) % 2, m2 = b % 2;
            double h = 0.0;
            if (a == b) h += e[d] + p.omega1 * n1 + p.omega2 * n2;
            if (n2 == m2) h += p.g1 * t1[d][dp] * x(n1, m1);
            if (n1 == m1) h += p.g2 * t2[d][dp] * x(n2, m2);
            ref(a, b) = h;
        }
    }
    const Operator h = build_hamiltonian(p);
    EXPECT_EQ(h.basis, BasisTag::local);
    EXPECT_LT((h.matrix - ref.cast<cplx>()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Hamiltonian, UncoupledSpectrumIsAnalytic) {
    DimerParams p;
    p.m_levels = 3;
    p.g1 = p.g2 = 0.0;
    const EigenSystem eig = diagonalise(build_hamiltonian(p));
    std::vector<double> expect;
    const double split = exciton_splitting(p);
    for (double ed : {0.5 * (p.delta_e - split), 0.5 * (p.delta_e + split)})
        for (int n1 = 0; n1 <= 3; ++n1)
            for (int n2 = 0; n2 <= 3; ++n2) expect.push_back(ed + p.omega1 * n1 + p.omega2 * n2);
    std::sort(expect.begin(), expect.end());
    ASSERT_EQ(eig.dimension(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(eig.energies(Eigen::Index(i)), expect[i], 1e-9);
}

TEST(Hamiltonian, EigenvectorsOrthonormalWithPhaseConvention) {
    const EigenSystem eig = diagonalise(build_hamiltonian(fixture::small_params(3)));
    const auto d = Eigen::Index(eig.dimension());
    EXPECT_LT(fixture::max_abs(eig.vectors.adjoint() * eig.vectors - Eigen::MatrixXcd::Identity(d, d)), 1e-10);
    for (Eigen::Index j = 0; j < d; ++j) {
        Eigen::Index imax = 0;
        eig.vectors.col(j).cwiseAbs().maxCoeff(&imax);
        EXPECT_NEAR(eig.vectors(imax, j).imag(), 0.0, 1e-14);
        EXPECT_GT(eig.vectors(imax, j).real(), 0.0);
    }
    for (Eigen::Index j = 1; j < d; ++j) EXPECT_LE(eig.energies(j - 1), eig.energies(j));
}

TEST(Hamiltonian, BasisRoundTrip) {
    const DimerParams p = fixture::small_params(2);
    const OperatorSet ops = build_operators(p);
    const EigenSystem eig = diagonalise(build_hamiltonian(p, ops));
    const Operator xe = eig.to_eigenbasis(ops.x1);
    EXPECT_EQ(xe.basis, BasisTag::eigen);
    EXPECT_LT(fixture::max_abs(eig.to_local(xe).matrix - ops.x1.matrix), 1e-12);
    EXPECT_THROW(xe * ops.x1, BasisMismatch);
}

TEST(Operators, AlgebraOnTruncatedSpace) {
    const DimerParams p = fixture::small_params(3);
    const OperatorSet ops = build_operators(p);
    const Eigen::MatrixXcd comm = ops.b1.matrix * ops.b1_dag.matrix - ops.b1_dag.matrix * ops.b1.matrix;
    // [b, b^dag] = 1 except on the top level, where it is -M.
    const ProductBasis basis(3);
    for (std::size_t i = 0; i < basis.dimension(); ++i) {
        const double expect = basis.label(i).n1 == 3 ? -3.0 : 1.0;
        EXPECT_NEAR(comm(Eigen::Index(i), Eigen::Index(i)).real(), expect, 1e-12);
    }
    EXPECT_LT(fixture::max_abs(ops.theta1.matrix + ops.theta2.matrix - ops.identity.matrix), 1e-14);
    EXPECT_LT(fixture::max_abs(ops.pop_e1.matrix + ops.pop_e2.matrix - ops.identity.matrix), 1e-14);
    EXPECT_LT(fixture::max_abs(ops.theta1.matrix * ops.theta1.matrix - ops.theta1.matrix), 1e-14);
}

TEST(Operators, TruncationCapIsEnforced) {
    DimerParams p;
    p.m_levels = 40;
    EXPECT_THROW(build_operators(p), DimensionOverflow);
    p.m_levels = 4;
    EXPECT_THROW(build_operators(p, 16), DimensionOverflow);
    EXPECT_NO_THROW(build_operators(p, 25));
}

TEST(Params, ValidationRejectsBadValues) {
    DimerParams p;
    p.gamma_th = -1.0;
    EXPECT_THROW(p.validate(), ConfigError);
    p = DimerParams{};
    p.kbt = std::nan("");
    EXPECT_THROW(p.validate(), ConfigError);
    p = DimerParams{};
    p.m_levels = 0;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(MixingAngle, Limits) {
    DimerParams p;
    p.delta_e = 0.0;
    EXPECT_DOUBLE_EQ(mixing_angle(p), std::numbers::pi / 4.0);
    p.v = 0.0;
    EXPECT_DOUBLE_EQ(mixing_angle(p), 0.0);
    p = DimerParams{};
    EXPECT_NEAR(std::sin(2.0 * mixing_angle(p)), 2.0 * p.v / exciton_splitting(p), 1e-14);
}

// Frozen from an independent numpy evaluation of the closed form.
TEST(EtIndicator, PresetValues) {
    EXPECT_NEAR(et_amplitude_indicator(preset("pe545").params).amplitude, 0.7553, 5e-4);
    EXPECT_NEAR(et_amplitude_indicator(preset("detuned").params).amplitude, 0.0423, 5e-4);
    EXPECT_NEAR(et_amplitude_indicator(preset("delocalised").params).amplitude, 0.9623, 5e-4);
    EXPECT_NEAR(et_amplitude_indicator(preset("delocalised").params).sin_two_theta, 0.5, 1e-12);

    DimerParams p;
    p.v = 0.0;
    EXPECT_EQ(et_amplitude_indicator(p).amplitude, 0.0);
    p = DimerParams{};
    p.omega1 = exciton_splitting(p);
    p.omega2 = p.omega1;
    EXPECT_EQ(et_amplitude_indicator(p).amplitude, 1.0);
    p.omega2 = 1000.0;
    EXPECT_TRUE(et_amplitude_indicator(p).warning.has_value());
}

TEST(MatrixElements, UncoupledPureVibrationalPairsHaveNoExcitonCoherence) {
    ScenarioConfig c = preset("pe545");
    c.params.g1 = c.params.g2 = 0.0;
    const Table2Report rep = table2(c);
    EXPECT_FALSE(rep.compared);
    const OperatorSet ops = build_operators(c.params);
    const EigenSystem eig = diagonalise(build_hamiltonian(c.params, ops));
    const Operator pe = eig.to_eigenbasis(ops.pop_e1);
    for (const auto& col : rep.columns) {
        const auto [j, k] = col.pair;
        const bool same_exciton = std::abs(pe.matrix(Eigen::Index(j), Eigen::Index(j)).real() -
                                           pe.matrix(Eigen::Index(k), Eigen::Index(k)).real()) < 1e-9;
        if (same_exciton) EXPECT_NEAR(col.cells[3].computed, 0.0, 1e-12) << j << "," << k;
    }
}

TEST(MatrixElements, ReferenceTableAtDefaultParameters) {
    const Table2Report rep = table2(preset("pe545"));
    EXPECT_TRUE(rep.compared);
    EXPECT_EQ(rep.cells_total, 35u);
    EXPECT_TRUE(rep.all_pass()) << format_table2(rep);
}

TEST(MatrixElements, OutOfRangePair) {
    const DimerParams p = fixture::small_params(1);
    const OperatorSet ops = build_operators(p);
    const EigenSystem eig = diagonalise(build_hamiltonian(p, ops));
    EXPECT_THROW(matrix_element_table(eig, ops, {{0, 8}}), IndexOutOfRange);
}
