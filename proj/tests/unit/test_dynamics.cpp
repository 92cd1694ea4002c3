#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vibsync;

TEST(Dopri5, DenseOutputOnHarmonicPhase) {
    const double w = 7.3;
    Dopri5Options opt;
    opt.rtol = 1e-10;
    opt.atol = 1e-12;
    Dopri5<Eigen::VectorXcd> solver(
        [w](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) { dy = cplx(0.0, w) * y; }, opt);
    std::vector<double> grid;
    for (int i = 0; i <= 4000; ++i) grid.push_back(0.001 * i);
    Eigen::VectorXcd y0(2);
    y0 << 1.0, cplx(0.0, 2.0);
    double worst = 0.0;
    std::size_t seen = 0;
    const Dopri5Stats st = solver.integrate(y0, 0.0, grid, [&](double t, const Eigen::VectorXcd& y) {
        worst = std::max(worst, (y - y0 * std::polar(1.0, w * t)).cwiseAbs().maxCoeff());
        ++seen;
    });
    EXPECT_EQ(seen, grid.size());
    EXPECT_LT(worst, 1e-8);
    EXPECT_GT(st.accepted, 0u);
    // Steps are much longer than the output spacing, so most grid points come from interpolation.
    EXPECT_LT(st.accepted, grid.size());
}

TEST(Dopri5, BlowUpIsReported) {
    Dopri5<Eigen::VectorXd> solver([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = y.cwiseProduct(y); },
                                   Dopri5Options{});
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    EXPECT_THROW(solver.integrate(y0, 0.0, {0.5, 2.0}, [](double, const Eigen::VectorXd&) {}), StepSizeUnderflow);
}

TEST(Dopri5, RejectsBadInput) {
    EXPECT_THROW(Dopri5<Eigen::VectorXd>([](double, const Eigen::VectorXd&, Eigen::VectorXd&) {}, Dopri5Options{0.0}),
                 ConfigError);
    Dopri5<Eigen::VectorXd> ok([](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = -y; }, Dopri5Options{});
    EXPECT_THROW(ok.integrate(Eigen::VectorXd::Ones(1), 1.0, {0.5}, [](double, const Eigen::VectorXd&) {}), ConfigError);
}

TEST(Thermal, GeometricPopulations) {
    const double w = 1111.0, kt = 207.1;
    const Eigen::MatrixXd rho = thermal_mode_state(w, kt, 6);
    EXPECT_NEAR(rho.trace(), 1.0, 1e-14);
    const double q = std::exp(-w / kt);
    double z = 0.0;
    for (int n = 0; n <= 6; ++n) z += std::pow(q, n);
    for (int n = 0; n <= 6; ++n) EXPECT_NEAR(rho(n, n), std::pow(q, n) / z, 1e-15);
    EXPECT_NEAR(thermal_occupation(w, kt), q / (1.0 - q), 1e-15);
    EXPECT_THROW(thermal_occupation(w, 0.0), ConfigError);
}

TEST(InitialState, ValidDensityInBothBases) {
    const DimerParams p = fixture::small_params(4);
    const DensityMatrix r = initial_state(p);
    EXPECT_NO_THROW(check_density(r));
    const OperatorSet ops = build_operators(p);
    EXPECT_NEAR((ops.pop_e2.matrix * r.matrix).trace().real(), 1.0, 1e-14);
    const EigenSystem eig = diagonalise(build_hamiltonian(p, ops));
    const DensityMatrix re = initial_state(p, eig);
    EXPECT_EQ(re.basis, BasisTag::eigen);
    EXPECT_NEAR(re.trace().real(), 1.0, 1e-12);
    EXPECT_NEAR(re.purity(), r.purity(), 1e-12);
}

TEST(InitialState, InvalidDensityRejected) {
    DensityMatrix r{Eigen::MatrixXcd::Identity(4, 4), BasisTag::local, 0.0};
    EXPECT_THROW(check_density(r), InvariantViolation);
    r.matrix /= 4.0;
    EXPECT_NO_THROW(check_density(r));
    r.matrix(0, 0) = -0.25;
    r.matrix(1, 1) = 0.75;
    EXPECT_THROW(check_density(r), InvariantViolation);
}

TEST(Lindblad, SparseGeneratorMatchesDenseReference) {
    const DimerParams p = fixture::small_params(2);
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const auto ds = standard_dissipators(p, ops);
    LindbladGenerator gen(h, ds);
    for (unsigned seed : {1u, 2u, 3u}) {
        const Eigen::MatrixXcd rho = fixture::random_density(h.matrix.rows(), seed);
        Eigen::MatrixXcd fast;
        gen.apply(rho, fast);
        const Eigen::MatrixXcd ref = lindblad_rhs({rho, BasisTag::local, 0.0}, h, ds);
        EXPECT_LT(fixture::max_abs(fast - ref), 1e-11 * fixture::max_abs(ref));
        EXPECT_NEAR(ref.trace().real(), 0.0, 1e-10);
    }
}

TEST(Lindblad, DissipatorValidation) {
    const DimerParams p = fixture::small_params(1);
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    std::vector<DissipatorSpec> bad{{ops.b1, -1.0, "negative"}};
    EXPECT_THROW(LindbladGenerator(h, bad), ConfigError);
    bad = {{Operator{ops.b1.matrix, BasisTag::eigen}, 1.0, "wrong basis"}};
    EXPECT_THROW(LindbladGenerator(h, bad), BasisMismatch);
}

TEST(Propagation, ClosedConservesPurityAndEnergy) {
    const DimerParams p = fixture::small_params(4);
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const EigenSystem eig = diagonalise(h);
    PropagationConfig cfg;
    cfg.t_end = 0.5;
    cfg.method = PropagationMethod::eigen_exponential;
    RecordSpec rec;
    rec.observables = {{"H", h}};
    rec.state_stride = 25;
    const Trajectory tr = propagate_closed(initial_state(p), eig, cfg, rec);
    const double purity0 = initial_state(p).purity();
    const double e0 = (h.matrix * initial_state(p).matrix).trace().real();
    for (const auto& s : tr.states) EXPECT_NEAR(s.purity(), purity0, 1e-8);
    for (double e : tr.series("H")) EXPECT_NEAR(e, e0, 1e-8 * std::abs(e0));
    EXPECT_TRUE(tr.audit.passed());
    EXPECT_EQ(tr.times.size(), 501u);
}

TEST(Propagation, OpenIntegratorReproducesClosedEvolution) {
    DimerParams p = fixture::small_params(2);
    p.gamma_th = p.gamma_deph = 0.0;
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const EigenSystem eig = diagonalise(h);
    PropagationConfig cfg;
    cfg.t_end = 0.2;
    RecordSpec rec;
    rec.observables = {{"X1", ops.x1}};
    rec.block_size = 18;
    const Trajectory a = propagate_open(initial_state(p), h, {}, cfg, eig, rec);
    cfg.method = PropagationMethod::eigen_exponential;
    const Trajectory b = propagate_closed(initial_state(p), eig, cfg, rec);
    ASSERT_EQ(a.times.size(), b.times.size());
    for (std::size_t i = 0; i < a.times.size(); ++i) {
        EXPECT_NEAR(a.series("X1")[i], b.series("X1")[i], 1e-7);
        EXPECT_LT(fixture::max_abs(a.block[i] - b.block[i]), 1e-7);
    }
}

TEST(Propagation, OpenRunKeepsInvariants) {
    const DimerParams p = fixture::small_params(3);
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const EigenSystem eig = diagonalise(h);
    PropagationConfig cfg;
    cfg.t_end = 0.3;
    RecordSpec rec;
    rec.state_stride = 10;
    const Trajectory tr = propagate_open(initial_state(p), h, standard_dissipators(p, ops), cfg, eig, rec);
    EXPECT_TRUE(tr.audit.passed());
    EXPECT_EQ(tr.audit.states_checked, tr.states.size());
    for (const auto& s : tr.states) {
        EXPECT_EQ(s.basis, BasisTag::eigen);
        EXPECT_NO_THROW(check_density(s, {1e-10, 1e-8, -1e-7}));
    }
    // Dissipation reduces purity from its initial value.
    EXPECT_LT(tr.states.back().purity(), initial_state(p).purity());
    EXPECT_THROW(tr.element(0, 0, 99), IndexOutOfRange);
    EXPECT_THROW(tr.series("nope"), ConfigError);
}

TEST(Propagation, ConfigValidation) {
    PropagationConfig cfg;
    cfg.t_end = -1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = PropagationConfig{};
    cfg.rel_tol = 0.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = PropagationConfig{};
    EXPECT_EQ(cfg.grid().size(), 2001u);

    const DimerParams p = fixture::small_params(1);
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const EigenSystem eig = diagonalise(h);
    cfg.method = PropagationMethod::eigen_exponential;
    EXPECT_THROW(propagate_open(initial_state(p), h, {}, cfg, eig), ConfigError);
}
