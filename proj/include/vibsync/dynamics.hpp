// dynamics.hpp - states, initial conditions, dissipators and propagation.
//
// Open evolution integrates the Lindblad equation on the D x D matrix in the
// local basis with sparse operator products. Recorded output is expressed in
// the system eigenbasis: a K x K low-energy block on every grid point plus
// full eigenbasis states every `state_stride` points.

#pragma once

#include "vibsync/error.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/ode.hpp"
#include "vibsync/units.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace vibsync {

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

struct DensityMatrix {
    Eigen::MatrixXcd matrix;
    BasisTag basis = BasisTag::local;
    double time = 0.0;

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
    cplx trace() const { return matrix.trace(); }
    double hermiticity_error() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }
    double purity() const { return (matrix * matrix).trace().real(); }

    double min_eigenvalue() const {
        const Eigen::MatrixXcd herm = 0.5 * (matrix + matrix.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }
};

struct DensityTolerances {
    double hermiticity = 1e-10;
    double trace = 1e-8;
    double positivity = -1e-7;
};

/// Throws InvariantViolation if the state is not a valid density matrix.
inline void check_density(const DensityMatrix& rho, const DensityTolerances& tol = {}) {
    if (rho.matrix.rows() != rho.matrix.cols() || rho.matrix.rows() == 0) {
        throw InvariantViolation("density matrix must be square and non-empty");
    }
    if (const double h = rho.hermiticity_error(); h > tol.hermiticity) {
        throw InvariantViolation("density matrix not Hermitian (max asymmetry " + std::to_string(h) + ")");
    }
    if (const double t = std::abs(rho.trace() - 1.0); t > tol.trace) {
        throw InvariantViolation("density matrix trace deviates from 1 by " + std::to_string(t));
    }
    if (const double m = rho.min_eigenvalue(); m < tol.positivity) {
        throw InvariantViolation("density matrix has negative eigenvalue " + std::to_string(m));
    }
}

inline DensityMatrix to_eigenbasis(const DensityMatrix& rho, const EigenSystem& eig) {
    if (rho.basis == BasisTag::eigen) return rho;
    return {eig.vectors.adjoint() * rho.matrix * eig.vectors, BasisTag::eigen, rho.time};
}

inline DensityMatrix to_local(const DensityMatrix& rho, const EigenSystem& eig) {
    if (rho.basis == BasisTag::local) return rho;
    return {eig.vectors * rho.matrix * eig.vectors.adjoint(), BasisTag::local, rho.time};
}

// ---------------------------------------------------------------------------
// Thermal states and initial condition
// ---------------------------------------------------------------------------

/// Mean phonon number B = 1 / (exp(omega/kbt) - 1).
inline double thermal_occupation(double omega, double kbt) {
    if (!(omega > 0.0) || !(kbt > 0.0)) throw ConfigError("thermal_occupation: omega, kbt must be positive");
    return 1.0 / std::expm1(omega / kbt);
}

/// Diagonal Boltzmann state of one mode over levels 0..M, renormalised on the truncation.
inline Eigen::MatrixXd thermal_mode_state(double omega, double kbt, int m_levels) {
    if (!(omega > 0.0) || !(kbt > 0.0)) throw ConfigError("thermal_mode_state: omega, kbt must be positive");
    if (m_levels < 1) throw ConfigError("thermal_mode_state: m_levels must be >= 1");
    const Eigen::Index n = m_levels + 1;
    Eigen::VectorXd p(n);
    for (Eigen::Index k = 0; k < n; ++k) p(k) = std::exp(-static_cast<double>(k) * omega / kbt);
    p /= p.sum();
    return p.asDiagonal();
}

/// rho(0) = |E2><E2| (x) rho_th(omega1) (x) rho_th(omega2), local basis.
inline DensityMatrix initial_state(const DimerParams& p) {
    p.validate();
    Eigen::MatrixXcd el = Eigen::MatrixXcd::Zero(2, 2);
    el(1, 1) = 1.0;
    const Eigen::MatrixXcd m1 = thermal_mode_state(p.omega1, p.kbt, p.m_levels).cast<cplx>();
    const Eigen::MatrixXcd m2 = thermal_mode_state(p.omega2, p.kbt, p.m_levels).cast<cplx>();
    return {detail::kron3(el, m1, m2), BasisTag::local, 0.0};
}

/// Same state expressed in the eigenbasis of `eig`.
inline DensityMatrix initial_state(const DimerParams& p, const EigenSystem& eig) {
    return to_eigenbasis(initial_state(p), eig);
}

// ---------------------------------------------------------------------------
// Dissipators
// ---------------------------------------------------------------------------

struct DissipatorSpec {
    Operator op;
    double rate = 0.0;  // ps^-1
    std::string name;
};

/// Site dephasing at gamma_deph, mode relaxation b_i at gamma_th (1+B_i),
/// thermal excitation b_i^dag at gamma_th B_i. Local basis.
inline std::vector<DissipatorSpec> standard_dissipators(const DimerParams& p, const OperatorSet& ops) {
    const double b1 = thermal_occupation(p.omega1, p.kbt);
    const double b2 = thermal_occupation(p.omega2, p.kbt);
    return {
        {ops.theta1, p.gamma_deph, "dephasing_site1"},
        {ops.theta2, p.gamma_deph, "dephasing_site2"},
        {ops.b1, p.gamma_th * (1.0 + b1), "relaxation_mode1"},
        {ops.b2, p.gamma_th * (1.0 + b2), "relaxation_mode2"},
        {ops.b1_dag, p.gamma_th * b1, "excitation_mode1"},
        {ops.b2_dag, p.gamma_th * b2, "excitation_mode2"},
    };
}

inline std::vector<DissipatorSpec> standard_dissipators(const DimerParams& p) {
    return standard_dissipators(p, build_operators(p));
}

inline void check_dissipators(const std::vector<DissipatorSpec>& ds, const Operator& h) {
    for (const auto& d : ds) {
        require_same_basis(h.basis, d.op.basis, "dissipator");
        if (d.op.dimension() != h.dimension()) throw ConfigError("dissipator '" + d.name + "' has wrong dimension");
        if (!(d.rate >= 0.0) || !std::isfinite(d.rate)) {
            throw ConfigError("dissipator '" + d.name + "' has invalid rate");
        }
    }
}

/// Dense reference: -i kappa [H, rho] + sum_v G_v (O rho O^dag - {O^dag O, rho}/2).
inline Eigen::MatrixXcd lindblad_rhs(const DensityMatrix& rho, const Operator& h,
                                     const std::vector<DissipatorSpec>& ds) {
    require_same_basis(rho.basis, h.basis, "lindblad_rhs");
    if (rho.dimension() != h.dimension()) throw BasisMismatch("lindblad_rhs: dimension mismatch");
    check_dissipators(ds, h);
    const cplx mik(0.0, -units::kAngularPerWavenumber);
    Eigen::MatrixXcd out = mik * (h.matrix * rho.matrix - rho.matrix * h.matrix);
    for (const auto& d : ds) {
        if (d.rate == 0.0) continue;
        const Eigen::MatrixXcd& o = d.op.matrix;
        const Eigen::MatrixXcd od_o = o.adjoint() * o;
        out += d.rate * (o * rho.matrix * o.adjoint() - 0.5 * (od_o * rho.matrix + rho.matrix * od_o));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sparse generator
// ---------------------------------------------------------------------------

using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline SparseOp to_sparse(const Eigen::MatrixXcd& m, double drop = 1e-14) {
    return m.sparseView(1.0, drop);
}

namespace detail {

/// Compressed sparse rows with plain arrays, for the hand-written kernels below.
struct Csr {
    Eigen::Index n = 0;
    std::vector<int> ptr, col;
    std::vector<cplx> val;

    explicit Csr(const Eigen::MatrixXcd& m, double drop = 1e-14) : n(m.rows()) {
        ptr.reserve(static_cast<std::size_t>(n) + 1);
        ptr.push_back(0);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) {
                if (std::abs(m(r, c)) > drop) {
                    col.push_back(static_cast<int>(c));
                    val.push_back(m(r, c));
                }
            }
            ptr.push_back(static_cast<int>(col.size()));
        }
    }

    std::size_t nnz() const noexcept { return val.size(); }
};

// Complex products spelled out on doubles.
inline void csr_row_dot(const Csr& a, int r, const double* x, double& re, double& im) {
    re = 0.0;
    im = 0.0;
    const auto* v = reinterpret_cast<const double*>(a.val.data());
    for (int k = a.ptr[r]; k < a.ptr[r + 1]; ++k) {
        const double vr = v[2 * k], vi = v[2 * k + 1];
        const double xr = x[2 * a.col[k]], xi = x[2 * a.col[k] + 1];
        re += vr * xr - vi * xi;
        im += vr * xi + vi * xr;
    }
}

/// y = A x for column-major square x, y.
inline void csr_times_dense(const Csr& a, const cplx* x, cplx* y) {
    const Eigen::Index n = a.n;
    for (Eigen::Index c = 0; c < n; ++c) {
        const auto* xc = reinterpret_cast<const double*>(x + c * n);
        auto* yc = reinterpret_cast<double*>(y + c * n);
        for (int r = 0; r < n; ++r) csr_row_dot(a, r, xc, yc[2 * r], yc[2 * r + 1]);
    }
}

/// out(i, j) += rate * (O rho O^dag)(i, j) for i <= j.
inline void sandwich_upper_add(const Csr& o, double rate, const cplx* rho, cplx* out) {
    const Eigen::Index n = o.n;
    const auto* v = reinterpret_cast<const double*>(o.val.data());
    for (int j = 0; j < n; ++j) {
        auto* oc = reinterpret_cast<double*>(out + j * n);
        for (int b = o.ptr[j]; b < o.ptr[j + 1]; ++b) {
            const double wr = rate * v[2 * b], wi = -rate * v[2 * b + 1];
            const auto* rc = reinterpret_cast<const double*>(rho + static_cast<Eigen::Index>(o.col[b]) * n);
            for (int i = 0; i <= j; ++i) {
                double re, im;
                csr_row_dot(o, i, rc, re, im);
                oc[2 * i] += wr * re - wi * im;
                oc[2 * i + 1] += wr * im + wi * re;
            }
        }
    }
}

}  // namespace detail

/// Lindblad right-hand side for Hermitian rho using
///   L(rho) = E rho + (E rho)^dag + sum_v G_v O_v rho O_v^dag,
/// with E = -i kappa H - K/2 and K = sum_v G_v O_v^dag O_v. Only the upper
/// triangle is computed; the lower one is its conjugate mirror.
class LindbladGenerator {
public:
    LindbladGenerator(const Operator& h, const std::vector<DissipatorSpec>& ds)
        : dim_(h.matrix.rows()), effective_(Eigen::MatrixXcd::Zero(1, 1)) {
        check_dissipators(ds, h);
        Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(dim_, dim_);
        for (const auto& d : ds) {
            if (d.rate == 0.0) continue;
            k += d.rate * (d.op.matrix.adjoint() * d.op.matrix);
            jumps_.push_back({detail::Csr(d.op.matrix), d.rate});
        }
        effective_ = detail::Csr(cplx(0.0, -units::kAngularPerWavenumber) * h.matrix - 0.5 * k);
        y_.resize(dim_, dim_);
    }

    Eigen::Index dimension() const noexcept { return dim_; }
    bool dissipative() const noexcept { return !jumps_.empty(); }

    /// out = L(rho); rho must be Hermitian, out is Hermitian exactly.
    void apply(const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) {
        out.resize(dim_, dim_);
        detail::csr_times_dense(effective_, rho.data(), y_.data());
        for (Eigen::Index j = 0; j < dim_; ++j) {
            for (Eigen::Index i = 0; i <= j; ++i) out(i, j) = y_(i, j) + std::conj(y_(j, i));
        }
        for (const auto& jmp : jumps_) detail::sandwich_upper_add(jmp.op, jmp.rate, rho.data(), out.data());
        for (Eigen::Index j = 0; j < dim_; ++j) {
            out(j, j) = cplx(out(j, j).real(), 0.0);
            for (Eigen::Index i = j + 1; i < dim_; ++i) out(i, j) = std::conj(out(j, i));
        }
    }

private:
    struct Jump {
        detail::Csr op;
        double rate;
    };

    Eigen::Index dim_;
    detail::Csr effective_;
    std::vector<Jump> jumps_;
    Eigen::MatrixXcd y_;
};

// ---------------------------------------------------------------------------
// Propagation configuration and records
// ---------------------------------------------------------------------------

enum class PropagationMethod { adaptive_rk, eigen_exponential };

struct PropagationConfig {
    double t_end = 2.0;       // ps
    double dt_out = 1e-3;     // ps
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    PropagationMethod method = PropagationMethod::adaptive_rk;

    void validate() const {
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("propagation: t_end must be > 0");
        if (!(dt_out > 0.0) || !std::isfinite(dt_out)) throw ConfigError("propagation: dt_out must be > 0");
        if (dt_out > t_end) throw ConfigError("propagation: dt_out exceeds t_end");
        for (double tol : {rel_tol, abs_tol}) {
            if (!(tol > 0.0) || tol > 1e-2) throw ConfigError("propagation: tolerances must lie in (0, 1e-2]");
        }
    }

    std::vector<double> grid() const {
        const auto n = static_cast<std::size_t>(std::llround(t_end / dt_out));
        std::vector<double> g(n + 1);
        for (std::size_t i = 0; i <= n; ++i) g[i] = static_cast<double>(i) * dt_out;
        return g;
    }
};

/// What to keep from a run besides the time grid.
struct RecordSpec {
    std::vector<std::pair<std::string, Operator>> observables;  // evaluated on every grid point
    std::size_t block_size = 24;                                 // eigenbasis block kept per grid point
    std::size_t state_stride = 100;                              // full eigenbasis state every k points
};

struct InvariantAudit {
    double max_trace_error = 0.0;
    double max_hermiticity_error = 0.0;
    double min_eigenvalue = std::numeric_limits<double>::infinity();
    std::size_t points_checked = 0;
    std::size_t states_checked = 0;

    bool passed(double trace_tol = 1e-6, double herm_tol = 1e-8, double pos_tol = -1e-6) const {
        return max_trace_error < trace_tol && max_hermiticity_error < herm_tol && min_eigenvalue >= pos_tol;
    }
};

struct NamedSeries {
    std::string name;
    std::vector<double> values;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<DensityMatrix> states;       // eigenbasis, thinned
    std::vector<Eigen::MatrixXcd> block;     // eigenbasis block [0, K) x [0, K), every grid point
    std::size_t block_size = 0;
    std::vector<NamedSeries> observables;
    InvariantAudit audit;
    Dopri5Stats stats;
    double wall_seconds = 0.0;

    const std::vector<double>& series(const std::string& name) const {
        for (const auto& s : observables) {
            if (s.name == name) return s.values;
        }
        throw ConfigError("trajectory has no observable named '" + name + "'");
    }

    bool has_series(const std::string& name) const {
        return std::any_of(observables.begin(), observables.end(), [&](const auto& s) { return s.name == name; });
    }

    void set_series(const std::string& name, std::vector<double> values) {
        for (auto& s : observables) {
            if (s.name == name) {
                s.values = std::move(values);
                return;
            }
        }
        observables.push_back({name, std::move(values)});
    }

    /// Eigenbasis element rho_jk at grid index i, read from the tracked block.
    cplx element(std::size_t i, std::size_t j, std::size_t k) const {
        if (j >= block_size || k >= block_size) {
            throw IndexOutOfRange("trajectory block of size " + std::to_string(block_size) +
                                  " does not contain element (" + std::to_string(j) + "," + std::to_string(k) + ")");
        }
        return block.at(i)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    }
};

namespace detail {

inline double sparse_trace_product(const SparseOp& o, const Eigen::MatrixXcd& rho) {
    cplx acc = 0.0;
    for (Eigen::Index r = 0; r < o.outerSize(); ++r) {
        for (SparseOp::InnerIterator it(o, r); it; ++it) acc += it.value() * rho(it.col(), r);
    }
    return acc.real();
}

/// Collects grid output shared by the closed and open propagators.
class Recorder {
public:
    Recorder(const EigenSystem& eig, const RecordSpec& spec, std::size_t n_points, BasisTag state_basis)
        : eig_(eig), spec_(spec), state_basis_(state_basis) {
        const auto d = eig.dimension();
        k_ = std::min<std::size_t>(spec.block_size, d);
        vk_ = eig.vectors.leftCols(static_cast<Eigen::Index>(k_));
        for (const auto& [name, op] : spec.observables) {
            if (op.dimension() != d) throw BasisMismatch("observable '" + name + "' has wrong dimension");
            const Operator in_basis =
                state_basis == BasisTag::local ? eig.to_local(op) : eig.to_eigenbasis(op);
            ops_.push_back(to_sparse(in_basis.matrix));
        }
        traj_.block_size = k_;
        traj_.times.reserve(n_points);
        traj_.block.reserve(n_points);
        traj_.observables.reserve(spec.observables.size());
        for (const auto& [name, op] : spec.observables) {
            traj_.observables.push_back({name, {}});
            traj_.observables.back().values.reserve(n_points);
        }
    }

    void record(double t, const Eigen::MatrixXcd& rho) {
        const std::size_t i = traj_.times.size();
        traj_.times.push_back(t);
        const double tr_err = std::abs(rho.trace() - 1.0);
        traj_.audit.max_trace_error = std::max(traj_.audit.max_trace_error, tr_err);
        ++traj_.audit.points_checked;
        if (tr_err > 1e-6) {
            throw InvariantViolation("trace drifted by " + std::to_string(tr_err) + " at t=" + std::to_string(t) + " ps");
        }
        for (std::size_t o = 0; o < ops_.size(); ++o) {
            traj_.observables[o].values.push_back(sparse_trace_product(ops_[o], rho));
        }
        if (state_basis_ == BasisTag::local) {
            traj_.block.push_back(vk_.adjoint() * (rho * vk_));
        } else {
            traj_.block.push_back(rho.topLeftCorner(static_cast<Eigen::Index>(k_), static_cast<Eigen::Index>(k_)));
        }
        if (spec_.state_stride > 0 && i % spec_.state_stride == 0) store_state(t, rho);
    }

    Trajectory finish(const Eigen::MatrixXcd& last_rho) {
        if (spec_.state_stride > 0 && !traj_.times.empty() &&
            (traj_.states.empty() || traj_.states.back().time != traj_.times.back())) {
            store_state(traj_.times.back(), last_rho);
        }
        return std::move(traj_);
    }

private:
    void store_state(double t, const Eigen::MatrixXcd& rho) {
        DensityMatrix s{state_basis_ == BasisTag::local ? Eigen::MatrixXcd(eig_.vectors.adjoint() * rho * eig_.vectors)
                                                        : rho,
                        BasisTag::eigen, t};
        auto& a = traj_.audit;
        a.max_hermiticity_error = std::max(a.max_hermiticity_error, s.hermiticity_error());
        a.min_eigenvalue = std::min(a.min_eigenvalue, s.min_eigenvalue());
        ++a.states_checked;
        traj_.states.push_back(std::move(s));
    }

    const EigenSystem& eig_;
    const RecordSpec& spec_;
    BasisTag state_basis_;
    std::size_t k_ = 0;
    Eigen::MatrixXcd vk_;
    std::vector<SparseOp> ops_;
    Trajectory traj_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Propagators
// ---------------------------------------------------------------------------

/// Exact unitary evolution in the eigenbasis: rho_jk(t) = rho_jk(0) exp(i kappa Omega_kj t).
inline Trajectory propagate_closed(const DensityMatrix& rho0, const EigenSystem& eig, const PropagationConfig& config,
                                   const RecordSpec& record = {}) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    if (rho0.dimension() != eig.dimension()) throw BasisMismatch("propagate_closed: dimension mismatch");
    check_density(rho0);
    const Eigen::MatrixXcd r0 = to_eigenbasis(rho0, eig).matrix;
    const auto grid = config.grid();
    detail::Recorder rec(eig, record, grid.size(), BasisTag::eigen);

    const Eigen::Index d = r0.rows();
    Eigen::MatrixXcd rho(d, d);
    for (double t : grid) {
        for (Eigen::Index k = 0; k < d; ++k) {
            for (Eigen::Index j = 0; j < d; ++j) {
                const double phase = units::kAngularPerWavenumber * (eig.energies(k) - eig.energies(j)) * t;
                rho(j, k) = r0(j, k) * std::polar(1.0, phase);
            }
        }
        rec.record(t, rho);
    }
    Trajectory traj = rec.finish(rho);
    traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return traj;
}

/// Adaptive Dormand-Prince integration of the Lindblad equation.
inline Trajectory propagate_open(const DensityMatrix& rho0, const Operator& h, const std::vector<DissipatorSpec>& ds,
                                 const PropagationConfig& config, const EigenSystem& eig,
                                 const RecordSpec& record = {}) {
    config.validate();
    if (config.method != PropagationMethod::adaptive_rk) {
        throw ConfigError("propagate_open: only the adaptive-rk method integrates open dynamics");
    }
    const auto start = std::chrono::steady_clock::now();
    if (h.basis != BasisTag::local) throw BasisMismatch("propagate_open: Hamiltonian must be in the local basis");
    if (rho0.dimension() != h.dimension() || eig.dimension() != h.dimension()) {
        throw BasisMismatch("propagate_open: dimension mismatch");
    }
    check_density(rho0);
    const Eigen::MatrixXcd r0 = to_local(rho0, eig).matrix;

    LindbladGenerator gen(h, ds);
    const auto grid = config.grid();
    detail::Recorder rec(eig, record, grid.size(), BasisTag::local);

    Dopri5Options opt;
    opt.rtol = config.rel_tol;
    opt.atol = config.abs_tol;
    Dopri5<Eigen::MatrixXcd> solver([&gen](double, const Eigen::MatrixXcd& y, Eigen::MatrixXcd& dy) { gen.apply(y, dy); },
                                    opt);
    Eigen::MatrixXcd last = r0;
    const Dopri5Stats stats = solver.integrate(r0, 0.0, grid, [&](double t, const Eigen::MatrixXcd& y) {
        rec.record(t, y);
        if (t == grid.back()) last = y;
    });
    Trajectory traj = rec.finish(last);
    traj.stats = stats;
    traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return traj;
}

}  // namespace vibsync
