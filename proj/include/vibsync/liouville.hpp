// liouville.hpp - dense Liouvillian superoperator and its spectral analysis.
//
// Vectorisation is column stacking: vec(A X B) = (B^T (x) A) vec(X), and the
// element rho_jk sits at vec index j + k D. Only small truncations are
// supported (the dense matrix is D^2 x D^2).

#pragma once

#ifndef LAPACK_COMPLEX_CUSTOM
#define LAPACK_COMPLEX_CUSTOM
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#endif
#include <complex>
#include <lapacke.h>

#include "vibsync/dynamics.hpp"
#include "vibsync/error.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/units.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace vibsync {

inline constexpr Eigen::Index kDefaultMaxSuperDim = 60;

struct Superoperator {
    Eigen::MatrixXcd matrix;
    BasisTag basis = BasisTag::local;
    int truncation_m = 0;
    Eigen::Index hilbert_dim = 0;
};

inline Eigen::VectorXcd vec(const Eigen::MatrixXcd& m) {
    return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline Eigen::MatrixXcd unvec(const Eigen::VectorXcd& v, Eigen::Index d) {
    if (v.size() != d * d) throw ConfigError("unvec: length is not d^2");
    return Eigen::Map<const Eigen::MatrixXcd>(v.data(), d, d);
}

/// L = -i kappa (I (x) H - H^T (x) I) + sum_v G_v (conj(O) (x) O - I (x) O^dag O / 2 - (O^dag O)^T (x) I / 2).
inline Superoperator build_superoperator(const Operator& h, const std::vector<DissipatorSpec>& ds, int m_levels,
                                         Eigen::Index max_dim = kDefaultMaxSuperDim) {
    const Eigen::Index d = h.matrix.rows();
    if (d > max_dim) {
        const double gib = std::pow(static_cast<double>(d), 4) * 16.0 / (1024.0 * 1024.0 * 1024.0);
        throw MemoryBudgetExceeded("superoperator for Hilbert dimension " + std::to_string(d) + " needs " +
                                   std::to_string(gib) + " GiB dense; limit is D <= " + std::to_string(max_dim) +
                                   ". Lower the truncation (M_eig) or raise the cap.");
    }
    check_dissipators(ds, h);
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(d, d);
    Superoperator s;
    s.basis = h.basis;
    s.truncation_m = m_levels;
    s.hilbert_dim = d;
    const cplx mik(0.0, -units::kAngularPerWavenumber);
    s.matrix = mik * (Eigen::kroneckerProduct(id, h.matrix).eval() -
                      Eigen::kroneckerProduct(h.matrix.transpose(), id).eval());
    for (const auto& diss : ds) {
        if (diss.rate == 0.0) continue;
        const Eigen::MatrixXcd& o = diss.op.matrix;
        const Eigen::MatrixXcd odo = o.adjoint() * o;
        s.matrix += diss.rate * (Eigen::kroneckerProduct(o.conjugate(), o).eval() -
                                 0.5 * Eigen::kroneckerProduct(id, odo).eval() -
                                 0.5 * Eigen::kroneckerProduct(odo.transpose(), id).eval());
    }
    return s;
}

/// max |(vec(I)^dag L)_i|: zero for a trace-preserving generator.
inline double trace_functional_residual(const Superoperator& l) {
    const Eigen::Index d = l.hilbert_dim;
    Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(d * d);
    for (Eigen::Index j = 0; j < d; ++j) row(j + j * d) = 1.0;
    return (row * l.matrix).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// LAPACK helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Eigenvalues of a general complex matrix (zgeev, no vectors).
inline Eigen::VectorXcd general_eigenvalues(Eigen::MatrixXcd a) {
    const auto n = static_cast<lapack_int>(a.rows());
    Eigen::VectorXcd w(n);
    cplx dummy;
    const lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, w.data(), &dummy, 1, &dummy, 1);
    if (info != 0) throw SolverFailure("zgeev failed with info=" + std::to_string(info));
    return w;
}

class LuFactor {
public:
    explicit LuFactor(Eigen::MatrixXcd a) : a_(std::move(a)), ipiv_(static_cast<std::size_t>(a_.rows())) {
        const auto n = static_cast<lapack_int>(a_.rows());
        const lapack_int info = LAPACKE_zgetrf(LAPACK_COL_MAJOR, n, n, a_.data(), n, ipiv_.data());
        if (info < 0) throw SolverFailure("zgetrf failed with info=" + std::to_string(info));
        singular_ = info > 0;
    }

    bool exactly_singular() const noexcept { return singular_; }

    Eigen::VectorXcd solve(Eigen::VectorXcd b) const {
        const auto n = static_cast<lapack_int>(a_.rows());
        const lapack_int info =
            LAPACKE_zgetrs(LAPACK_COL_MAJOR, 'N', n, 1, a_.data(), n, ipiv_.data(), b.data(), n);
        if (info != 0) throw SolverFailure("zgetrs failed with info=" + std::to_string(info));
        return b;
    }

private:
    Eigen::MatrixXcd a_;
    std::vector<lapack_int> ipiv_;
    bool singular_ = false;
};

/// Right eigenvector of `a` for the eigenvalue closest to `lambda`.
inline Eigen::VectorXcd inverse_iteration(const Eigen::MatrixXcd& a, cplx lambda, double& residual) {
    const Eigen::Index n = a.rows();
    const double scale = std::max(1.0, a.cwiseAbs().colwise().sum().maxCoeff());
    const cplx shift = lambda + cplx(1e-11 * scale, 1e-11 * scale);
    Eigen::MatrixXcd m = a;
    m.diagonal().array() -= shift;
    LuFactor lu(std::move(m));
    Eigen::VectorXcd x = Eigen::VectorXcd::Ones(n) / std::sqrt(static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) x(i) *= std::polar(1.0, 0.7 * static_cast<double>(i));
    if (lu.exactly_singular()) throw SolverFailure("inverse iteration: shifted matrix exactly singular");
    residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 6 && residual > 1e-11; ++it) {
        x = lu.solve(x);
        x.normalize();
        residual = (a * x - lambda * x).norm() / scale;
    }
    return x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Eigenmode analysis
// ---------------------------------------------------------------------------

struct EigenmodeOptions {
    std::size_t top_k = 6;             // slowest non-stationary modes to report with vectors
    double oscillatory_min_cm = 10.0;  // |Im lambda| threshold (cm^-1) for "oscillatory"
};

struct EigenmodeEntry {
    cplx eigenvalue;                 // ps^-1
    double frequency_cm = 0.0;       // Im(lambda) in cm^-1
    bool oscillatory = false;
    std::size_t dom_j = 0;           // dominant eigenbasis element |psi_j><psi_k|
    std::size_t dom_k = 0;
    double overlap = 0.0;            // |R_jk| / ||R||_F in the eigenbasis
    double residual = 0.0;           // ||L r - lambda r|| / ||L||_1
    Eigen::MatrixXcd mode;           // eigenbasis, unit Frobenius norm
};

struct EigenmodeReport {
    int m_eig = 0;
    Eigen::VectorXcd eigenvalues;           // all, ascending |Re|, stationary first
    std::vector<EigenmodeEntry> modes;      // stationary mode, then top_k slowest others
    double max_real_part = 0.0;             // contractivity check
    std::size_t near_zero_count = 0;        // |Re| < 1e-8 and |Im| < 1e-8

    /// Slowest-decaying mode with |Im lambda| above the oscillation threshold.
    const EigenmodeEntry* slowest_oscillatory() const {
        for (const auto& m : modes) {
            if (m.oscillatory) return &m;
        }
        return nullptr;
    }
};

namespace detail {

inline void fill_projection(EigenmodeEntry& e, const Eigen::VectorXcd& r, const EigenSystem& eig, Eigen::Index d) {
    Eigen::MatrixXcd m = eig.vectors.adjoint() * unvec(r, d) * eig.vectors;
    m /= m.norm();
    Eigen::Index bj = 0, bk = 0;
    e.overlap = m.cwiseAbs().maxCoeff(&bj, &bk);
    e.dom_j = static_cast<std::size_t>(std::min(bj, bk));
    e.dom_k = static_cast<std::size_t>(std::max(bj, bk));
    e.mode = std::move(m);
}

}  // namespace detail

/// Full spectrum by zgeev; eigenvectors for the stationary mode and the top_k
/// slowest non-stationary modes by inverse iteration.
inline EigenmodeReport eigenmode_analysis(const Superoperator& l, const EigenSystem& eig,
                                          const EigenmodeOptions& opt = {}) {
    if (l.basis != BasisTag::local) throw BasisMismatch("eigenmode_analysis: superoperator must be in the local basis");
    const Eigen::Index d = l.hilbert_dim;
    if (static_cast<Eigen::Index>(eig.dimension()) != d) {
        throw BasisMismatch("eigenmode_analysis: eigensystem dimension does not match superoperator");
    }
    EigenmodeReport rep;
    rep.m_eig = l.truncation_m;
    const Eigen::VectorXcd w = detail::general_eigenvalues(l.matrix);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(w.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ra = std::abs(w(a).real()), rb = std::abs(w(b).real());
        if (ra != rb) return ra < rb;
        return w(a).imag() > w(b).imag();
    });
    rep.eigenvalues.resize(w.size());
    rep.max_real_part = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < order.size(); ++i) {
        rep.eigenvalues(static_cast<Eigen::Index>(i)) = w(order[i]);
        rep.max_real_part = std::max(rep.max_real_part, w(order[i]).real());
        if (std::abs(w(order[i])) < 1e-8) ++rep.near_zero_count;
    }

    const double osc = units::to_angular(opt.oscillatory_min_cm);
    const Eigen::Index total = rep.eigenvalues.size();
    std::vector<Eigen::Index> pick;
    for (Eigen::Index i = 0; i < total && pick.size() < opt.top_k + 1; ++i) pick.push_back(i);
    for (Eigen::Index i = 0; i < total; ++i) {
        if (std::abs(rep.eigenvalues(i).imag()) >= osc) {
            if (i >= static_cast<Eigen::Index>(pick.size())) pick.push_back(i);
            break;
        }
    }
    for (Eigen::Index i : pick) {
        const cplx lam = rep.eigenvalues(i);
        EigenmodeEntry e;
        e.eigenvalue = lam;
        e.frequency_cm = units::angular_to_wavenumber(lam.imag());
        e.oscillatory = std::abs(lam.imag()) >= osc;
        // L(R^dag) = conj(lambda) R^dag: reuse the partner when it is already known.
        const auto partner = std::find_if(rep.modes.begin(), rep.modes.end(), [&](const EigenmodeEntry& m) {
            return lam.imag() != 0.0 && std::abs(lam - std::conj(m.eigenvalue)) < 1e-8 * std::max(1.0, std::abs(lam));
        });
        if (partner != rep.modes.end()) {
            e.dom_j = partner->dom_j;
            e.dom_k = partner->dom_k;
            e.overlap = partner->overlap;
            e.residual = partner->residual;
            e.mode = partner->mode.adjoint();
        } else {
            const Eigen::VectorXcd r = detail::inverse_iteration(l.matrix, lam, e.residual);
            detail::fill_projection(e, r, eig, d);
        }
        rep.modes.push_back(std::move(e));
    }
    return rep;
}

/// Null vector of L normalised to a unit-trace Hermitian matrix (local basis).
inline DensityMatrix steady_state(const Superoperator& l) {
    const Eigen::Index d = l.hilbert_dim;
    Eigen::MatrixXcd a = l.matrix;
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(0, c) = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) a(0, j + j * d) = 1.0;
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(d * d);
    b(0) = 1.0;
    detail::LuFactor lu(std::move(a));
    if (lu.exactly_singular()) throw SolverFailure("steady_state: stationary state is not unique");
    Eigen::MatrixXcd rho = unvec(lu.solve(b), d);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace();
    return {rho, l.basis, std::numeric_limits<double>::infinity()};
}

/// vec(rho(t)) = expm(L t) vec(rho0). Dense reference for small truncations.
inline DensityMatrix propagate_expm(const Superoperator& l, const DensityMatrix& rho0, double t) {
    require_same_basis(l.basis, rho0.basis, "propagate_expm");
    const Eigen::MatrixXcd prop = (l.matrix * t).exp();
    return {unvec(prop * vec(rho0.matrix), l.hilbert_dim), rho0.basis, rho0.time + t};
}

// ---------------------------------------------------------------------------
// Eigenbasis (Redfield) form
// ---------------------------------------------------------------------------

struct RedfieldForm {
    Eigen::VectorXcd coherent;  // -i kappa (eps_j - eps_k) at index j + k D
    Eigen::MatrixXcd tensor;    // R: L_eig - diag(coherent)
    Eigen::Index hilbert_dim = 0;

    /// d rho_jk / dt for an eigenbasis state.
    cplx rate(const Eigen::MatrixXcd& rho, std::size_t j, std::size_t k) const {
        const Eigen::Index idx = static_cast<Eigen::Index>(j) + static_cast<Eigen::Index>(k) * hilbert_dim;
        return coherent(idx) * rho(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) +
               tensor.row(idx).transpose().cwiseProduct(vec(rho)).sum();
    }

    cplx element(std::size_t j, std::size_t k, std::size_t a, std::size_t b) const {
        const auto d = hilbert_dim;
        return tensor(static_cast<Eigen::Index>(j) + static_cast<Eigen::Index>(k) * d,
                      static_cast<Eigen::Index>(a) + static_cast<Eigen::Index>(b) * d);
    }
};

/// Rotates L into the eigenbasis, W L W^dag with W = V^T (x) V^dag, and splits
/// off the coherent diagonal.
inline RedfieldForm redfield_form(const Superoperator& l, const EigenSystem& eig) {
    if (l.basis != BasisTag::local) throw BasisMismatch("redfield_form: superoperator must be in the local basis");
    const Eigen::Index d = l.hilbert_dim;
    if (static_cast<Eigen::Index>(eig.dimension()) != d) throw BasisMismatch("redfield_form: dimension mismatch");
    const Eigen::MatrixXcd& v = eig.vectors;
    const Eigen::Index n = d * d;
    // Column c of W X is vec(V^dag unvec(X_c) V).
    auto rotate_columns = [&](const Eigen::MatrixXcd& x) {
        Eigen::MatrixXcd out(n, n);
        for (Eigen::Index c = 0; c < n; ++c) {
            Eigen::Map<const Eigen::MatrixXcd> col(x.col(c).data(), d, d);
            Eigen::Map<Eigen::MatrixXcd>(out.col(c).data(), d, d) = v.adjoint() * col * v;
        }
        return out;
    };
    const Eigen::MatrixXcd a = rotate_columns(l.matrix);
    RedfieldForm rf;
    rf.hilbert_dim = d;
    rf.tensor = rotate_columns(a.adjoint()).adjoint();
    rf.coherent.resize(n);
    const cplx mik(0.0, -units::kAngularPerWavenumber);
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) {
            rf.coherent(j + k * d) = mik * (eig.energies(j) - eig.energies(k));
        }
    }
    rf.tensor.diagonal() -= rf.coherent;
    return rf;
}

}  // namespace vibsync
