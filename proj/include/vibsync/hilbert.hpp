// hilbert.hpp - composite Hilbert space of the exciton-vibration dimer.
//
// Space: electronic (two excitons) x mode 1 (Fock 0..M) x mode 2 (Fock 0..M).
// Flattened index ordering is exciton-major, then n1, then n2:
//
//     index(d, n1, n2) = (d - 1) * (M+1)^2 + n1 * (M+1) + n2,   d in {1, 2}
//
// All operators built here live in this "local" exciton-product basis. The
// electronic factor is expressed in the exciton basis {|E1>, |E2>}; site
// projectors |e_i><e_i| are rotated into it with U(theta).
//
// Site-1 energy is the zero of energy, so E_{1,2} = (delta_e -/+ dE) / 2.

#pragma once

#include "vibsync/error.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vibsync {

using cplx = std::complex<double>;

/// Physical parameters of the dimer. Defaults are the PE545 central dimer.
struct DimerParams {
    double delta_e = 1042.0;     // site energy gap e2 - e1 (cm^-1)
    double v = 92.0;             // electronic coupling (cm^-1)
    double omega1 = 1111.0;      // mode frequencies (cm^-1)
    double omega2 = 1111.0;
    double g1 = 267.1;           // exciton-vibration couplings (cm^-1)
    double g2 = 267.1;
    double kbt = 207.1;          // thermal energy (cm^-1)
    double gamma_th = 1.0;       // mode relaxation rate (ps^-1)
    double gamma_deph = 10.0;    // pure dephasing rate (ps^-1)
    int m_levels = 8;            // Fock truncation, levels 0..M

    std::size_t mode_levels() const noexcept { return static_cast<std::size_t>(m_levels) + 1; }
    std::size_t dimension() const noexcept { return 2 * mode_levels() * mode_levels(); }

    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError("DimerParams: " + what); };
        const double fields[] = {delta_e, v, omega1, omega2, g1, g2, kbt, gamma_th, gamma_deph};
        for (double x : fields) {
            if (!std::isfinite(x)) fail("all parameters must be finite");
        }
        if (delta_e < 0.0) fail("delta_e must be non-negative");
        if (v < 0.0) fail("v must be non-negative");
        if (g1 < 0.0 || g2 < 0.0) fail("g1, g2 must be non-negative");
        if (gamma_th < 0.0 || gamma_deph < 0.0) fail("rates must be non-negative");
        if (omega1 <= 0.0 || omega2 <= 0.0) fail("omega1, omega2 must be positive");
        if (kbt <= 0.0) fail("kbt must be positive");
        if (m_levels < 1) fail("m_levels must be >= 1");
    }

    bool operator==(const DimerParams&) const = default;
};

/// Quantum numbers of one local basis vector |E_d, n1, n2>.
struct BasisLabel {
    int exciton = 1;  // 1 or 2
    int n1 = 0;
    int n2 = 0;
    bool operator==(const BasisLabel&) const = default;
};

/// Bijection between flattened indices and (d, n1, n2).
class ProductBasis {
public:
    explicit ProductBasis(int m_levels) : levels_(static_cast<std::size_t>(m_levels) + 1) {
        if (m_levels < 1) throw ConfigError("ProductBasis: m_levels must be >= 1");
    }

    std::size_t mode_levels() const noexcept { return levels_; }
    std::size_t dimension() const noexcept { return 2 * levels_ * levels_; }

    std::size_t index(const BasisLabel& l) const {
        const auto n = static_cast<int>(levels_);
        if (l.exciton < 1 || l.exciton > 2 || l.n1 < 0 || l.n1 >= n || l.n2 < 0 || l.n2 >= n) {
            throw IndexOutOfRange("ProductBasis: label outside truncated space");
        }
        return static_cast<std::size_t>(l.exciton - 1) * levels_ * levels_ +
               static_cast<std::size_t>(l.n1) * levels_ + static_cast<std::size_t>(l.n2);
    }

    BasisLabel label(std::size_t index) const {
        if (index >= dimension()) throw IndexOutOfRange("ProductBasis: index outside space");
        const std::size_t block = levels_ * levels_;
        return BasisLabel{static_cast<int>(index / block) + 1,
                          static_cast<int>((index % block) / levels_),
                          static_cast<int>(index % levels_)};
    }

private:
    std::size_t levels_;
};

enum class BasisTag { local, eigen };

inline const char* to_string(BasisTag tag) noexcept {
    return tag == BasisTag::local ? "local-exciton-product" : "system-eigenbasis";
}

inline void require_same_basis(BasisTag a, BasisTag b, const char* context) {
    if (a != b) {
        throw BasisMismatch(std::string(context) + ": operands in different bases (" + to_string(a) +
                            " vs " + to_string(b) + ")");
    }
}

/// Dense operator on the composite space, tagged with the basis it is written in.
struct Operator {
    Eigen::MatrixXcd matrix;
    BasisTag basis = BasisTag::local;

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
    Operator adjoint() const { return {matrix.adjoint(), basis}; }
};

inline Operator operator+(const Operator& a, const Operator& b) {
    require_same_basis(a.basis, b.basis, "Operator +");
    return {a.matrix + b.matrix, a.basis};
}

inline Operator operator-(const Operator& a, const Operator& b) {
    require_same_basis(a.basis, b.basis, "Operator -");
    return {a.matrix - b.matrix, a.basis};
}

inline Operator operator*(const Operator& a, const Operator& b) {
    require_same_basis(a.basis, b.basis, "Operator *");
    return {a.matrix * b.matrix, a.basis};
}

inline Operator operator*(cplx s, const Operator& a) { return {s * a.matrix, a.basis}; }
inline Operator operator*(double s, const Operator& a) { return {s * a.matrix, a.basis}; }

/// Operators used by the model and its analysis, all in the local basis.
struct OperatorSet {
    Operator b1, b1_dag, b2, b2_dag;
    Operator x1, x2;            // position quadratures b + b^dag
    Operator theta1, theta2;    // site projectors rotated into the exciton basis
    Operator sigma_x;           // |E1><E2| + |E2><E1|
    Operator p00;               // |0_1><0_1| (x) |0_2><0_2|
    Operator pop_e1, pop_e2;    // exciton populations
    Operator identity;
};

/// Cap on (M+1)^2; the dense dimension is twice this.
inline constexpr std::size_t kDefaultMaxVibrationalDim = 1024;

inline double mixing_angle(const DimerParams& p) {
    if (p.delta_e == 0.0) return p.v == 0.0 ? 0.0 : std::numbers::pi / 4.0;
    return 0.5 * std::atan(2.0 * p.v / p.delta_e);
}

/// E2 - E1 = sqrt(delta_e^2 + 4 V^2).
inline double exciton_splitting(const DimerParams& p) {
    return std::sqrt(p.delta_e * p.delta_e + 4.0 * p.v * p.v);
}

namespace detail {

inline Eigen::MatrixXcd annihilation(std::size_t levels) {
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(levels, levels);
    for (std::size_t n = 1; n < levels; ++n) b(n - 1, n) = std::sqrt(static_cast<double>(n));
    return b;
}

inline Eigen::MatrixXcd kron3(const Eigen::MatrixXcd& el, const Eigen::MatrixXcd& m1,
                              const Eigen::MatrixXcd& m2) {
    return Eigen::kroneckerProduct(el, Eigen::kroneckerProduct(m1, m2).eval()).eval();
}

/// Rotation taking site states to excitons, written in the exciton basis.
inline Eigen::Matrix2cd exciton_rotation(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix2cd u;
    u << c, s, -s, c;
    return u;
}

/// Theta_i = U |e_i><e_i| U^dag on the 2-dim electronic factor.
inline Eigen::Matrix2cd site_projector(double theta, int site) {
    const Eigen::Matrix2cd u = exciton_rotation(theta);
    Eigen::Matrix2cd p = Eigen::Matrix2cd::Zero();
    p(site - 1, site - 1) = 1.0;
    return u * p * u.adjoint();
}

inline void check_dimension(const DimerParams& p, std::size_t max_vib_dim) {
    const std::size_t vib = p.mode_levels() * p.mode_levels();
    if (vib > max_vib_dim) {
        throw DimensionOverflow("truncation M=" + std::to_string(p.m_levels) + " gives (M+1)^2=" +
                                std::to_string(vib) + " > configured maximum " +
                                std::to_string(max_vib_dim));
    }
}

}  // namespace detail

inline OperatorSet build_operators(const DimerParams& p,
                                   std::size_t max_vib_dim = kDefaultMaxVibrationalDim) {
    p.validate();
    detail::check_dimension(p, max_vib_dim);
    const std::size_t n = p.mode_levels();
    const Eigen::MatrixXcd b = detail::annihilation(n);
    const Eigen::MatrixXcd im = Eigen::MatrixXcd::Identity(n, n);
    const Eigen::MatrixXcd ie = Eigen::MatrixXcd::Identity(2, 2);
    const double theta = mixing_angle(p);

    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(n, n);
    vac(0, 0) = 1.0;
    Eigen::MatrixXcd sx(2, 2);
    sx << 0.0, 1.0, 1.0, 0.0;
    Eigen::MatrixXcd e1 = Eigen::MatrixXcd::Zero(2, 2);
    e1(0, 0) = 1.0;
    Eigen::MatrixXcd e2 = Eigen::MatrixXcd::Zero(2, 2);
    e2(1, 1) = 1.0;

    auto local = [](Eigen::MatrixXcd m) { return Operator{std::move(m), BasisTag::local}; };

    OperatorSet ops;
    ops.b1 = local(detail::kron3(ie, b, im));
    ops.b2 = local(detail::kron3(ie, im, b));
    ops.b1_dag = ops.b1.adjoint();
    ops.b2_dag = ops.b2.adjoint();
    ops.x1 = ops.b1 + ops.b1_dag;
    ops.x2 = ops.b2 + ops.b2_dag;
    ops.theta1 = local(detail::kron3(detail::site_projector(theta, 1), im, im));
    ops.theta2 = local(detail::kron3(detail::site_projector(theta, 2), im, im));
    ops.sigma_x = local(detail::kron3(sx, im, im));
    ops.p00 = local(detail::kron3(ie, vac, vac));
    ops.pop_e1 = local(detail::kron3(e1, im, im));
    ops.pop_e2 = local(detail::kron3(e2, im, im));
    ops.identity = local(Eigen::MatrixXcd::Identity(p.dimension(), p.dimension()));
    return ops;
}

/// H = E1|E1><E1| + E2|E2><E2| + w1 b1^dag b1 + w2 b2^dag b2 + g1 Th1 X1 + g2 Th2 X2.
inline Operator build_hamiltonian(const DimerParams& p, const OperatorSet& ops) {
    const double split = exciton_splitting(p);
    const double e_low = 0.5 * (p.delta_e - split);
    const double e_high = 0.5 * (p.delta_e + split);
    Operator h = e_low * ops.pop_e1 + e_high * ops.pop_e2;
    h = h + p.omega1 * (ops.b1_dag * ops.b1) + p.omega2 * (ops.b2_dag * ops.b2);
    h = h + p.g1 * (ops.theta1 * ops.x1) + p.g2 * (ops.theta2 * ops.x2);
    // Theta_i and X_i commute (different factors).
    h.matrix = 0.5 * (h.matrix + h.matrix.adjoint()).eval();
    return h;
}

inline Operator build_hamiltonian(const DimerParams& p) {
    return build_hamiltonian(p, build_operators(p));
}

enum class PhaseConvention { largest_component_real_positive };

/// Eigen decomposition of H: ascending energies, eigenvectors as columns
/// (local-basis coordinates), each vector's largest component real positive.
struct EigenSystem {
    Eigen::VectorXd energies;
    Eigen::MatrixXcd vectors;
    PhaseConvention phase_convention = PhaseConvention::largest_component_real_positive;

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(energies.size()); }

    /// Omega_kj = eps_k - eps_j (cm^-1).
    double gap(std::size_t j, std::size_t k) const { return energies(k) - energies(j); }

    Operator to_eigenbasis(const Operator& op) const {
        if (op.basis == BasisTag::eigen) return op;
        check(op);
        return {vectors.adjoint() * op.matrix * vectors, BasisTag::eigen};
    }

    Operator to_local(const Operator& op) const {
        if (op.basis == BasisTag::local) return op;
        check(op);
        return {vectors * op.matrix * vectors.adjoint(), BasisTag::local};
    }

private:
    void check(const Operator& op) const {
        if (op.dimension() != dimension()) {
            throw BasisMismatch("EigenSystem: operator dimension " + std::to_string(op.dimension()) +
                                " does not match spectrum dimension " + std::to_string(dimension()));
        }
    }
};

namespace detail {

// Largest-magnitude component made real positive; near-ties go to the lowest index.
inline void fix_phase(Eigen::Ref<Eigen::VectorXcd> v) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v(i));
        if (mag > best_mag * (1.0 + 1e-12) + 1e-15) {
            best = i;
            best_mag = mag;
        }
    }
    if (best_mag <= 0.0) return;
    v *= std::conj(v(best)) / best_mag;
    v(best) = cplx(std::abs(v(best)), 0.0);
}

}  // namespace detail

inline EigenSystem diagonalise(const Operator& h) {
    if (h.matrix.rows() != h.matrix.cols() || h.matrix.rows() == 0) {
        throw ConfigError("diagonalise: Hamiltonian must be square and non-empty");
    }
    const double scale = std::max(1.0, h.matrix.cwiseAbs().maxCoeff());
    if ((h.matrix - h.matrix.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw ConfigError("diagonalise: Hamiltonian is not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h.matrix);
    if (solver.info() != Eigen::Success) {
        throw SolverFailure("diagonalise: Hermitian eigensolver did not converge");
    }
    EigenSystem eig;
    eig.energies = solver.eigenvalues();  // ascending
    eig.vectors = solver.eigenvectors();
    for (Eigen::Index j = 0; j < eig.vectors.cols(); ++j) detail::fix_phase(eig.vectors.col(j));
    return eig;
}

/// One row of the coherence matrix-element table: <psi_k| O |psi_j> for pair (j, k).
struct MatrixElementRow {
    std::size_t j = 0;
    std::size_t k = 0;
    double omega_kj = 0.0;
    cplx x1, x2, sigma_x, p00;
};

inline cplx matrix_element(const EigenSystem& eig, const Operator& op, std::size_t k, std::size_t j) {
    if (op.basis == BasisTag::eigen) return op.matrix(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    return eig.vectors.col(static_cast<Eigen::Index>(k)).dot(op.matrix * eig.vectors.col(static_cast<Eigen::Index>(j)));
}

inline std::vector<MatrixElementRow> matrix_element_table(
    const EigenSystem& eig, const OperatorSet& ops,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    std::vector<MatrixElementRow> rows;
    rows.reserve(pairs.size());
    for (auto [j, k] : pairs) {
        if (j >= eig.dimension() || k >= eig.dimension()) {
            throw IndexOutOfRange("matrix_element_table: pair (" + std::to_string(j) + "," +
                                  std::to_string(k) + ") outside spectrum of size " +
                                  std::to_string(eig.dimension()));
        }
        MatrixElementRow r;
        r.j = j;
        r.k = k;
        r.omega_kj = eig.gap(j, k);
        r.x1 = matrix_element(eig, ops.x1, k, j);
        r.x2 = matrix_element(eig, ops.x2, k, j);
        r.sigma_x = matrix_element(eig, ops.sigma_x, k, j);
        r.p00 = matrix_element(eig, ops.p00, k, j);
        rows.push_back(r);
    }
    return rows;
}

/// Closed-form estimate of the maximum coherent exciton-population oscillation.
struct EtIndicator {
    double amplitude = 0.0;      // A in [0, 1]
    double detuning = 0.0;       // dE - omega1 (cm^-1)
    double sin_two_theta = 0.0;  // exciton delocalisation
    std::optional<std::string> warning;
};

inline EtIndicator et_amplitude_indicator(const DimerParams& p) {
    EtIndicator out;
    const double split = exciton_splitting(p);
    out.detuning = split - p.omega1;
    out.sin_two_theta = split > 0.0 ? 2.0 * p.v / split : 0.0;
    const double coupling = 2.0 * p.g1 * out.sin_two_theta;
    if (out.detuning == 0.0) {
        out.amplitude = 1.0;
    } else if (coupling == 0.0) {
        out.amplitude = 0.0;
    } else {
        const double r = out.detuning / coupling;
        out.amplitude = 1.0 / (1.0 + r * r);
    }
    if (p.omega1 != p.omega2 || p.g1 != p.g2) {
        out.warning = "indicator assumes identical modes (omega1 == omega2, g1 == g2); "
                      "evaluated with omega1 and g1";
    }
    return out;
}

}  // namespace vibsync
