// Shared helpers for the unit suites.

#pragma once

#include "vibsync/vibsync.hpp"

#include <Eigen/Dense>

#include <random>

namespace vibsync::fixture {

inline DimerParams small_params(int m = 2) {
    DimerParams p;
    p.m_levels = m;
    return p;
}

/// Random full-rank density matrix from a seeded Ginibre draw.
inline Eigen::MatrixXcd random_density(Eigen::Index d, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXcd g(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) g(i, j) = cplx(n(rng), n(rng));
    Eigen::MatrixXcd rho = g * g.adjoint();
    return rho / rho.trace();
}

inline double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace vibsync::fixture
