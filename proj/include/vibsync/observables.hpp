// observables.hpp - expectation values and eigenbasis coherence tracks.
//
// Coherence tracks read rho_jk(t) from the K x K eigenbasis block that the
// propagators keep on every grid point, so pairs must satisfy j, k < K.

#pragma once

#include "vibsync/dynamics.hpp"
#include "vibsync/error.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/units.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vibsync {

using Pair = std::pair<std::size_t, std::size_t>;

/// Tr{O rho(t)} over the stored (thinned) eigenbasis states.
inline std::vector<double> expectation_series(const Trajectory& traj, const Operator& op) {
    require_same_basis(op.basis, BasisTag::eigen, "expectation_series");
    std::vector<double> out;
    out.reserve(traj.states.size());
    for (const auto& s : traj.states) {
        if (s.dimension() != op.dimension()) throw BasisMismatch("expectation_series: dimension mismatch");
        const cplx v = (op.matrix.transpose().cwiseProduct(s.matrix)).sum();
        if (std::abs(v.imag()) > 1e-8 * std::max(1.0, std::abs(v.real()))) {
            throw InvariantViolation("expectation_series: non-Hermitian observable or state (imaginary part " +
                                     std::to_string(v.imag()) + ")");
        }
        out.push_back(v.real());
    }
    return out;
}

inline std::vector<double> state_times(const Trajectory& traj) {
    std::vector<double> t;
    t.reserve(traj.states.size());
    for (const auto& s : traj.states) t.push_back(s.time);
    return t;
}

// ---------------------------------------------------------------------------
// Coherence tracks
// ---------------------------------------------------------------------------

struct CoherenceTrack {
    std::size_t j = 0;
    std::size_t k = 0;
    std::vector<cplx> rho;     // rho_jk(t) on the trajectory grid
    cplx weight_x1, weight_x2; // <psi_k| X_i |psi_j>
    double omega_kj = 0.0;     // cm^-1

    std::vector<double> weighted_real(int mode) const {
        const cplx w = mode == 1 ? weight_x1 : weight_x2;
        std::vector<double> out(rho.size());
        for (std::size_t i = 0; i < rho.size(); ++i) out[i] = (rho[i] * w).real();
        return out;
    }

    std::vector<double> weighted_magnitude(int mode) const {
        const double w = std::abs(mode == 1 ? weight_x1 : weight_x2);
        std::vector<double> out(rho.size());
        for (std::size_t i = 0; i < rho.size(); ++i) out[i] = std::abs(rho[i]) * w;
        return out;
    }

    std::string label() const { return std::to_string(j) + "_" + std::to_string(k); }
};

inline std::vector<CoherenceTrack> coherence_tracks(const Trajectory& traj, const EigenSystem& eig,
                                                    const OperatorSet& ops, const std::vector<Pair>& pairs) {
    const Operator x1 = eig.to_eigenbasis(ops.x1);
    const Operator x2 = eig.to_eigenbasis(ops.x2);
    std::vector<CoherenceTrack> out;
    out.reserve(pairs.size());
    for (auto [j, k] : pairs) {
        if (j >= eig.dimension() || k >= eig.dimension()) {
            throw IndexOutOfRange("coherence pair (" + std::to_string(j) + "," + std::to_string(k) +
                                  ") outside spectrum");
        }
        if (j >= traj.block_size || k >= traj.block_size) {
            throw IndexOutOfRange("coherence pair (" + std::to_string(j) + "," + std::to_string(k) +
                                  ") outside the tracked block of size " + std::to_string(traj.block_size));
        }
        CoherenceTrack tr;
        tr.j = j;
        tr.k = k;
        tr.omega_kj = eig.gap(j, k);
        const auto ej = static_cast<Eigen::Index>(j), ek = static_cast<Eigen::Index>(k);
        tr.weight_x1 = x1.matrix(ek, ej);
        tr.weight_x2 = x2.matrix(ek, ej);
        tr.rho.reserve(traj.times.size());
        for (const auto& b : traj.block) tr.rho.push_back(b(ej, ek));
        out.push_back(std::move(tr));
    }
    return out;
}

/// Largest violation of |rho_jk| <= sqrt(rho_jj rho_kk) along a track.
inline double cauchy_schwarz_excess(const Trajectory& traj, const CoherenceTrack& tr) {
    double worst = -std::numeric_limits<double>::infinity();
    const auto ej = static_cast<Eigen::Index>(tr.j), ek = static_cast<Eigen::Index>(tr.k);
    for (std::size_t i = 0; i < traj.block.size(); ++i) {
        const double pj = traj.block[i](ej, ej).real();
        const double pk = traj.block[i](ek, ek).real();
        worst = std::max(worst, std::abs(tr.rho[i]) - std::sqrt(std::max(0.0, pj * pk)));
    }
    return worst;
}

/// Pairs (j < k) inside the tracked block ranked by max_t |rho_jk(t)| |X1_kj|.
/// Pairs whose coherence never exceeds `threshold` are skipped.
inline std::vector<Pair> default_pairs(const Trajectory& traj, const EigenSystem& eig, const OperatorSet& ops,
                                       std::size_t cap = 7, double threshold = 1e-6) {
    const Eigen::MatrixXcd x1 = eig.to_eigenbasis(ops.x1).matrix;
    const auto kb = static_cast<Eigen::Index>(traj.block_size);
    Eigen::MatrixXd peak = Eigen::MatrixXd::Zero(kb, kb);
    for (const auto& b : traj.block) peak = peak.cwiseMax(b.cwiseAbs());
    std::vector<std::pair<double, Pair>> ranked;
    for (Eigen::Index j = 0; j < kb; ++j) {
        for (Eigen::Index k = j + 1; k < kb; ++k) {
            if (peak(j, k) <= threshold) continue;
            const double w = peak(j, k) * std::abs(x1(k, j));
            if (w > 0.0) ranked.push_back({w, {static_cast<std::size_t>(j), static_cast<std::size_t>(k)}});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Pair> out;
    for (std::size_t i = 0; i < std::min(cap, ranked.size()); ++i) out.push_back(ranked[i].second);
    return out;
}

// ---------------------------------------------------------------------------
// Reconstruction of <X_i(t)> from eigenbasis elements
// ---------------------------------------------------------------------------

struct Reconstruction {
    std::vector<double> signal;    // Tr{X rho}
    std::vector<double> diagonal;  // sum_j rho_jj X_jj over the block
    std::vector<double> pairs;     // sum over selected pairs of 2 Re[rho_jk X_kj]
    double residual_rms = 0.0;     // rms(signal - diagonal - pairs)
    double signal_rms = 0.0;       // rms(signal - mean)

    double relative_residual() const { return signal_rms > 0.0 ? residual_rms / signal_rms : 0.0; }
};

inline Reconstruction reconstruct_position(const Trajectory& traj, const EigenSystem& eig, const OperatorSet& ops,
                                           const std::vector<Pair>& pairs, int mode = 1) {
    const std::string name = mode == 1 ? "X1" : "X2";
    const Eigen::MatrixXcd x = eig.to_eigenbasis(mode == 1 ? ops.x1 : ops.x2).matrix;
    Reconstruction r;
    r.signal = traj.series(name);
    const std::size_t n = traj.block.size();
    if (r.signal.size() != n) throw ConfigError("reconstruct_position: series and block lengths differ");
    r.diagonal.assign(n, 0.0);
    r.pairs.assign(n, 0.0);
    const auto kb = static_cast<Eigen::Index>(traj.block_size);
    for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < kb; ++j) r.diagonal[i] += (traj.block[i](j, j) * x(j, j)).real();
        for (auto [j, k] : pairs) {
            const auto ej = static_cast<Eigen::Index>(j), ek = static_cast<Eigen::Index>(k);
            r.pairs[i] += 2.0 * (traj.block[i](ej, ek) * x(ek, ej)).real();
        }
    }
    double mean = 0.0;
    for (double v : r.signal) mean += v;
    mean /= static_cast<double>(n);
    double res2 = 0.0, sig2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = r.signal[i] - r.diagonal[i] - r.pairs[i];
        res2 += d * d;
        sig2 += (r.signal[i] - mean) * (r.signal[i] - mean);
    }
    r.residual_rms = std::sqrt(res2 / static_cast<double>(n));
    r.signal_rms = std::sqrt(sig2 / static_cast<double>(n));
    return r;
}

// ---------------------------------------------------------------------------
// Coherence envelopes and lifetimes
// ---------------------------------------------------------------------------

/// Oscillation amplitude of rho_jk about its late-time offset: the offset is
/// the mean over the last period, the remainder is demodulated at kappa
/// Omega_kj and averaged over one period (trapezoid). Envelope sample i
/// covers [t_i, t_i + T]; the series is shorter than the track by one period.
struct Envelope {
    std::vector<double> times;
    std::vector<double> values;
    double offset = 0.0;  // |late-time offset|
};

inline Envelope coherence_envelope(const std::vector<double>& times, const CoherenceTrack& tr) {
    Envelope env;
    const std::size_t n = times.size();
    if (n < 3 || tr.rho.size() != n) throw ConfigError("coherence_envelope: track and grid mismatch");
    const double dt = times[1] - times[0];
    const double omega = std::abs(tr.omega_kj);
    if (omega <= 0.0) throw ConfigError("coherence_envelope: pair has zero frequency");
    const auto m = static_cast<std::size_t>(std::llround(units::period_ps(omega) / dt));
    if (m < 2 || m + 1 > n) throw WindowTooShort("coherence_envelope: trajectory shorter than one period");
    cplx offset = 0.0;
    for (std::size_t i = n - m; i < n; ++i) offset += tr.rho[i];
    offset /= static_cast<double>(m);
    env.offset = std::abs(offset);

    const double w = units::to_angular(tr.omega_kj);
    std::vector<cplx> cum(n, 0.0);
    cplx prev = (tr.rho[0] - offset) * std::polar(1.0, -w * times[0]);
    for (std::size_t i = 1; i < n; ++i) {
        const cplx cur = (tr.rho[i] - offset) * std::polar(1.0, -w * times[i]);
        cum[i] = cum[i - 1] + 0.5 * dt * (prev + cur);
        prev = cur;
    }
    const double span = static_cast<double>(m) * dt;
    for (std::size_t i = 0; i + m < n; ++i) {
        env.times.push_back(times[i]);
        env.values.push_back(std::abs(cum[i + m] - cum[i]) / span);
    }
    return env;
}

/// Mean envelope over [t_from, t_to].
inline double mean_envelope(const Envelope& env, double t_from, double t_to) {
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < env.times.size(); ++i) {
        if (env.times[i] >= t_from - 1e-12 && env.times[i] <= t_to + 1e-12) {
            acc += env.values[i];
            ++cnt;
        }
    }
    return cnt ? acc / static_cast<double>(cnt) : 0.0;
}

/// e-folding time (ps) from a least-squares fit of ln(envelope) over [t_from, t_to];
/// infinity if the envelope does not decay.
inline double coherence_lifetime(const Envelope& env, double t_from, double t_to) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < env.times.size(); ++i) {
        const double t = env.times[i];
        if (t < t_from - 1e-12 || t > t_to + 1e-12 || !(env.values[i] > 0.0)) continue;
        const double y = std::log(env.values[i]);
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        ++cnt;
    }
    if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
    const double c = static_cast<double>(cnt);
    const double denom = c * sxx - sx * sx;
    if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double slope = (c * sxy - sx * sy) / denom;
    return slope < 0.0 ? -1.0 / slope : std::numeric_limits<double>::infinity();
}

struct LongestLived {
    Pair pair{0, 0};
    double mean_envelope = 0.0;
    double runner_up = 0.0;
};

/// Pair in `candidates` whose envelope, averaged over [t_from, t_to], is largest.
inline LongestLived longest_lived(const std::vector<double>& times, const std::vector<CoherenceTrack>& candidates,
                                  double t_from, double t_to) {
    LongestLived best;
    for (const auto& tr : candidates) {
        if (std::abs(tr.omega_kj) <= 0.0) continue;
        if (units::period_ps(std::abs(tr.omega_kj)) > 0.5 * (t_to - t_from)) continue;
        const double v = mean_envelope(coherence_envelope(times, tr), t_from, t_to);
        if (v > best.mean_envelope) {
            best.runner_up = best.mean_envelope;
            best.mean_envelope = v;
            best.pair = {tr.j, tr.k};
        } else {
            best.runner_up = std::max(best.runner_up, v);
        }
    }
    return best;
}

/// Every pair j < k of the tracked block, for exhaustive lifetime scans.
inline std::vector<Pair> all_block_pairs(const Trajectory& traj) {
    std::vector<Pair> out;
    for (std::size_t j = 0; j < traj.block_size; ++j) {
        for (std::size_t k = j + 1; k < traj.block_size; ++k) out.push_back({j, k});
    }
    return out;
}

}  // namespace vibsync
