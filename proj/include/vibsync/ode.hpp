// ode.hpp - Dormand-Prince 5(4) integrator with continuous output.
//
// Works on any Eigen dense type (matrix or vector, real or complex). The
// right-hand side is called as f(t, y, dydt) and must write into dydt.
// Output points come from the 4th-order continuous extension, so the step
// sequence does not depend on the output grid.

#pragma once

#include "vibsync/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace vibsync {

struct Dopri5Options {
    double rtol = 1e-8;
    double atol = 1e-10;
    double h_init = 0.0;  // 0 selects automatically
    double h_max = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 50'000'000;
};

struct Dopri5Stats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evals = 0;
    double h_last = 0.0;
};

namespace dopri {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri

template <class State>
class Dopri5 {
public:
    using Rhs = std::function<void(double, const State&, State&)>;
    using Observer = std::function<void(double, const State&)>;

    Dopri5(Rhs f, Dopri5Options opt) : f_(std::move(f)), opt_(opt) {
        if (!(opt_.rtol > 0.0) || !(opt_.atol > 0.0)) {
            throw ConfigError("Dopri5: tolerances must be positive");
        }
    }

    /// Integrates from t0 with y0, reporting y at each grid time (ascending, >= t0).
    Dopri5Stats integrate(const State& y0, double t0, const std::vector<double>& grid,
                          const Observer& observe) {
        Dopri5Stats stats;
        if (grid.empty()) return stats;
        if (grid.front() < t0) throw ConfigError("Dopri5: output grid starts before t0");
        for (std::size_t i = 1; i < grid.size(); ++i) {
            if (!(grid[i] > grid[i - 1])) throw ConfigError("Dopri5: output grid must increase");
        }

        using namespace dopri;
        State y = y0;
        State k1, k2, k3, k4, k5, k6, k7, tmp, ynew;
        k1.resizeLike(y);
        k7.resizeLike(y);
        f_(t0, y, k1);
        ++stats.rhs_evals;

        std::size_t next = 0;
        while (next < grid.size() && grid[next] == t0) observe(grid[next++], y);
        if (next == grid.size()) return stats;

        const double t_end = grid.back();
        double t = t0;
        double h = opt_.h_init > 0.0 ? opt_.h_init : initial_step(t, y, k1, t_end - t0, stats);
        double err_old = 1e-4;
        bool last_rejected = false;
        State r1, r2, r3, r4, r5;

        while (t < t_end) {
            if (stats.accepted + stats.rejected >= opt_.max_steps) {
                throw StepSizeUnderflow("Dopri5: step budget exhausted at t=" + std::to_string(t));
            }
            h = std::min(h, opt_.h_max);
            if (t + h > t_end) h = t_end - t;
            if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
                throw StepSizeUnderflow("Dopri5: step size underflow at t=" + std::to_string(t));
            }

            tmp = y + h * a21 * k1;
            f_(t + c2 * h, tmp, k2);
            tmp = y + h * (a31 * k1 + a32 * k2);
            f_(t + c3 * h, tmp, k3);
            tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
            f_(t + c4 * h, tmp, k4);
            tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            f_(t + c5 * h, tmp, k5);
            tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            f_(t + h, tmp, k6);
            ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
            f_(t + h, ynew, k7);
            stats.rhs_evals += 6;

            tmp = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const double err = error_norm(tmp, y, ynew);
            if (!std::isfinite(err)) {
                throw StepSizeUnderflow("Dopri5: non-finite error estimate at t=" + std::to_string(t));
            }

            if (err <= 1.0) {
                const double t_new = t + h;
                if (next < grid.size() && grid[next] <= t_new) {
                    r1 = y;
                    r2 = ynew - y;
                    r3 = h * k1 - r2;
                    r4 = r2 - h * k7 - r3;
                    r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                    while (next < grid.size() && grid[next] <= t_new) {
                        const double th = (grid[next] - t) / h;
                        const double th1 = 1.0 - th;
                        tmp = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
                        observe(grid[next++], tmp);
                    }
                }
                y.swap(ynew);
                k1.swap(k7);
                t = t_new;
                ++stats.accepted;
                stats.h_last = h;

                // Lund-stabilised step control.
                double fac = 0.9 * std::pow(err, -0.17) * std::pow(err_old, 0.04);
                if (err == 0.0) fac = 5.0;
                fac = std::clamp(fac, 0.2, 5.0);
                if (last_rejected) fac = std::min(fac, 1.0);
                h *= fac;
                err_old = std::max(err, 1e-4);
                last_rejected = false;
            } else {
                h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
                ++stats.rejected;
                last_rejected = true;
            }
        }
        while (next < grid.size()) observe(grid[next++], y);
        return stats;
    }

private:
    double error_norm(const State& err, const State& y, const State& ynew) const {
        const auto sc = (opt_.atol + opt_.rtol * y.array().abs().max(ynew.array().abs())).eval();
        return std::sqrt((err.array().abs() / sc).square().mean());
    }

    double initial_step(double t, const State& y, const State& f0, double span, Dopri5Stats& stats) {
        const auto sc = (opt_.atol + opt_.rtol * y.array().abs()).eval();
        const double d0 = std::sqrt((y.array().abs() / sc).square().mean());
        const double d1 = std::sqrt((f0.array().abs() / sc).square().mean());
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        State y1 = y + h0 * f0;
        State f1;
        f1.resizeLike(y);
        f_(t + h0, y1, f1);
        ++stats.rhs_evals;
        const double d2 = std::sqrt(((f1 - f0).array().abs() / sc).square().mean()) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        return std::min({100.0 * h0, h1, span});
    }

    Rhs f_;
    Dopri5Options opt_;
};

}  // namespace vibsync
