// syncanalysis.hpp - windowed Pearson synchronisation and Fourier spectra.

#pragma once

#include "vibsync/error.hpp"
#include "vibsync/units.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace vibsync {

// ---------------------------------------------------------------------------
// Pearson synchronisation
// ---------------------------------------------------------------------------

struct SyncSeries {
    std::vector<double> times;
    std::vector<double> values;  // NaN where a window is degenerate
    double window = 0.0;         // ps, as realised on the grid
    std::size_t window_samples = 0;
    std::string signal1, signal2;
    std::size_t degenerate_windows = 0;
};

namespace detail {

inline double grid_step(const std::vector<double>& t) {
    if (t.size() < 2) throw ConfigError("time grid needs at least two points");
    const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    if (!(dt > 0.0)) throw ConfigError("time grid must increase");
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (std::abs((t[i] - t[i - 1]) - dt) > 1e-9 * std::max(1.0, dt) + 1e-12) {
            throw ConfigError("time grid must be uniform");
        }
    }
    return dt;
}

}  // namespace detail

/// Sliding-window Pearson coefficient; window [t, t + window] with trapezoid weights.
inline SyncSeries pearson_sync(const std::vector<double>& times, const std::vector<double>& f1,
                               const std::vector<double>& f2, double window, std::string name1 = "f1",
                               std::string name2 = "f2") {
    if (f1.size() != times.size() || f2.size() != times.size()) {
        throw ConfigError("pearson_sync: signals and grid differ in length");
    }
    const double dt = detail::grid_step(times);
    const auto m = static_cast<std::size_t>(std::llround(window / dt));
    if (m < 3) throw WindowTooShort("pearson_sync: window must span at least 3 grid steps");
    if (m >= times.size()) throw WindowTooShort("pearson_sync: window longer than the series");

    SyncSeries out;
    out.window = static_cast<double>(m) * dt;
    out.window_samples = m;
    out.signal1 = std::move(name1);
    out.signal2 = std::move(name2);
    const std::size_t n_out = times.size() - m;
    out.times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n_out));
    out.values.resize(n_out);

    const double wsum = static_cast<double>(m);  // trapezoid weights sum to m
    for (std::size_t s = 0; s < n_out; ++s) {
        auto wt = [&](std::size_t i) { return (i == 0 || i == m) ? 0.5 : 1.0; };
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i <= m; ++i) {
            a += wt(i) * f1[s + i];
            b += wt(i) * f2[s + i];
        }
        a /= wsum;
        b /= wsum;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i <= m; ++i) {
            const double da = f1[s + i] - a, db = f2[s + i] - b;
            sab += wt(i) * da * db;
            saa += wt(i) * da * da;
            sbb += wt(i) * db * db;
        }
        saa *= dt;
        sbb *= dt;
        sab *= dt;
        if (saa < 1e-24 || sbb < 1e-24) {
            out.values[s] = std::numeric_limits<double>::quiet_NaN();
            ++out.degenerate_windows;
            continue;
        }
        out.values[s] = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
    }
    return out;
}

/// C(phi) for f1 = sin(a t), f2 = sin(a t + phi), averaged over window start
/// positions spanning one period. `a` is angular (rad per unit time).
inline std::vector<std::pair<double, double>> sync_phase_characterisation(double a, double window,
                                                                          const std::vector<double>& phases,
                                                                          std::size_t samples_per_period = 720) {
    if (!(a > 0.0) || !(window > 0.0)) throw ConfigError("sync_phase_characterisation: a and window must be positive");
    const double period = 2.0 * std::numbers::pi / a;
    const double dt = period / static_cast<double>(samples_per_period);
    if (window < 3.0 * dt) throw WindowTooShort("sync_phase_characterisation: window shorter than 3 samples");
    const auto m = static_cast<std::size_t>(std::llround(window / dt));
    const std::size_t n = samples_per_period + m + 1;
    std::vector<double> t(n), f1(n), f2(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = static_cast<double>(i) * dt;
        f1[i] = std::sin(a * t[i]);
    }
    std::vector<std::pair<double, double>> out;
    for (double phi : phases) {
        for (std::size_t i = 0; i < n; ++i) f2[i] = std::sin(a * t[i] + phi);
        const SyncSeries s = pearson_sync(t, f1, f2, static_cast<double>(m) * dt);
        double acc = 0.0;
        for (std::size_t i = 0; i < samples_per_period; ++i) acc += s.values[i];
        out.push_back({phi, acc / static_cast<double>(samples_per_period)});
    }
    return out;
}

/// Earliest t with C(t') >= threshold for all t' in [t, t + hold].
inline std::optional<double> sync_onset_time(const SyncSeries& sync, double threshold, double hold) {
    if (!(threshold > 0.0) || threshold > 1.0) throw ConfigError("sync_onset_time: threshold must lie in (0, 1]");
    if (hold < 0.0) throw ConfigError("sync_onset_time: hold must be non-negative");
    const std::size_t n = sync.values.size();
    if (n == 0) return std::nullopt;
    const double dt = n > 1 ? sync.times[1] - sync.times[0] : 1.0;
    const auto h = static_cast<std::size_t>(std::llround(hold / dt));
    std::size_t run = 0;  // consecutive passing samples ending at i
    for (std::size_t i = 0; i < n; ++i) {
        run = (sync.values[i] >= threshold) ? run + 1 : 0;
        if (run >= h + 1) return sync.times[i - h];
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Fourier spectra
// ---------------------------------------------------------------------------

struct Spectrum {
    std::vector<double> frequencies;  // cm^-1
    std::vector<std::complex<double>> values;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t samples = 0;

    double resolution() const { return frequencies.size() > 1 ? frequencies[1] - frequencies[0] : 0.0; }
    std::vector<double> real() const {
        std::vector<double> r(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) r[i] = values[i].real();
        return r;
    }
};

inline constexpr std::size_t kMinFtSamples = 16;
inline constexpr std::size_t kFtPadding = 4;

namespace detail {

inline std::vector<double> window_samples(const std::vector<double>& times, const std::vector<double>& signal,
                                          double t_start, double t_end, bool detrend, double& dt) {
    if (signal.size() != times.size()) throw ConfigError("spectrum: signal and grid differ in length");
    dt = grid_step(times);
    if (t_start < times.front() - 1e-9 || t_end > times.back() + 1e-9 || !(t_end > t_start)) {
        throw ConfigError("spectrum: window [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                          "] outside trajectory");
    }
    const auto i0 = static_cast<std::size_t>(std::llround((t_start - times.front()) / dt));
    const auto i1 = static_cast<std::size_t>(std::llround((t_end - times.front()) / dt));
    if (i1 + 1 - i0 < kMinFtSamples) throw WindowTooShort("spectrum: window has fewer than 16 samples");
    std::vector<double> s(signal.begin() + static_cast<std::ptrdiff_t>(i0),
                          signal.begin() + static_cast<std::ptrdiff_t>(i1) + 1);
    if (detrend) {
        double mean = 0.0;
        for (double v : s) mean += v;
        mean /= static_cast<double>(s.size());
        for (double& v : s) v -= mean;
    }
    return s;
}

}  // namespace detail

/// Unnormalised forward DFT of signal on [t_start, t_end], zero-padded 4x,
/// time origin at t_start. Non-negative frequencies only.
inline Spectrum real_ft(const std::vector<double>& times, const std::vector<double>& signal, double t_start,
                        double t_end, bool detrend = true) {
    double dt = 0.0;
    std::vector<double> s = detail::window_samples(times, signal, t_start, t_end, detrend, dt);
    Spectrum spec;
    spec.t_start = t_start;
    spec.t_end = t_end;
    spec.samples = s.size();
    const std::size_t nfft = kFtPadding * s.size();
    s.resize(nfft, 0.0);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> full;
    fft.fwd(full, s);
    const std::size_t half = nfft / 2 + 1;
    spec.values.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(half));
    spec.frequencies.resize(half);
    for (std::size_t k = 0; k < half; ++k) {
        spec.frequencies[k] = units::cycles_to_wavenumber(static_cast<double>(k) / (static_cast<double>(nfft) * dt));
    }
    return spec;
}

/// Exact DTFT of the (optionally mean-subtracted) window at a single wavenumber.
inline std::complex<double> component_at(const std::vector<double>& times, const std::vector<double>& signal,
                                         double t_start, double t_end, double wavenumber, bool detrend = true) {
    double dt = 0.0;
    const std::vector<double> s = detail::window_samples(times, signal, t_start, t_end, detrend, dt);
    const double w = 2.0 * std::numbers::pi * units::kCyclesPerPsPerWavenumber * wavenumber * dt;
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < s.size(); ++n) acc += s[n] * std::polar(1.0, -w * static_cast<double>(n));
    return acc;
}

struct SpectralPeak {
    double frequency = 0.0;  // cm^-1, parabolic interpolation
    double value = 0.0;      // real part at the peak bin
    std::size_t bin = 0;
};

/// Largest |Re F| within [f_min, f_max].
inline SpectralPeak dominant_peak(const Spectrum& spec, double f_min = 0.0,
                                  double f_max = std::numeric_limits<double>::infinity()) {
    SpectralPeak best;
    double best_mag = -1.0;
    for (std::size_t k = 0; k < spec.values.size(); ++k) {
        const double f = spec.frequencies[k];
        if (f < f_min || f > f_max) continue;
        const double mag = std::abs(spec.values[k].real());
        if (mag > best_mag) {
            best_mag = mag;
            best.bin = k;
        }
    }
    if (best_mag < 0.0) throw ConfigError("dominant_peak: empty frequency band");
    const std::size_t k = best.bin;
    best.value = spec.values[k].real();
    best.frequency = spec.frequencies[k];
    if (k > 0 && k + 1 < spec.values.size()) {
        const double y0 = std::abs(spec.values[k - 1].real());
        const double y1 = best_mag;
        const double y2 = std::abs(spec.values[k + 1].real());
        const double denom = y0 - 2.0 * y1 + y2;
        if (denom != 0.0) best.frequency += 0.5 * (y0 - y2) / denom * spec.resolution();
    }
    return best;
}

}  // namespace vibsync
