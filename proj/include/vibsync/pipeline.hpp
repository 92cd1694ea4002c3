// pipeline.hpp - scenario orchestration: simulate, analyse, write artefacts.

#pragma once

#include "vibsync/config.hpp"
#include "vibsync/dynamics.hpp"
#include "vibsync/error.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/liouville.hpp"
#include "vibsync/observables.hpp"
#include "vibsync/svg.hpp"
#include "vibsync/syncanalysis.hpp"
#include "vibsync/units.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace vibsync {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kBasisOrdering =
    "index(d, n1, n2) = (d-1)*(M+1)^2 + n1*(M+1) + n2; exciton-major, then mode 1, then mode 2";

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    return fmt("%.10e", v);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string sha256_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read '" + p.string() + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// In-memory scenario run
// ---------------------------------------------------------------------------

struct SpectrumSnapshot {
    double time = 0.0;
    Spectrum x1, x2;
};

struct ScenarioResult {
    ScenarioConfig config;
    OperatorSet ops;
    Operator hamiltonian;
    EigenSystem eig;
    Trajectory traj;
    std::vector<Pair> pairs;
    std::vector<CoherenceTrack> tracks;
    SyncSeries sync;
    std::optional<double> onset;
    EtIndicator indicator;
    std::vector<SpectrumSnapshot> spectra;
    double build_seconds = 0.0;
    double propagate_seconds = 0.0;
    double analysis_seconds = 0.0;
};

inline RecordSpec standard_record(const ScenarioConfig& c, const OperatorSet& ops) {
    RecordSpec r;
    r.observables = {{"X1", ops.x1}, {"X2", ops.x2}, {"popE1", ops.pop_e1}, {"popE2", ops.pop_e2}};
    r.block_size = c.tracked_block();
    r.state_stride = c.recording.state_stride;
    return r;
}

/// Build, diagonalise, propagate and analyse one scenario. No file output.
inline ScenarioResult simulate(const ScenarioConfig& config) {
    config.validate();
    ScenarioResult r;
    r.config = config;
    auto t0 = std::chrono::steady_clock::now();
    r.ops = build_operators(config.params, config.max_vib_dim);
    r.hamiltonian = build_hamiltonian(config.params, r.ops);
    r.eig = diagonalise(r.hamiltonian);
    r.indicator = et_amplitude_indicator(config.params);
    r.build_seconds = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const RecordSpec rec = standard_record(config, r.ops);
    const DensityMatrix rho0 = initial_state(config.params);
    if (config.propagation.method == PropagationMethod::eigen_exponential) {
        r.traj = propagate_closed(rho0, r.eig, config.propagation, rec);
    } else {
        r.traj = propagate_open(rho0, r.hamiltonian, standard_dissipators(config.params, r.ops), config.propagation,
                                r.eig, rec);
    }
    r.propagate_seconds = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    for (auto [j, k] : config.pairs.list) {
        if (k >= r.eig.dimension()) throw IndexOutOfRange("pair index beyond the spectrum");
    }
    r.pairs = config.pairs.automatic ? default_pairs(r.traj, r.eig, r.ops, config.pairs.cap) : config.pairs.list;
    r.tracks = coherence_tracks(r.traj, r.eig, r.ops, r.pairs);
    r.sync = pearson_sync(r.traj.times, r.traj.series("X1"), r.traj.series("X2"),
                          config.sync.resolved_window(config.params), "X1", "X2");
    r.onset = sync_onset_time(r.sync, config.sync.onset_threshold, config.sync.onset_hold);
    const double t_end = r.traj.times.back();
    for (double ts : config.spectra.times) {
        const double te = std::min(ts + config.spectra.window, t_end);
        if (te - ts < static_cast<double>(kMinFtSamples - 1) * config.propagation.dt_out) continue;
        r.spectra.push_back({ts, real_ft(r.traj.times, r.traj.series("X1"), ts, te),
                             real_ft(r.traj.times, r.traj.series("X2"), ts, te)});
    }
    r.analysis_seconds = detail::seconds_since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// Eigenmodes
// ---------------------------------------------------------------------------

inline EigenmodeReport scenario_eigenmodes(const DimerParams& base, const EigenmodeSettings& s) {
    DimerParams p = base;
    p.m_levels = s.m_eig;
    const OperatorSet ops = build_operators(p);
    const Operator h = build_hamiltonian(p, ops);
    const EigenSystem eig = diagonalise(h);
    const Superoperator l = build_superoperator(h, standard_dissipators(p, ops), p.m_levels, s.max_dim);
    EigenmodeOptions opt;
    opt.top_k = s.top_k;
    return eigenmode_analysis(l, eig, opt);
}

inline json eigenmodes_to_json(const EigenmodeReport& rep) {
    json modes = json::array();
    for (const auto& m : rep.modes) {
        modes.push_back({{"re_ps", m.eigenvalue.real()},
                         {"im_ps", m.eigenvalue.imag()},
                         {"im_cm1", m.frequency_cm},
                         {"oscillatory", m.oscillatory},
                         {"dominant", {{"pair", {m.dom_j, m.dom_k}}, {"overlap", m.overlap}}},
                         {"residual", m.residual}});
    }
    json all = json::array();
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        const cplx l = rep.eigenvalues(i);
        all.push_back({{"re_ps", l.real()}, {"im_ps", l.imag()}, {"im_cm1", units::angular_to_wavenumber(l.imag())}});
    }
    json out{{"m_eig", rep.m_eig},
             {"max_real_part", rep.max_real_part},
             {"near_zero_count", rep.near_zero_count},
             {"modes", modes}};
    if (const auto* s = rep.slowest_oscillatory()) {
        out["slowest_oscillatory"] = {{"re_ps", s->eigenvalue.real()},
                                      {"im_cm1", s->frequency_cm},
                                      {"pair", {s->dom_j, s->dom_k}},
                                      {"overlap", s->overlap}};
    }
    out["eigenvalues"] = all;
    return out;
}

// ---------------------------------------------------------------------------
// Matrix-element table
// ---------------------------------------------------------------------------

struct Table2Reference {
    Pair pair;
    double omega, x1, x2, sigma_x, p00;
};

inline const std::vector<Table2Reference>& table2_reference() {
    static const std::vector<Table2Reference> ref{
        {{0, 2}, 1111.0, 0.707, 0.707, 0.000, 0.161},   {{0, 3}, 1125.0, -0.637, 0.637, 0.385, -0.144},
        {{1, 4}, 1102.6, 0.767, -0.767, 0.340, -0.131}, {{1, 5}, 1111.0, 0.707, 0.707, 0.000, 0.133},
        {{3, 7}, 1111.0, 0.707, 0.707, 0.000, 0.032},   {{3, 8}, 1119.2, -0.935, 0.935, 0.384, 0.026},
        {{1, 3}, 81.0, -0.174, 0.174, 0.196, -0.351},
    };
    return ref;
}

struct Table2Cell {
    std::string quantity;
    double computed = 0.0;
    std::optional<double> reference;
    double tolerance = 0.0;
    bool pass = true;
};

struct Table2Column {
    Pair pair;
    std::vector<Table2Cell> cells;
    bool same_sign = true;                  // sign of X1 * X2
    std::optional<bool> reference_same_sign;
    bool sign_pass = true;
};

struct Table2Report {
    bool compared = false;
    std::vector<Table2Column> columns;
    std::size_t cells_total = 0;
    std::size_t cells_passed = 0;
    bool all_pass() const {
        return cells_passed == cells_total &&
               std::all_of(columns.begin(), columns.end(), [](const auto& c) { return c.sign_pass; });
    }
};

inline bool is_reference_params(const DimerParams& p) {
    DimerParams ref;
    ref.m_levels = p.m_levels;
    return p == ref;
}

/// Seven-pair matrix-element table. Pairs default to the reference indices;
/// magnitudes are compared against the reference only for the reference parameters.
inline Table2Report table2(const ScenarioConfig& config) {
    config.validate();
    const OperatorSet ops = build_operators(config.params, config.max_vib_dim);
    const EigenSystem eig = diagonalise(build_hamiltonian(config.params, ops));
    std::vector<Pair> pairs;
    if (!config.pairs.automatic && !config.pairs.list.empty()) {
        pairs = config.pairs.list;
    } else {
        for (const auto& r : table2_reference()) pairs.push_back(r.pair);
    }
    const auto rows = matrix_element_table(eig, ops, pairs);
    Table2Report rep;
    rep.compared = is_reference_params(config.params);
    for (const auto& row : rows) {
        Table2Column col;
        col.pair = {row.j, row.k};
        const Table2Reference* ref = nullptr;
        if (rep.compared) {
            for (const auto& r : table2_reference()) {
                if (r.pair == col.pair) ref = &r;
            }
        }
        auto cell = [&](const char* name, double v, std::optional<double> refv, double tol) {
            Table2Cell c{name, v, refv, tol, true};
            if (refv) c.pass = std::abs(v - *refv) <= tol + 1e-12;
            col.cells.push_back(c);
            ++rep.cells_total;
            if (c.pass) ++rep.cells_passed;
        };
        auto mag = [&](double v) -> std::optional<double> { return ref ? std::optional<double>(std::abs(v)) : std::nullopt; };
        cell("Omega_kj", row.omega_kj, ref ? std::optional<double>(ref->omega) : std::nullopt, 0.5);
        cell("|X1_kj|", std::abs(row.x1), ref ? mag(ref->x1) : std::nullopt, 0.005);
        cell("|X2_kj|", std::abs(row.x2), ref ? mag(ref->x2) : std::nullopt, 0.005);
        cell("|sigmax_kj|", std::abs(row.sigma_x), ref ? mag(ref->sigma_x) : std::nullopt, 0.005);
        cell("|P00_kj|", std::abs(row.p00), ref ? mag(ref->p00) : std::nullopt, 0.005);
        col.same_sign = (row.x1 * std::conj(row.x2)).real() >= 0.0;
        if (ref) {
            col.reference_same_sign = ref->x1 * ref->x2 >= 0.0;
            col.sign_pass = col.same_sign == *col.reference_same_sign;
        }
        rep.columns.push_back(std::move(col));
    }
    return rep;
}

inline std::string format_table2(const Table2Report& rep) {
    std::ostringstream os;
    os << "pair      quantity        computed   reference   tol      status\n";
    for (const auto& col : rep.columns) {
        const std::string pair = "(" + std::to_string(col.pair.first) + "," + std::to_string(col.pair.second) + ")";
        for (const auto& c : col.cells) {
            char line[160];
            const std::string refs = c.reference ? detail::fmt("%10.3f", *c.reference) : std::string(10, ' ');
            std::snprintf(line, sizeof line, "%-9s %-14s %10.3f  %s  %6.3f   %s\n", pair.c_str(), c.quantity.c_str(),
                          c.computed, refs.c_str(), c.tolerance, c.reference ? (c.pass ? "pass" : "FAIL") : "-");
            os << line;
        }
        char line[160];
        std::snprintf(line, sizeof line, "%-9s %-14s %10s  %10s  %6s   %s\n", pair.c_str(), "X1 vs X2", col.same_sign ? "equal" : "opposite",
                      col.reference_same_sign ? (*col.reference_same_sign ? "equal" : "opposite") : "",
                      "", col.reference_same_sign ? (col.sign_pass ? "pass" : "FAIL") : "-");
        os << line;
    }
    if (rep.compared) {
        os << "cells passed: " << rep.cells_passed << "/" << rep.cells_total
           << (rep.all_pass() ? "  (all pass)" : "  (regression)") << "\n";
    } else {
        os << "parameters differ from the reference set; no comparison made\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Artefact writing
// ---------------------------------------------------------------------------

struct RunOptions {
    bool plots = false;
    bool drop_smallest_two = false;  // omit the two weakest coherences from plots
    std::ostream* log = nullptr;
};

namespace detail {

/// Tracks files created by a run so a failure can remove them.
class OutputGuard {
public:
    explicit OutputGuard(std::filesystem::path dir) : dir_(std::move(dir)) {
        created_dir_ = !std::filesystem::exists(dir_);
        std::filesystem::create_directories(dir_);
    }
    ~OutputGuard() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& f : files_) std::filesystem::remove(dir_ / f, ec);
        if (created_dir_ && std::filesystem::is_empty(dir_, ec)) std::filesystem::remove(dir_, ec);
    }

    std::ofstream open(const std::string& name) {
        files_.push_back(name);
        std::ofstream out(dir_ / name);
        if (!out) throw Error("cannot write '" + (dir_ / name).string() + "'");
        out.precision(10);
        return out;
    }

    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }
    void commit() { committed_ = true; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
    bool created_dir_ = false;
    bool committed_ = false;
};

inline std::string spectrum_name(double t) { return "spectrum_" + fmt("%.2f", t) + ".csv"; }

inline json manifest_head(const ScenarioConfig& config) {
    return {{"tool", "vibronic-sync"},
            {"version", kToolVersion},
            {"scenario", config.name},
            {"config", to_json(config)},
            {"basis_ordering", kBasisOrdering},
            {"units", "energies cm^-1, time ps, rates ps^-1, hbar = 1"}};
}

/// Hash every written file into the manifest, write it, and keep the outputs.
inline void finish_manifest(OutputGuard& guard, json& manifest) {
    json files = json::array();
    for (const auto& f : guard.files()) {
        files.push_back({{"name", f},
                         {"sha256", sha256_file(guard.dir() / f)},
                         {"bytes", std::filesystem::file_size(guard.dir() / f)}});
    }
    manifest["files"] = files;
    {
        auto out = guard.open("manifest.json");
        out << manifest.dump(2) << "\n";
    }
    guard.commit();
}

}  // namespace detail

inline void write_trajectory_csv(std::ostream& out, const ScenarioResult& r) {
    out << "t_ps,X1,X2,popE1,popE2";
    for (const auto& tr : r.tracks) {
        out << ",coh_" << tr.label() << "_re,coh_" << tr.label() << "_im,coh_" << tr.label() << "_abs";
    }
    out << "\n";
    const auto& x1 = r.traj.series("X1");
    const auto& x2 = r.traj.series("X2");
    const auto& p1 = r.traj.series("popE1");
    const auto& p2 = r.traj.series("popE2");
    for (std::size_t i = 0; i < r.traj.times.size(); ++i) {
        out << detail::fmt("%.6f", r.traj.times[i]) << ',' << detail::num(x1[i]) << ',' << detail::num(x2[i]) << ','
            << detail::num(p1[i]) << ',' << detail::num(p2[i]);
        for (const auto& tr : r.tracks) {
            out << ',' << detail::num(tr.rho[i].real()) << ',' << detail::num(tr.rho[i].imag()) << ','
                << detail::num(std::abs(tr.rho[i]));
        }
        out << "\n";
    }
}

inline void write_sync_csv(std::ostream& out, const SyncSeries& s) {
    out << "t_ps,C\n";
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        out << detail::fmt("%.6f", s.times[i]) << ',' << detail::num(s.values[i]) << "\n";
    }
}

inline void write_spectrum_csv(std::ostream& out, const SpectrumSnapshot& s) {
    out << "freq_cm1,re_ft_X1,re_ft_X2\n";
    for (std::size_t i = 0; i < s.x1.frequencies.size(); ++i) {
        out << detail::fmt("%.4f", s.x1.frequencies[i]) << ',' << detail::num(s.x1.values[i].real()) << ','
            << detail::num(s.x2.values[i].real()) << "\n";
    }
}

struct CoherenceSummary {
    Pair pair;
    double omega_kj = 0.0;
    double weight_x1 = 0.0, weight_x2 = 0.0;
    double late_envelope = 0.0;  // mean envelope over the second half of the run
    double lifetime = 0.0;       // ps, e-folding of the envelope
    double peak_abs = 0.0;
};

inline std::vector<CoherenceSummary> summarise_coherences(const ScenarioResult& r) {
    std::vector<CoherenceSummary> out;
    const double t_end = r.traj.times.back();
    for (const auto& tr : r.tracks) {
        CoherenceSummary s;
        s.pair = {tr.j, tr.k};
        s.omega_kj = tr.omega_kj;
        s.weight_x1 = std::abs(tr.weight_x1);
        s.weight_x2 = std::abs(tr.weight_x2);
        for (const auto& v : tr.rho) s.peak_abs = std::max(s.peak_abs, std::abs(v));
        s.late_envelope = std::numeric_limits<double>::quiet_NaN();
        s.lifetime = std::numeric_limits<double>::quiet_NaN();
        if (tr.omega_kj > 0.0 && units::period_ps(tr.omega_kj) < 0.25 * t_end) {
            const Envelope env = coherence_envelope(r.traj.times, tr);
            s.late_envelope = mean_envelope(env, 0.5 * t_end, t_end);
            s.lifetime = coherence_lifetime(env, 0.5 * t_end, t_end);
        }
        out.push_back(s);
    }
    return out;
}

inline json summary_json(const ScenarioResult& r) {
    json s;
    double cmin = 1.0, tmin = 0.0;
    for (std::size_t i = 0; i < r.sync.values.size(); ++i) {
        if (r.sync.values[i] < cmin) {
            cmin = r.sync.values[i];
            tmin = r.sync.times[i];
        }
    }
    s["et_indicator"] = {{"A", r.indicator.amplitude},
                         {"detuning_cm1", r.indicator.detuning},
                         {"sin_2theta", r.indicator.sin_two_theta}};
    if (r.indicator.warning) s["et_indicator"]["warning"] = *r.indicator.warning;
    s["mixing_angle"] = mixing_angle(r.config.params);
    s["exciton_splitting_cm1"] = exciton_splitting(r.config.params);
    s["sync"] = {{"window_ps", r.sync.window},
                 {"window_samples", r.sync.window_samples},
                 {"min_C", cmin},
                 {"t_min_C", tmin},
                 {"onset_ps", r.onset ? json(*r.onset) : json(nullptr)},
                 {"onset_threshold", r.config.sync.onset_threshold},
                 {"onset_hold_ps", r.config.sync.onset_hold},
                 {"degenerate_windows", r.sync.degenerate_windows}};
    json pairs = json::array();
    for (const auto& p : r.pairs) pairs.push_back({p.first, p.second});
    s["pairs"] = pairs;
    const auto& pe = r.traj.series("popE1");
    s["max_popE1"] = *std::max_element(pe.begin(), pe.end());
    return s;
}

inline json audit_json(const InvariantAudit& a) {
    return {{"max_trace_error", a.max_trace_error},
            {"max_hermiticity_error", a.max_hermiticity_error},
            {"min_eigenvalue", a.min_eigenvalue},
            {"points_checked", a.points_checked},
            {"states_checked", a.states_checked},
            {"passed", a.passed()}};
}

/// Full pipeline with artefacts in out_dir. Returns the manifest.
inline json run(const ScenarioConfig& config, const std::filesystem::path& out_dir, const RunOptions& opt = {},
               ScenarioResult* result = nullptr) {
    config.validate();
    const auto wall0 = std::chrono::steady_clock::now();
    detail::OutputGuard guard(out_dir);
    auto log = [&](const std::string& msg) {
        if (opt.log) *opt.log << msg << std::endl;
    };

    log("simulating '" + config.name + "' to t=" + detail::fmt("%.3f", config.propagation.t_end) + " ps (M=" +
        std::to_string(config.params.m_levels) + ", D=" + std::to_string(config.params.dimension()) + ")");
    const ScenarioResult r = simulate(config);
    if (!r.traj.audit.passed()) {
        throw InvariantViolation("state invariants failed (trace " + detail::num(r.traj.audit.max_trace_error) +
                                 ", hermiticity " + detail::num(r.traj.audit.max_hermiticity_error) + ", min eig " +
                                 detail::num(r.traj.audit.min_eigenvalue) + ")");
    }
    json timings{{"build_s", r.build_seconds}, {"propagate_s", r.propagate_seconds}, {"analysis_s", r.analysis_seconds}};

    if (config.outputs.trajectory) {
        auto out = guard.open("trajectory.csv");
        write_trajectory_csv(out, r);
    }
    if (config.outputs.sync) {
        auto out = guard.open("sync.csv");
        write_sync_csv(out, r.sync);
    }
    json spectra_info = json::array();
    if (config.outputs.spectra) {
        for (const auto& s : r.spectra) {
            auto out = guard.open(detail::spectrum_name(s.time));
            write_spectrum_csv(out, s);
            spectra_info.push_back({{"t_ps", s.time}, {"window", {s.x1.t_start, s.x1.t_end}}, {"samples", s.x1.samples}});
        }
    }
    if (config.outputs.coherences) {
        auto out = guard.open("coherences.csv");
        out << "j,k,omega_kj_cm1,abs_X1_kj,abs_X2_kj,peak_abs_rho,late_envelope,lifetime_ps\n";
        for (const auto& s : summarise_coherences(r)) {
            out << s.pair.first << ',' << s.pair.second << ',' << detail::num(s.omega_kj) << ','
                << detail::num(s.weight_x1) << ',' << detail::num(s.weight_x2) << ',' << detail::num(s.peak_abs) << ','
                << detail::num(s.late_envelope) << ',' << detail::num(s.lifetime) << "\n";
        }
    }
    if (config.outputs.eigenmodes) {
        const auto t0 = std::chrono::steady_clock::now();
        log("eigenmode analysis at M_eig=" + std::to_string(config.eigenmodes.m_eig));
        const EigenmodeReport rep = scenario_eigenmodes(config.params, config.eigenmodes);
        auto out = guard.open("eigenmodes.json");
        out << eigenmodes_to_json(rep).dump(2) << "\n";
        timings["eigenmodes_s"] = detail::seconds_since(t0);
    }
    if (config.outputs.table2) {
        auto out = guard.open("table2.txt");
        out << format_table2(table2(config));
    }
    if (opt.plots) {
        const auto& t = r.traj.times;
        {
            auto out = guard.open("positions.svg");
            out << svg::line_plot("Mode displacements", "t (ps)", "<X_i>",
                                  {{"X1", t, r.traj.series("X1")}, {"X2", t, r.traj.series("X2")}});
        }
        {
            auto out = guard.open("sync.svg");
            out << svg::line_plot("Synchronisation", "t (ps)", "C", {{"C", r.sync.times, r.sync.values}}, -1.05, 1.05);
        }
        {
            auto out = guard.open("populations.svg");
            out << svg::line_plot("Exciton populations", "t (ps)", "population",
                                  {{"popE1", t, r.traj.series("popE1")}, {"popE2", t, r.traj.series("popE2")}});
        }
        std::vector<svg::Series> coh;
        std::vector<const CoherenceTrack*> order;
        for (const auto& tr : r.tracks) order.push_back(&tr);
        if (opt.drop_smallest_two && order.size() > 2) order.resize(order.size() - 2);
        for (const auto* tr : order) coh.push_back({"(" + std::to_string(tr->j) + "," + std::to_string(tr->k) + ")", t,
                                                    tr->weighted_magnitude(1)});
        if (!coh.empty()) {
            auto out = guard.open("coherences.svg");
            out << svg::line_plot("Weighted coherence magnitudes", "t (ps)", "|rho_jk| |X1_kj|", coh);
        }
        for (const auto& s : r.spectra) {
            std::vector<double> f, a, b;
            for (std::size_t i = 0; i < s.x1.frequencies.size(); ++i) {
                if (s.x1.frequencies[i] < 900.0 || s.x1.frequencies[i] > 1300.0) continue;
                f.push_back(s.x1.frequencies[i]);
                a.push_back(s.x1.values[i].real());
                b.push_back(s.x2.values[i].real());
            }
            auto name = detail::spectrum_name(s.time);
            name.replace(name.size() - 4, 4, ".svg");
            auto out = guard.open(name);
            out << svg::line_plot("Re FT at " + detail::fmt("%.2f", s.time) + " ps", "frequency (cm^-1)", "Re F",
                                  {{"X1", f, a}, {"X2", f, b}});
        }
    }

    json manifest = detail::manifest_head(config);
    manifest["audit"] = audit_json(r.traj.audit);
    manifest["integrator"] = {{"accepted_steps", r.traj.stats.accepted},
                              {"rejected_steps", r.traj.stats.rejected},
                              {"rhs_evaluations", r.traj.stats.rhs_evals}};
    manifest["summary"] = summary_json(r);
    manifest["spectra"] = spectra_info;
    timings["total_s"] = detail::seconds_since(wall0);
    manifest["timings"] = timings;
    detail::finish_manifest(guard, manifest);
    if (result) *result = r;
    return manifest;
}

/// Eigenmode analysis only; writes eigenmodes.json and manifest.json.
inline json run_eigenmodes(const ScenarioConfig& config, const std::filesystem::path& out_dir,
                           EigenmodeReport* report = nullptr) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    detail::OutputGuard guard(out_dir);
    const EigenmodeReport rep = scenario_eigenmodes(config.params, config.eigenmodes);
    {
        auto out = guard.open("eigenmodes.json");
        out << eigenmodes_to_json(rep).dump(2) << "\n";
    }
    json manifest = detail::manifest_head(config);
    manifest["timings"] = {{"eigenmodes_s", detail::seconds_since(t0)}};
    detail::finish_manifest(guard, manifest);
    if (report) *report = rep;
    return manifest;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string value;
    double a = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> onset;
    double max_pop_e1 = std::numeric_limits<double>::quiet_NaN();
    double slowest_lifetime = std::numeric_limits<double>::quiet_NaN();
    double peak_rho13 = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

inline void set_param(DimerParams& p, const std::string& axis, double v) {
    if (axis == "delta_e") p.delta_e = v;
    else if (axis == "v") p.v = v;
    else if (axis == "omega") p.omega1 = p.omega2 = v;
    else if (axis == "omega1") p.omega1 = v;
    else if (axis == "omega2") p.omega2 = v;
    else if (axis == "g") p.g1 = p.g2 = v;
    else if (axis == "g1") p.g1 = v;
    else if (axis == "g2") p.g2 = v;
    else if (axis == "kbt") p.kbt = v;
    else if (axis == "gamma_th") p.gamma_th = v;
    else if (axis == "gamma_deph") p.gamma_deph = v;
    else if (axis == "m_levels") p.m_levels = static_cast<int>(std::llround(v));
    else throw ConfigError("unknown sweep axis '" + axis + "'");
}

inline bool is_sweep_axis(const std::string& axis) {
    static const std::vector<std::string> axes{"preset", "delta_e", "v", "omega", "omega1", "omega2", "g", "g1",
                                               "g2", "kbt", "gamma_th", "gamma_deph", "m_levels"};
    return std::find(axes.begin(), axes.end(), axis) != axes.end();
}

inline SweepRow sweep_point(const ScenarioConfig& base, const std::string& axis, const std::string& value) {
    SweepRow row;
    row.value = value;
    try {
        ScenarioConfig c = base;
        if (axis == "preset") {
            const ScenarioConfig p = preset(value);
            c.name = p.name;
            c.params = p.params;
        } else {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw ConfigError("sweep value '" + value + "' is not a number");
            set_param(c.params, axis, v);
            c.name = base.name + ":" + axis + "=" + value;
        }
        const ScenarioResult r = simulate(c);
        row.a = r.indicator.amplitude;
        row.onset = r.onset;
        const auto& pe = r.traj.series("popE1");
        row.max_pop_e1 = *std::max_element(pe.begin(), pe.end());
        double best = std::numeric_limits<double>::quiet_NaN();
        for (const auto& s : summarise_coherences(r)) {
            if (std::isfinite(s.lifetime) && !(s.lifetime <= best)) best = s.lifetime;
        }
        row.slowest_lifetime = best;
        if (r.traj.block_size > 3) {
            double peak = 0.0;
            for (std::size_t i = 0; i < r.traj.times.size(); ++i) peak = std::max(peak, std::abs(r.traj.element(i, 1, 3)));
            row.peak_rho13 = peak;
        }
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

/// Independent runs over `values`, executed by up to `threads` workers.
inline std::vector<SweepRow> sweep(const ScenarioConfig& base, const std::string& axis,
                                   const std::vector<std::string>& values, unsigned threads = 1) {
    if (!is_sweep_axis(axis)) throw ConfigError("unknown sweep axis '" + axis + "'");
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::vector<SweepRow> rows(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) rows[i] = sweep_point(base, axis, values[i]);
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(values.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::string& axis, const std::vector<SweepRow>& rows) {
    out << axis << ",A,sync_onset_ps,max_popE1,slowest_lifetime_ps,peak_abs_rho_1_3,error\n";
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << r.value << ',' << detail::num(r.a) << ',' << (r.onset ? detail::num(*r.onset) : std::string("none"))
            << ',' << detail::num(r.max_pop_e1) << ',' << detail::num(r.slowest_lifetime) << ','
            << detail::num(r.peak_rho13) << ',' << err << "\n";
    }
}

inline json run_sweep(const ScenarioConfig& base, const std::string& axis, const std::vector<std::string>& values,
                      unsigned threads, const std::filesystem::path& out_dir) {
    base.validate();
    const auto t0 = std::chrono::steady_clock::now();
    detail::OutputGuard guard(out_dir);
    const auto rows = sweep(base, axis, values, threads);
    {
        auto out = guard.open("sweep.csv");
        write_sweep_csv(out, axis, rows);
    }
    json manifest = detail::manifest_head(base);
    manifest["sweep"] = {{"axis", axis}, {"values", values}, {"threads", threads}};
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
    manifest["sweep"]["failed_points"] = failed;
    manifest["timings"] = {{"total_s", detail::seconds_since(t0)}};
    detail::finish_manifest(guard, manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Window calibration
// ---------------------------------------------------------------------------

struct CalibrationRow {
    double phase = 0.0;
    double c_period = 0.0;     // window = one period
    double c_inverse_a = 0.0;  // window = 1/a
};

/// C(phi) for two sinusoids at omega1, for both readings of the window length.
inline std::vector<CalibrationRow> sync_calibration(double omega_cm, std::size_t n_phases = 73) {
    if (n_phases < 2) throw ConfigError("calibration needs at least two phases");
    const double a = units::to_angular(omega_cm);
    std::vector<double> phases(n_phases);
    for (std::size_t i = 0; i < n_phases; ++i) phases[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_phases - 1);
    const auto full = sync_phase_characterisation(a, units::period_ps(omega_cm), phases);
    const auto inv = sync_phase_characterisation(a, 1.0 / a, phases);
    std::vector<CalibrationRow> rows;
    for (std::size_t i = 0; i < n_phases; ++i) rows.push_back({phases[i], full[i].second, inv[i].second});
    return rows;
}

inline json run_calibration(const ScenarioConfig& config, std::size_t n_phases, const std::filesystem::path& out_dir,
                            bool plots = false) {
    config.validate();
    detail::OutputGuard guard(out_dir);
    const auto rows = sync_calibration(config.params.omega1, n_phases);
    {
        auto out = guard.open("calibration.csv");
        out << "phase_rad,C_window_period,C_window_inverse_a\n";
        for (const auto& r : rows) {
            out << detail::fmt("%.6f", r.phase) << ',' << detail::num(r.c_period) << ',' << detail::num(r.c_inverse_a)
                << "\n";
        }
    }
    if (plots) {
        std::vector<double> x, y1, y2;
        for (const auto& r : rows) {
            x.push_back(r.phase);
            y1.push_back(r.c_period);
            y2.push_back(r.c_inverse_a);
        }
        auto out = guard.open("calibration.svg");
        out << svg::line_plot("Synchronisation of two phase-shifted sinusoids", "phase (rad)", "C",
                              {{"window = period", x, y1}, {"window = 1/a", x, y2}}, -1.05, 1.05);
    }
    json manifest = detail::manifest_head(config);
    manifest["calibration"] = {{"omega_cm1", config.params.omega1},
                               {"window_period_ps", units::period_ps(config.params.omega1)},
                               {"window_inverse_a_ps", 1.0 / units::to_angular(config.params.omega1)}};
    detail::finish_manifest(guard, manifest);
    return manifest;
}

}  // namespace vibsync
