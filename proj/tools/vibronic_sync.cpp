// vibronic-sync: command-line front end for the vibsync engine.

#include "vibsync/vibsync.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vibsync;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitRegression = 3;

struct Common {
    std::string config_file;
    std::string preset_name;
    std::string out_dir;
    std::optional<double> t_end;
    std::optional<std::string> window;  // number or "auto"
    std::optional<int> m_levels;
    unsigned threads = 1;
    bool plots = false;
    bool drop_two = false;
    std::optional<long> max_dim;
    bool quiet = false;
};

void add_common(CLI::App* sub, Common& c, bool with_out = true) {
    sub->add_option("--config", c.config_file, "JSON scenario file")->check(CLI::ExistingFile);
    sub->add_option("--preset", c.preset_name, "named preset (see `presets`)");
    if (with_out) sub->add_option("--out", c.out_dir, "output directory");
    sub->add_option("--t-end", c.t_end, "propagation horizon in ps");
    sub->add_option("--window", c.window, "sync window in ps, or 'auto' for one vibrational period");
    sub->add_option("--m-levels", c.m_levels, "vibrational truncation M (levels n = 0..M)");
    sub->add_option("--threads", c.threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--max-dim", c.max_dim, "cap on the Hilbert dimension for dense superoperators");
    sub->add_flag("--plots", c.plots, "also write SVG plots");
    sub->add_flag("--drop-two", c.drop_two, "omit the two weakest coherences from the coherence plot");
    sub->add_flag("-q,--quiet", c.quiet, "suppress progress messages");
}

ScenarioConfig resolve(const Common& c) {
    if (!c.config_file.empty() && !c.preset_name.empty()) {
        throw ConfigError("--config and --preset are mutually exclusive (put \"preset\" inside the file instead)");
    }
    ScenarioConfig cfg = c.config_file.empty() ? preset(c.preset_name.empty() ? "pe545" : c.preset_name)
                                               : load_config(c.config_file);
    if (c.t_end) cfg.propagation.t_end = *c.t_end;
    if (c.window) {
        if (*c.window == "auto") {
            cfg.sync.window.reset();
        } else {
            try {
                std::size_t used = 0;
                cfg.sync.window = std::stod(*c.window, &used);
                if (used != c.window->size()) throw std::invalid_argument("trailing");
            } catch (const std::logic_error&) {
                throw ConfigError("--window expects a number of ps or 'auto', got '" + *c.window + "'");
            }
        }
    }
    if (c.m_levels) cfg.params.m_levels = *c.m_levels;
    if (c.max_dim) cfg.eigenmodes.max_dim = *c.max_dim;
    return cfg;
}

fs::path out_path(const Common& c, const ScenarioConfig& cfg, const std::string& sub) {
    if (!c.out_dir.empty()) return c.out_dir;
    return fs::path("runs") / (cfg.name + "-" + sub);
}

std::string f3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

void print_summary(const json& manifest) {
    const auto& s = manifest["summary"];
    std::cout << "scenario      " << manifest["scenario"].get<std::string>() << "\n";
    std::cout << "A             " << f3(s["et_indicator"]["A"].get<double>()) << "\n";
    if (s["et_indicator"].contains("warning")) {
        std::cout << "note          " << s["et_indicator"]["warning"].get<std::string>() << "\n";
    }
    std::cout << "sync window   " << f3(s["sync"]["window_ps"].get<double>()) << " ps\n";
    std::cout << "min C         " << f3(s["sync"]["min_C"].get<double>()) << " at " << f3(s["sync"]["t_min_C"].get<double>())
              << " ps\n";
    if (s["sync"]["onset_ps"].is_null()) {
        std::cout << "sync onset    none within the run\n";
    } else {
        std::cout << "sync onset    " << f3(s["sync"]["onset_ps"].get<double>()) << " ps\n";
    }
    std::cout << "max popE1     " << f3(s["max_popE1"].get<double>()) << "\n";
    std::cout << "invariants    " << (manifest["audit"]["passed"].get<bool>() ? "ok" : "FAILED") << "\n";
    std::cout << "elapsed       " << f3(manifest["timings"]["total_s"].get<double>()) << " s\n";
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exciton-vibration dimer dynamics and mode synchronisation"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    Common c;
    RunOptions ropt;

    auto* simulate_cmd = app.add_subcommand("simulate", "full run: trajectory, sync, spectra, coherences, table");
    add_common(simulate_cmd, c);
    bool with_eigenmodes = false;
    simulate_cmd->add_flag("--eigenmodes", with_eigenmodes, "include the Liouvillian eigenmode analysis");

    auto* sync_cmd = app.add_subcommand("sync", "windowed Pearson synchronisation of the two mode displacements");
    add_common(sync_cmd, c);
    double threshold = 0.95, hold = 0.2;
    sync_cmd->add_option("--threshold", threshold, "onset threshold C0");
    sync_cmd->add_option("--hold", hold, "onset hold time in ps");

    auto* spectrum_cmd = app.add_subcommand("spectrum", "Fourier snapshots of the mode displacements");
    add_common(spectrum_cmd, c);
    std::string spec_times;
    double spec_window = 0.0;
    spectrum_cmd->add_option("--times", spec_times, "comma-separated snapshot start times in ps");
    spectrum_cmd->add_option("--ft-window", spec_window, "length of each FT window in ps");

    auto* coh_cmd = app.add_subcommand("coherences", "eigenbasis coherence tracking (default horizon 5 ps)");
    add_common(coh_cmd, c);
    std::string pair_list;
    coh_cmd->add_option("--pairs", pair_list, "pairs as j:k,j:k,... (default: automatic selection)");

    auto* eig_cmd = app.add_subcommand("eigenmodes", "Liouvillian spectrum and slowest eigenmodes");
    add_common(eig_cmd, c);
    std::optional<int> m_eig;
    std::optional<std::size_t> top_k;
    eig_cmd->add_option("--m-eig", m_eig, "truncation used for the superoperator");
    eig_cmd->add_option("--top-k", top_k, "number of slow modes to resolve");

    auto* t2_cmd = app.add_subcommand("table2", "matrix elements for the seven reference coherences");
    add_common(t2_cmd, c);
    bool strict = false;
    t2_cmd->add_flag("--strict", strict, "exit with status 3 if any reference cell fails");

    auto* sweep_cmd = app.add_subcommand("sweep", "independent runs over one parameter axis");
    add_common(sweep_cmd, c);
    std::string axis = "preset", values;
    sweep_cmd->add_option("--axis", axis, "parameter name, or 'preset'");
    sweep_cmd->add_option("--values", values, "comma-separated values")->required();

    auto* cal_cmd = app.add_subcommand("calibrate-sync", "C versus phase shift for two sinusoids");
    add_common(cal_cmd, c);
    std::size_t n_phases = 73;
    cal_cmd->add_option("--phases", n_phases, "number of phase samples over [0, 2 pi]");

    auto* presets_cmd = app.add_subcommand("presets", "list presets, or print one as a config file");
    std::string show;
    presets_cmd->add_option("--show", show, "print the named preset as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        ropt.plots = c.plots;
        ropt.drop_smallest_two = c.drop_two;
        if (!c.quiet) ropt.log = &std::cerr;

        if (presets_cmd->parsed()) {
            if (!show.empty()) {
                std::cout << serialise(preset(show));
                return kExitOk;
            }
            for (const auto& n : preset_names()) {
                const ScenarioConfig p = preset(n);
                std::printf("%-14s A=%.3f  %s\n", n.c_str(), et_amplitude_indicator(p.params).amplitude,
                            preset_description(n).c_str());
            }
            return kExitOk;
        }

        ScenarioConfig cfg = resolve(c);

        if (simulate_cmd->parsed()) {
            cfg.outputs.eigenmodes = cfg.outputs.eigenmodes || with_eigenmodes;
            const fs::path out = out_path(c, cfg, "simulate");
            const json m = run(cfg, out, ropt);
            print_summary(m);
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
        if (sync_cmd->parsed()) {
            cfg.sync.onset_threshold = threshold;
            cfg.sync.onset_hold = hold;
            cfg.outputs = OutputSelection{};
            cfg.outputs.spectra = cfg.outputs.coherences = cfg.outputs.table2 = false;
            const fs::path out = out_path(c, cfg, "sync");
            print_summary(run(cfg, out, ropt));
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
        if (spectrum_cmd->parsed()) {
            if (!spec_times.empty()) {
                cfg.spectra.times.clear();
                for (const auto& s : split_list(spec_times)) cfg.spectra.times.push_back(std::stod(s));
            }
            if (spec_window > 0.0) cfg.spectra.window = spec_window;
            double need = 0.0;
            for (double t : cfg.spectra.times) need = std::max(need, t + cfg.spectra.window);
            if (!c.t_end && cfg.propagation.t_end < need) cfg.propagation.t_end = need;
            cfg.outputs = OutputSelection{};
            cfg.outputs.sync = cfg.outputs.coherences = cfg.outputs.table2 = false;
            const fs::path out = out_path(c, cfg, "spectrum");
            ScenarioResult r;
            run(cfg, out, ropt, &r);
            for (const auto& s : r.spectra) {
                const auto p1 = dominant_peak(s.x1, 500.0, 2000.0);
                const auto p2 = dominant_peak(s.x2, 500.0, 2000.0);
                std::printf("t=%.2f ps [%.2f, %.2f]  X1 peak %.1f cm^-1 (Re %+.3g)  X2 peak %.1f cm^-1 (Re %+.3g)\n",
                            s.time, s.x1.t_start, s.x1.t_end, p1.frequency, p1.value, p2.frequency, p2.value);
            }
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
        if (coh_cmd->parsed()) {
            if (!c.t_end) cfg.propagation.t_end = std::max(cfg.propagation.t_end, 5.0);
            if (!pair_list.empty()) {
                cfg.pairs.automatic = false;
                cfg.pairs.list.clear();
                for (const auto& s : split_list(pair_list)) {
                    const auto colon = s.find(':');
                    if (colon == std::string::npos) throw ConfigError("pair '" + s + "' must look like j:k");
                    const auto j = std::stoul(s.substr(0, colon)), k = std::stoul(s.substr(colon + 1));
                    if (j >= k) throw ConfigError("pair '" + s + "' needs j < k");
                    cfg.pairs.list.push_back({j, k});
                }
            }
            cfg.outputs = OutputSelection{};
            cfg.outputs.sync = cfg.outputs.spectra = cfg.outputs.table2 = false;
            const fs::path out = out_path(c, cfg, "coherences");
            print_summary(run(cfg, out, ropt));
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
        if (eig_cmd->parsed()) {
            if (m_eig) cfg.eigenmodes.m_eig = *m_eig;
            if (top_k) cfg.eigenmodes.top_k = *top_k;
            const fs::path out = out_path(c, cfg, "eigenmodes");
            EigenmodeReport rep;
            run_eigenmodes(cfg, out, &rep);
            std::printf("M_eig=%d  max Re(lambda)=%.3e  near-zero eigenvalues=%zu\n", rep.m_eig, rep.max_real_part,
                        rep.near_zero_count);
            for (const auto& m : rep.modes) {
                std::printf("  lambda = %+.4f %+.4fi ps^-1  (%8.2f cm^-1)  dominant (%zu,%zu) overlap %.3f%s\n",
                            m.eigenvalue.real(), m.eigenvalue.imag(), m.frequency_cm, m.dom_j, m.dom_k, m.overlap,
                            m.oscillatory ? "" : "  [non-oscillatory]");
            }
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
        if (t2_cmd->parsed()) {
            const Table2Report rep = table2(cfg);
            const std::string text = format_table2(rep);
            std::cout << text;
            if (!c.out_dir.empty()) {
                fs::create_directories(c.out_dir);
                std::ofstream(fs::path(c.out_dir) / "table2.txt") << text;
            }
            if (strict && rep.compared && !rep.all_pass()) return kExitRegression;
            return kExitOk;
        }
        if (sweep_cmd->parsed()) {
            const auto vals = split_list(values);
            const fs::path out = out_path(c, cfg, "sweep");
            const json m = run_sweep(cfg, axis, vals, c.threads, out);
            std::ifstream in(out / "sweep.csv");
            std::cout << in.rdbuf();
            std::cout << "outputs       " << out.string() << "\n";
            return m["sweep"]["failed_points"].get<std::size_t>() == vals.size() ? kExitNumerical : kExitOk;
        }
        if (cal_cmd->parsed()) {
            const fs::path out = out_path(c, cfg, "calibrate-sync");
            run_calibration(cfg, n_phases, out, c.plots);
            const auto rows = sync_calibration(cfg.params.omega1, 5);
            std::printf("phase    C(window=period)  C(window=1/a)\n");
            for (const auto& r : rows) std::printf("%5.3f    %+.4f           %+.4f\n", r.phase, r.c_period, r.c_inverse_a);
            std::cout << "outputs       " << out.string() << "\n";
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: malformed number (" << e.what() << ")\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
