// config.hpp - scenario configuration, JSON (de)serialisation and presets.
//
// Every object in the file is optional and falls back to the pe545 defaults
// (or to the preset named by the top-level "preset" key). Unknown keys are
// rejected. See docs/config.md for the schema.

#pragma once

#include "vibsync/dynamics.hpp"
#include "vibsync/error.hpp"
#include "vibsync/hilbert.hpp"
#include "vibsync/observables.hpp"
#include "vibsync/units.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace vibsync {

using json = nlohmann::ordered_json;

struct SyncSettings {
    std::optional<double> window;  // ps; empty selects one period of omega1
    double onset_threshold = 0.95;
    double onset_hold = 0.2;       // ps

    double resolved_window(const DimerParams& p) const { return window ? *window : units::period_ps(p.omega1); }
};

struct SpectraSettings {
    std::vector<double> times{0.15, 1.5};
    double window = 2.0;  // ps, each snapshot covers [t, t + window]
};

struct PairSettings {
    bool automatic = true;
    std::vector<Pair> list;
    std::size_t cap = 7;
};

struct RecordingSettings {
    std::size_t block_size = 24;
    std::size_t state_stride = 100;
};

struct EigenmodeSettings {
    int m_eig = 4;
    std::size_t top_k = 6;
    long max_dim = 60;
};

struct OutputSelection {
    bool trajectory = true;
    bool sync = true;
    bool spectra = true;
    bool coherences = true;
    bool eigenmodes = false;
    bool table2 = true;
};

struct ScenarioConfig {
    std::string name = "pe545";
    DimerParams params;
    PropagationConfig propagation;
    SyncSettings sync;
    SpectraSettings spectra;
    PairSettings pairs;
    RecordingSettings recording;
    EigenmodeSettings eigenmodes;
    std::size_t max_vib_dim = kDefaultMaxVibrationalDim;
    OutputSelection outputs;

    void validate() const {
        params.validate();
        propagation.validate();
        if (sync.window && !(*sync.window > 0.0)) throw ConfigError("sync.window must be positive");
        if (!(sync.onset_threshold > 0.0) || sync.onset_threshold > 1.0) {
            throw ConfigError("sync.onset_threshold must lie in (0, 1]");
        }
        if (!(sync.onset_hold >= 0.0)) throw ConfigError("sync.onset_hold must be non-negative");
        if (sync.resolved_window(params) < 3.0 * propagation.dt_out) {
            throw ConfigError("sync window must span at least 3 output steps");
        }
        if (!(spectra.window > 0.0)) throw ConfigError("spectra.window must be positive");
        for (double t : spectra.times) {
            if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("spectra times must be non-negative");
        }
        if (pairs.cap == 0) throw ConfigError("pair_cap must be >= 1");
        for (auto [j, k] : pairs.list) {
            if (j >= k) throw ConfigError("coherence pairs must satisfy j < k");
        }
        if (recording.block_size < 2) throw ConfigError("recording.block_size must be >= 2");
        if (eigenmodes.m_eig < 1) throw ConfigError("eigenmodes.m_eig must be >= 1");
        if (eigenmodes.max_dim < 2) throw ConfigError("eigenmodes.max_dim must be >= 2");
        const std::size_t vib = params.mode_levels() * params.mode_levels();
        if (vib > max_vib_dim) {
            throw DimensionOverflow("(M+1)^2 = " + std::to_string(vib) + " exceeds limits.max_vib_dim = " +
                                    std::to_string(max_vib_dim));
        }
        if (propagation.method == PropagationMethod::eigen_exponential &&
            (params.gamma_th != 0.0 || params.gamma_deph != 0.0)) {
            throw ConfigError("method eigen-exponential is exact only without dissipation; set both rates to 0");
        }
    }

    std::size_t tracked_block() const {
        std::size_t k = recording.block_size;
        for (auto [a, b] : pairs.list) k = std::max(k, b + 1);
        return std::min(k, params.dimension());
    }
};

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

inline std::vector<std::string> preset_names() { return {"pe545", "delocalised", "detuned", "swapped-rates"}; }

inline std::string preset_description(const std::string& name) {
    if (name == "pe545") return "PE545 central dimer parameters";
    if (name == "delocalised") return "sin(2 theta) = 0.5 with the pe545 detuning dE - omega held fixed";
    if (name == "detuned") return "pe545 with omega1 = omega2 = 1500 cm^-1";
    if (name == "swapped-rates") return "pe545 with gamma_th = 10 ps^-1 and gamma_deph = 1 ps^-1";
    throw UnknownPreset("unknown preset '" + name + "'");
}

inline ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    if (name == "pe545") return c;
    if (name == "detuned") {
        c.params.omega1 = c.params.omega2 = 1500.0;
        return c;
    }
    if (name == "delocalised") {
        // Keep the exciton splitting (hence its detuning from omega) and set 2V/splitting = 0.5.
        const double split = exciton_splitting(c.params);
        c.params.v = 0.25 * split;
        c.params.delta_e = split * std::sqrt(3.0) / 2.0;
        return c;
    }
    if (name == "swapped-rates") {
        c.params.gamma_th = 10.0;
        c.params.gamma_deph = 1.0;
        c.propagation.t_end = 5.0;
        return c;
    }
    throw UnknownPreset("unknown preset '" + name + "' (known: pe545, delocalised, detuned, swapped-rates)");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
    }
}

inline const char* method_name(PropagationMethod m) {
    return m == PropagationMethod::adaptive_rk ? "adaptive-rk" : "eigen-exponential";
}

}  // namespace detail

inline json params_to_json(const DimerParams& p) {
    return json{{"delta_e", p.delta_e}, {"v", p.v},         {"omega1", p.omega1},         {"omega2", p.omega2},
                {"g1", p.g1},           {"g2", p.g2},       {"kbt", p.kbt},               {"gamma_th", p.gamma_th},
                {"gamma_deph", p.gamma_deph}, {"m_levels", p.m_levels}};
}

inline json to_json(const ScenarioConfig& c) {
    json pairs;
    if (c.pairs.automatic) {
        pairs = "auto";
    } else {
        pairs = json::array();
        for (auto [j, k] : c.pairs.list) pairs.push_back({j, k});
    }
    json outputs = json::array();
    const auto& o = c.outputs;
    if (o.trajectory) outputs.push_back("trajectory");
    if (o.sync) outputs.push_back("sync");
    if (o.spectra) outputs.push_back("spectra");
    if (o.coherences) outputs.push_back("coherences");
    if (o.eigenmodes) outputs.push_back("eigenmodes");
    if (o.table2) outputs.push_back("table2");
    return json{
        {"name", c.name},
        {"params", params_to_json(c.params)},
        {"propagation",
         {{"t_end", c.propagation.t_end},
          {"dt_out", c.propagation.dt_out},
          {"rel_tol", c.propagation.rel_tol},
          {"abs_tol", c.propagation.abs_tol},
          {"method", detail::method_name(c.propagation.method)}}},
        {"sync",
         {{"window", c.sync.window ? json(*c.sync.window) : json("auto")},
          {"onset_threshold", c.sync.onset_threshold},
          {"onset_hold", c.sync.onset_hold}}},
        {"spectra", {{"times", c.spectra.times}, {"window", c.spectra.window}}},
        {"pairs", pairs},
        {"pair_cap", c.pairs.cap},
        {"recording", {{"block_size", c.recording.block_size}, {"state_stride", c.recording.state_stride}}},
        {"eigenmodes",
         {{"m_eig", c.eigenmodes.m_eig}, {"top_k", c.eigenmodes.top_k}, {"max_dim", c.eigenmodes.max_dim}}},
        {"limits", {{"max_vib_dim", c.max_vib_dim}}},
        {"outputs", outputs},
    };
}

inline ScenarioConfig from_json(const json& j) {
    detail::reject_unknown(j, {"preset", "name", "params", "propagation", "sync", "spectra", "pairs", "pair_cap",
                               "recording", "eigenmodes", "limits", "outputs"},
                           "config");
    ScenarioConfig c;
    if (j.contains("preset")) {
        if (!j.at("preset").is_string()) throw ConfigError("'preset' must be a string");
        c = preset(j.at("preset").get<std::string>());
    }
    detail::read(j, "name", c.name, "config");

    if (j.contains("params")) {
        const json& p = j.at("params");
        detail::reject_unknown(p, {"delta_e", "v", "omega1", "omega2", "g1", "g2", "kbt", "gamma_th", "gamma_deph",
                                   "m_levels"},
                               "params");
        auto& d = c.params;
        detail::read(p, "delta_e", d.delta_e, "params");
        detail::read(p, "v", d.v, "params");
        detail::read(p, "omega1", d.omega1, "params");
        detail::read(p, "omega2", d.omega2, "params");
        detail::read(p, "g1", d.g1, "params");
        detail::read(p, "g2", d.g2, "params");
        detail::read(p, "kbt", d.kbt, "params");
        detail::read(p, "gamma_th", d.gamma_th, "params");
        detail::read(p, "gamma_deph", d.gamma_deph, "params");
        detail::read(p, "m_levels", d.m_levels, "params");
    }
    if (j.contains("propagation")) {
        const json& p = j.at("propagation");
        detail::reject_unknown(p, {"t_end", "dt_out", "rel_tol", "abs_tol", "method"}, "propagation");
        detail::read(p, "t_end", c.propagation.t_end, "propagation");
        detail::read(p, "dt_out", c.propagation.dt_out, "propagation");
        detail::read(p, "rel_tol", c.propagation.rel_tol, "propagation");
        detail::read(p, "abs_tol", c.propagation.abs_tol, "propagation");
        if (p.contains("method")) {
            const std::string m = p.at("method").is_string() ? p.at("method").get<std::string>() : "";
            if (m == "adaptive-rk") {
                c.propagation.method = PropagationMethod::adaptive_rk;
            } else if (m == "eigen-exponential") {
                c.propagation.method = PropagationMethod::eigen_exponential;
            } else {
                throw ConfigError("propagation.method must be 'adaptive-rk' or 'eigen-exponential'");
            }
        }
    }
    if (j.contains("sync")) {
        const json& s = j.at("sync");
        detail::reject_unknown(s, {"window", "onset_threshold", "onset_hold"}, "sync");
        if (s.contains("window")) {
            const json& w = s.at("window");
            if (w.is_string() && w.get<std::string>() == "auto") {
                c.sync.window.reset();
            } else if (w.is_number()) {
                c.sync.window = w.get<double>();
            } else {
                throw ConfigError("sync.window must be a number (ps) or \"auto\"");
            }
        }
        detail::read(s, "onset_threshold", c.sync.onset_threshold, "sync");
        detail::read(s, "onset_hold", c.sync.onset_hold, "sync");
    }
    if (j.contains("spectra")) {
        const json& s = j.at("spectra");
        detail::reject_unknown(s, {"times", "window"}, "spectra");
        detail::read(s, "times", c.spectra.times, "spectra");
        detail::read(s, "window", c.spectra.window, "spectra");
    }
    if (j.contains("pairs")) {
        const json& p = j.at("pairs");
        if (p.is_string() && p.get<std::string>() == "auto") {
            c.pairs.automatic = true;
            c.pairs.list.clear();
        } else if (p.is_array()) {
            c.pairs.automatic = false;
            c.pairs.list.clear();
            for (const auto& e : p) {
                if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
                    throw ConfigError("each pair must be [j, k] with non-negative integers");
                }
                c.pairs.list.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
            }
        } else {
            throw ConfigError("pairs must be \"auto\" or a list of [j, k]");
        }
    }
    detail::read(j, "pair_cap", c.pairs.cap, "config");
    if (j.contains("recording")) {
        const json& r = j.at("recording");
        detail::reject_unknown(r, {"block_size", "state_stride"}, "recording");
        detail::read(r, "block_size", c.recording.block_size, "recording");
        detail::read(r, "state_stride", c.recording.state_stride, "recording");
    }
    if (j.contains("eigenmodes")) {
        const json& e = j.at("eigenmodes");
        detail::reject_unknown(e, {"m_eig", "top_k", "max_dim"}, "eigenmodes");
        detail::read(e, "m_eig", c.eigenmodes.m_eig, "eigenmodes");
        detail::read(e, "top_k", c.eigenmodes.top_k, "eigenmodes");
        detail::read(e, "max_dim", c.eigenmodes.max_dim, "eigenmodes");
    }
    if (j.contains("limits")) {
        const json& l = j.at("limits");
        detail::reject_unknown(l, {"max_vib_dim"}, "limits");
        detail::read(l, "max_vib_dim", c.max_vib_dim, "limits");
    }
    if (j.contains("outputs")) {
        const json& o = j.at("outputs");
        if (!o.is_array()) throw ConfigError("outputs must be a list");
        c.outputs = OutputSelection{false, false, false, false, false, false};
        for (const auto& e : o) {
            const std::string s = e.is_string() ? e.get<std::string>() : "";
            if (s == "trajectory") c.outputs.trajectory = true;
            else if (s == "sync") c.outputs.sync = true;
            else if (s == "spectra") c.outputs.spectra = true;
            else if (s == "coherences") c.outputs.coherences = true;
            else if (s == "eigenmodes") c.outputs.eigenmodes = true;
            else if (s == "table2") c.outputs.table2 = true;
            else throw ConfigError("unknown output '" + e.dump() + "'");
        }
    }
    c.validate();
    return c;
}

inline ScenarioConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline std::string serialise(const ScenarioConfig& c) { return to_json(c).dump(2) + "\n"; }

}  // namespace vibsync
