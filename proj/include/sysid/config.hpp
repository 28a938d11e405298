#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sysid/csv.hpp"
#include "sysid/dss.hpp"
#include "sysid/errors.hpp"
#include "sysid/model.hpp"
#include "sysid/sim.hpp"

// Experiment configs are a single JSON file. Parsing is strict: unknown keys
// anywhere are errors, so a typo fails loudly instead of silently running
// with a default. Identified models are written as JSON too; doubles survive
// both formats round-trip exactly.

namespace sysid {

struct LissajousRequest {
    double omega = 0.0;
    LissajousOptions opts;
};

struct ExperimentConfig {
    std::optional<PlantModel> plant;       // synthetic mode
    std::string input_data;                // data mode: time-series CSV
    std::string input_response;            // optional frequency-response CSV
    std::optional<SignalSpec> signal;
    SimOptions sim;
    std::vector<double> frequencies;
    SweepPolicy sweep;
    DssConfig dss;
    std::optional<LissajousRequest> lissajous;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + where + it.key() + "'");
    }
}

inline const json& require(const json& obj, const std::string& where, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError("config: missing key '" + where + key + "'");
    return *it;
}

inline double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError("config: '" + where + "' must be a number");
    return v.get<double>();
}

inline double get_number(const json& obj, const std::string& where, const char* key,
                         double fallback) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : as_number(*it, where + key);
}

inline int get_int(const json& obj, const std::string& where, const char* key, int fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number_integer())
        throw ConfigError("config: '" + where + key + "' must be an integer");
    return it->get<int>();
}

inline std::string get_string(const json& obj, const std::string& where, const char* key) {
    const json& v = require(obj, where, key);
    if (!v.is_string()) throw ConfigError("config: '" + where + key + "' must be a string");
    return v.get<std::string>();
}

inline Nonlinearity parse_nonlinearity(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    reject_unknown_keys(obj, where, {"coeffs", "x_max", "mono_eps"});
    const json& cj = require(obj, where, "coeffs");
    if (!cj.is_array() || cj.empty())
        throw ConfigError("config: '" + where + "coeffs' must be a non-empty array");
    std::vector<double> coeffs;
    for (const auto& c : cj) coeffs.push_back(as_number(c, where + "coeffs[]"));
    const double x_max = as_number(require(obj, where, "x_max"), where + "x_max");
    const double mono_eps = get_number(obj, where, "mono_eps", -1.0);
    return Nonlinearity::odd_poly(coeffs, x_max, mono_eps);
}

inline PlantModel parse_plant(const json& obj) {
    const std::string where = "plant.";
    if (!obj.is_object()) throw ConfigError("config: 'plant' must be an object");
    reject_unknown_keys(obj, where, {"order", "A", "B", "C", "f"});
    const int order = get_int(obj, where, "order", 2);
    const double a = as_number(require(obj, where, "A"), where + "A");
    const double b = as_number(require(obj, where, "B"), where + "B");
    Nonlinearity f = parse_nonlinearity(require(obj, where, "f"), where + "f.");
    if (order == 2) {
        if (obj.contains("C"))
            throw ConfigError("config: 'plant.C' is part of 'plant.f' for order-2 plants");
        return PlantModel::quasilinear(a, b, std::move(f));
    }
    if (order == 3) {
        const double c = as_number(require(obj, where, "C"), where + "C");
        return PlantModel::third_order(a, b, c, std::move(f));
    }
    throw ConfigError("config: 'plant.order' must be 2 or 3");
}

inline SignalSpec parse_signal(const json& obj) {
    const std::string where = "signal.";
    if (!obj.is_object()) throw ConfigError("config: 'signal' must be an object");
    reject_unknown_keys(obj, where,
                        {"kind", "amplitude", "frequency", "levels", "dither_amplitude",
                         "dither_frequency", "ramp_time"});
    SignalSpec s;
    const std::string kind = get_string(obj, where, "kind");
    if (kind == "step")
        s.kind = SignalKind::step;
    else if (kind == "harmonic")
        s.kind = SignalKind::harmonic;
    else if (kind == "multistep")
        s.kind = SignalKind::multistep;
    else
        throw ConfigError("config: 'signal.kind' must be step, harmonic, or multistep");
    s.amplitude = get_number(obj, where, "amplitude", s.kind == SignalKind::multistep ? 0.0 : 1.0);
    s.frequency = get_number(obj, where, "frequency", 0.0);
    s.dither_amplitude = get_number(obj, where, "dither_amplitude", 0.0);
    s.dither_frequency = get_number(obj, where, "dither_frequency", 0.0);
    s.ramp_time = get_number(obj, where, "ramp_time", 0.0);
    if (obj.contains("levels")) {
        const json& lv = obj["levels"];
        if (!lv.is_array()) throw ConfigError("config: 'signal.levels' must be an array");
        for (const auto& e : lv) {
            if (!e.is_object()) throw ConfigError("config: 'signal.levels[]' must be objects");
            reject_unknown_keys(e, where + "levels[].", {"time", "level"});
            s.levels.push_back({as_number(require(e, where + "levels[].", "time"),
                                          where + "levels[].time"),
                                as_number(require(e, where + "levels[].", "level"),
                                          where + "levels[].level")});
        }
    }
    s.validate();
    return s;
}

inline SimOptions parse_sim(const json& obj) {
    const std::string where = "sim.";
    if (!obj.is_object()) throw ConfigError("config: 'sim' must be an object");
    reject_unknown_keys(obj, where, {"sample_dt", "duration", "rk_step", "noise_sigma"});
    SimOptions so;
    so.sample_dt = get_number(obj, where, "sample_dt", so.sample_dt);
    so.duration = get_number(obj, where, "duration", so.duration);
    so.rk_step = get_number(obj, where, "rk_step", so.rk_step);
    so.noise_sigma = get_number(obj, where, "noise_sigma", so.noise_sigma);
    so.validate();
    return so;
}

inline SweepPolicy parse_sweep(const json& obj) {
    const std::string where = "sweep.";
    if (!obj.is_object()) throw ConfigError("config: 'sweep' must be an object");
    reject_unknown_keys(obj, where, {"amplitude", "samples_per_period", "periods"});
    SweepPolicy p;
    p.amplitude = get_number(obj, where, "amplitude", p.amplitude);
    p.samples_per_period = get_int(obj, where, "samples_per_period", p.samples_per_period);
    p.periods = get_int(obj, where, "periods", p.periods);
    return p;
}

inline DssConfig parse_dss(const json& obj) {
    const std::string where = "dss.";
    if (!obj.is_object()) throw ConfigError("config: 'dss' must be an object");
    reject_unknown_keys(obj, where,
                        {"order", "max_iter", "param_tol", "f_tol", "n_coeffs", "window",
                         "rk_step", "reject_ratio", "start"});
    DssConfig cfg;
    cfg.order = get_int(obj, where, "order", cfg.order);
    cfg.max_iter = get_int(obj, where, "max_iter", cfg.max_iter);
    cfg.param_tol = get_number(obj, where, "param_tol", cfg.param_tol);
    cfg.f_tol = get_number(obj, where, "f_tol", cfg.f_tol);
    cfg.n_coeffs = get_int(obj, where, "n_coeffs", cfg.n_coeffs);
    cfg.rk_step = get_number(obj, where, "rk_step", cfg.rk_step);
    cfg.reject_ratio = get_number(obj, where, "reject_ratio", cfg.reject_ratio);
    if (obj.contains("window")) {
        const json& w = obj["window"];
        if (!w.is_object()) throw ConfigError("config: 'dss.window' must be an object");
        reject_unknown_keys(w, where + "window.", {"tau1", "tau2"});
        cfg.window.tau1 = get_number(w, where + "window.", "tau1", cfg.window.tau1);
        cfg.window.tau2 = get_number(w, where + "window.", "tau2", cfg.window.tau2);
        cfg.window.validate();
    }
    if (obj.contains("start")) {
        const json& st = obj["start"];
        if (!st.is_array() || st.size() != 4)
            throw ConfigError("config: 'dss.start' must be an array [A, B, C, slope]");
        std::array<double, 4> v{};
        for (std::size_t i = 0; i < 4; ++i) v[i] = as_number(st[i], where + "start[]");
        cfg.start3 = v;
    }
    return cfg;
}

inline LissajousRequest parse_lissajous(const json& obj) {
    const std::string where = "lissajous.";
    if (!obj.is_object()) throw ConfigError("config: 'lissajous' must be an object");
    reject_unknown_keys(obj, where, {"omega", "amplitude", "periods", "samples_per_period"});
    LissajousRequest r;
    r.omega = as_number(require(obj, where, "omega"), where + "omega");
    r.opts.amplitude = get_number(obj, where, "amplitude", r.opts.amplitude);
    r.opts.periods = get_number(obj, where, "periods", r.opts.periods);
    r.opts.samples_per_period =
        get_int(obj, where, "samples_per_period", r.opts.samples_per_period);
    return r;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& path) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(path + ": top level must be an object");
    detail::reject_unknown_keys(root, "",
                                {"plant", "input_data", "input_response", "signal", "sim",
                                 "frequencies", "sweep", "dss", "lissajous", "seed"});

    ExperimentConfig cfg;
    if (root.contains("plant")) cfg.plant = detail::parse_plant(root["plant"]);
    if (root.contains("input_data")) cfg.input_data = detail::get_string(root, "", "input_data");
    if (root.contains("input_response"))
        cfg.input_response = detail::get_string(root, "", "input_response");
    if (cfg.plant && !cfg.input_data.empty())
        throw ConfigError("config: 'plant' (synthetic mode) and 'input_data' (data mode) are "
                          "mutually exclusive");
    if (root.contains("signal")) cfg.signal = detail::parse_signal(root["signal"]);
    if (root.contains("sim")) cfg.sim = detail::parse_sim(root["sim"]);
    if (root.contains("frequencies")) {
        const auto& fj = root["frequencies"];
        if (!fj.is_array()) throw ConfigError("config: 'frequencies' must be an array");
        for (const auto& v : fj) cfg.frequencies.push_back(detail::as_number(v, "frequencies[]"));
    }
    if (root.contains("sweep")) cfg.sweep = detail::parse_sweep(root["sweep"]);
    if (root.contains("dss")) cfg.dss = detail::parse_dss(root["dss"]);
    if (root.contains("lissajous")) cfg.lissajous = detail::parse_lissajous(root["lissajous"]);
    if (root.contains("seed")) {
        const auto& sj = root["seed"];
        if (!sj.is_number_integer() || sj.get<std::int64_t>() < 0)
            throw ConfigError("config: 'seed' must be a non-negative integer");
        cfg.sim.seed = sj.get<std::uint64_t>();
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    return parse_config_text(detail::read_file(path), path);
}

// ----- identified-model files -------------------------------------------

struct ModelDiagnostics {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::string stop_reason;
};

inline nlohmann::json model_to_json(const PlantModel& m) {
    nlohmann::json f;
    f["family"] = "odd_poly";
    f["coeffs"] = m.f().coeff_vector();
    f["x_max"] = m.f().x_max();
    nlohmann::json j;
    j["order"] = m.order();
    j["A"] = m.linear_params().A;
    j["B"] = m.linear_params().B;
    if (m.order() == 3) j["C"] = m.linear_params().C;
    j["f"] = f;
    return j;
}

inline void write_model_file(const std::string& path, const PlantModel& m,
                             const ModelDiagnostics& diag) {
    nlohmann::json j = model_to_json(m);
    j["diagnostics"] = {{"iterations", diag.iterations},
                        {"residual", diag.residual},
                        {"converged", diag.converged},
                        {"stop_reason", diag.stop_reason}};
    detail::atomic_write(path, j.dump(2) + "\n");
}

inline std::pair<PlantModel, ModelDiagnostics> read_model_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    const int order = j.at("order").get<int>();
    const auto& fj = j.at("f");
    Nonlinearity f = Nonlinearity::odd_poly(fj.at("coeffs").get<std::vector<double>>(),
                                            fj.at("x_max").get<double>());
    PlantModel m = order == 3
                       ? PlantModel::third_order(j.at("A").get<double>(),
                                                 j.at("B").get<double>(),
                                                 j.at("C").get<double>(), std::move(f))
                       : PlantModel::quasilinear(j.at("A").get<double>(),
                                                 j.at("B").get<double>(), std::move(f));
    ModelDiagnostics d;
    if (j.contains("diagnostics")) {
        const auto& dj = j["diagnostics"];
        d.iterations = dj.value("iterations", 0);
        d.residual = dj.value("residual", 0.0);
        d.converged = dj.value("converged", false);
        d.stop_reason = dj.value("stop_reason", "");
    }
    return {std::move(m), std::move(d)};
}

}  // namespace sysid
