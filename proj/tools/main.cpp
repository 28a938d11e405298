#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sysid/config.hpp"
#include "sysid/csv.hpp"
#include "sysid/dss.hpp"
#include "sysid/errors.hpp"
#include "sysid/fit.hpp"
#include "sysid/harmonic.hpp"
#include "sysid/model.hpp"
#include "sysid/sim.hpp"

namespace {

using namespace sysid;

struct Args {
    std::string config;
    std::string out;
    std::string in;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void vlog(const Args& a, const std::string& msg) {
    if (a.verbose) std::cerr << "sysid: " << msg << "\n";
}

ExperimentConfig load(const Args& a) {
    ExperimentConfig cfg = load_config(a.config);
    if (a.seed) cfg.sim.seed = *a.seed;
    vlog(a, "loaded " + a.config);
    return cfg;
}

const PlantModel& need_plant(const ExperimentConfig& cfg, const char* sub) {
    if (!cfg.plant)
        throw ConfigError(std::string(sub) + ": config must define 'plant' (synthetic mode)");
    return *cfg.plant;
}

std::string out_or(const Args& a, const char* fallback) {
    return a.out.empty() ? fallback : a.out;
}

int run_simulate(const Args& a) {
    const ExperimentConfig cfg = load(a);
    const PlantModel& plant = need_plant(cfg, "simulate");
    if (!cfg.signal) throw ConfigError("simulate: config must define 'signal'");
    const TimeSeries u = generate_signal(*cfg.signal, cfg.sim);
    const TimeSeries x = simulate(plant, *cfg.signal, cfg.sim);
    const std::string path = out_or(a, "timeseries.csv");
    write_time_series(path, u, x);
    std::cout << "simulate: " << u.size() << " samples, dt " << detail::fmt17(u.dt) << " -> "
              << path << "\n";
    return 0;
}

int run_freqresp(const Args& a) {
    const ExperimentConfig cfg = load(a);
    const PlantModel& plant = need_plant(cfg, "freqresp");
    const auto pts = sweep_frequency_response(plant, cfg.frequencies, cfg.sim, cfg.sweep);
    const std::string path = out_or(a, "freqresp.csv");
    write_frequency_response(path, pts);
    std::cout << "freqresp: " << pts.size() << " frequencies -> " << path << "\n";
    return 0;
}

int run_fit_linear(const Args& a) {
    const ExperimentConfig cfg = load(a);
    if (a.in.empty())
        throw ValidationError("fit-linear: --in must point to a frequency-response table");
    const auto pts = read_frequency_response(a.in);
    vlog(a, "read " + std::to_string(pts.size()) + " response points from " + a.in);
    nlohmann::json j;
    if (cfg.dss.order == 3) {
        const ThirdOrderParams p = fit_linear_freq_third_order(pts);
        j = {{"order", 3}, {"A", p.A}, {"B", p.B}, {"C", p.C}, {"D", p.D}};
        std::cout << "fit-linear: order 3, A " << detail::fmt17(p.A) << ", B "
                  << detail::fmt17(p.B) << ", C " << detail::fmt17(p.C) << ", D "
                  << detail::fmt17(p.D) << "\n";
    } else {
        const LinearParams p = fit_linear_freq(pts);
        j = {{"order", 2}, {"A", p.A}, {"B", p.B}, {"C", p.C}};
        std::cout << "fit-linear: order 2, A " << detail::fmt17(p.A) << ", B "
                  << detail::fmt17(p.B) << ", C " << detail::fmt17(p.C) << "\n";
    }
    const std::string path = out_or(a, "linear_fit.json");
    detail::atomic_write(path, j.dump(2) + "\n");
    return 0;
}

int run_dss(const Args& a) {
    const ExperimentConfig cfg = load(a);

    TimeSeries u, x;
    if (!a.in.empty() || !cfg.input_data.empty()) {
        const std::string path = a.in.empty() ? cfg.input_data : a.in;
        std::tie(u, x) = read_time_series(path);
        vlog(a, "read " + std::to_string(u.size()) + " samples from " + path);
    } else {
        const PlantModel& plant = need_plant(cfg, "dss");
        if (!cfg.signal) throw ConfigError("dss: synthetic mode needs 'signal'");
        u = generate_signal(*cfg.signal, cfg.sim);
        x = simulate(plant, *cfg.signal, cfg.sim);
        vlog(a, "synthesized " + std::to_string(u.size()) + " samples");
    }

    std::vector<FrequencyResponsePoint> pts;
    if (!cfg.input_response.empty()) {
        pts = read_frequency_response(cfg.input_response);
        vlog(a, "read " + std::to_string(pts.size()) + " response points from " +
                    cfg.input_response);
    } else if (cfg.plant && !cfg.frequencies.empty()) {
        pts = sweep_frequency_response(*cfg.plant, cfg.frequencies, cfg.sim, cfg.sweep);
        vlog(a, "swept " + std::to_string(pts.size()) + " frequencies for the linear start");
    }

    const DssResult res = cfg.dss.order == 3 ? dss_run_third_order(u, x, pts, cfg.dss)
                                             : dss_run(u, x, pts, cfg.dss);

    const std::string dir = out_or(a, "dss_out");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());

    ModelDiagnostics diag{res.state.n, res.state.residual, res.converged, res.stop_reason};
    write_model_file(dir + "/model.json", res.plant, diag);
    write_static_curve(dir + "/static_curve.csv", res.curve);

    std::string hist = "n,A,B,C,residual\n";
    for (std::size_t k = 0; k < res.state.history.size(); ++k) {
        const DssIteration& it = res.state.history[k];
        hist += std::to_string(k) + ',' + detail::fmt17(it.A) + ',' + detail::fmt17(it.B) +
                ',' + detail::fmt17(it.C) + ',' + detail::fmt17(it.residual) + '\n';
    }
    detail::atomic_write(dir + "/history.csv", hist);

    std::cout << "dss: " << res.stop_reason << " after " << res.state.n << " iterations\n"
              << "A = " << detail::fmt17(res.state.A) << "\n"
              << "B = " << detail::fmt17(res.state.B) << "\n";
    if (cfg.dss.order == 3) std::cout << "C = " << detail::fmt17(res.state.C) << "\n";
    std::cout << "f: " << res.state.f.n_terms() << " odd-power terms over |x| <= "
              << detail::fmt17(res.state.f.x_max()) << ", slope at origin "
              << detail::fmt17(res.state.f.slope_at_origin()) << "\n"
              << "residual = " << detail::fmt17(res.state.residual) << "\n"
              << "outputs: " << dir << "/model.json, " << dir << "/static_curve.csv, " << dir
              << "/history.csv\n";
    return 0;
}

int run_lissajous(const Args& a) {
    const ExperimentConfig cfg = load(a);
    const PlantModel& plant = need_plant(cfg, "lissajous");
    if (!cfg.lissajous)
        throw ConfigError("lissajous: config must define 'lissajous' with the drive frequency");
    const StaticCurve curve = lissajous_baseline(plant, cfg.lissajous->omega,
                                                 cfg.lissajous->opts);
    const std::string path = out_or(a, "lissajous.csv");
    write_static_curve(path, curve);
    std::cout << "lissajous: " << curve.points.size() << " points -> " << path << "\n";
    return 0;
}

void add_common(CLI::App* sub, Args& args, bool with_in) {
    sub->add_option("--config", args.config, "experiment config (JSON)")->required();
    sub->add_option("--out", args.out, "output file (or directory for dss)");
    if (with_in) sub->add_option("--in", args.in, "input data file (data mode)");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_flag("--verbose", args.verbose, "progress notes on stderr");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasilinear plant identification toolkit"};
    app.require_subcommand(1);

    Args args;
    std::function<int(const Args&)> action;

    auto* sim = app.add_subcommand("simulate", "synthesize a (u, x) record");
    add_common(sim, args, false);
    sim->callback([&] { action = run_simulate; });

    auto* fr = app.add_subcommand("freqresp", "measure a frequency-response table");
    add_common(fr, args, false);
    fr->callback([&] { action = run_freqresp; });

    auto* fl = app.add_subcommand("fit-linear", "fit linear parameters to a response table");
    add_common(fl, args, true);
    fl->callback([&] { action = run_fit_linear; });

    auto* ds = app.add_subcommand("dss", "identify a plant from a record");
    add_common(ds, args, true);
    ds->callback([&] { action = run_dss; });

    auto* li = app.add_subcommand("lissajous", "trace the open-loop static curve");
    add_common(li, args, false);
    li->callback([&] { action = run_lissajous; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        return action(args);
    } catch (const ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}
