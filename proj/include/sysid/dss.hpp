#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/fit.hpp"
#include "sysid/harmonic.hpp"
#include "sysid/model.hpp"
#include "sysid/sim.hpp"

namespace sysid {

enum class CurveSource { lissajous, dss_corrected };

// A sampled static characteristic u = f(x). dss_corrected curves are sorted
// by x and monotone; lissajous curves keep time order, so a fast test shows
// up as an open loop.
struct StaticCurve {
    std::vector<std::pair<double, double>> points;  // (x, u)
    CurveSource source = CurveSource::lissajous;
};

struct DssIteration {
    double A = 0.0, B = 0.0, C = 0.0;  // C is 0 for second-order runs
    double residual = 0.0;
};

struct DssState {
    int n = 0;
    int order = 2;
    double A = 0.0, B = 0.0;
    double C = 0.0;  // third-order runs only
    Nonlinearity f = Nonlinearity::odd_poly_raw({1.0}, 1.0);
    double residual = 0.0;
    std::vector<DssIteration> history;

    PlantModel plant() const {
        return order == 3 ? PlantModel::third_order(A, B, C, f)
                          : PlantModel::quasilinear(A, B, f);
    }
};

struct DssConfig {
    int order = 2;
    int max_iter = 20;
    double param_tol = 1e-4;  // |dA|/A + |dB|/B (+ |dC|/C) below this ...
    double f_tol = 1e-3;      // ... and sup|df| below f_tol * full scale
    int n_coeffs = 4;
    FitWindow window;
    double rk_step = 0.0;      // 0: auto
    double reject_ratio = 1.1; // step rejected when residual grows past this
    // Third-order starting point {A, B, C, f'(0)} when no usable frequency
    // data exists.
    std::optional<std::array<double, 4>> start3;
};

// A rejected step: the candidate iterate raised the residual past the
// acceptance ratio. Carries both states so callers can keep the last good one.
class StagnationError : public NumericError {
  public:
    StagnationError(const std::string& msg, DssState before_, DssState after_)
        : NumericError(msg), before(std::move(before_)), after(std::move(after_)) {}
    DssState before;
    DssState after;
};

struct DssResult {
    PlantModel plant;
    StaticCurve curve;
    DssState state;
    bool converged = false;
    std::string stop_reason;  // "converged" | "max_iter" | "stagnation"
};

namespace detail {

inline double dss_residual(const DssState& state, const TimeSeries& u, const TimeSeries& x,
                           const DssConfig& cfg) {
    auto prob = TimeFitProblem::make(u, x, cfg.window, cfg.rk_step);
    return prob(state.plant());
}

inline double data_x_max(const TimeSeries& x) {
    double m = 0.0;
    for (double v : x.values) m = std::max(m, std::abs(v));
    if (!(m > 0.0))
        throw InsufficientDataError("dss: measured output is identically zero");
    return 1.05 * m;  // headroom so model excursions rarely leave the range
}

inline StaticCurve sampled_curve(const Nonlinearity& f) {
    StaticCurve curve;
    curve.source = CurveSource::dss_corrected;
    const int n = 257;
    curve.points.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double x = -f.x_max() + 2.0 * f.x_max() * i / (n - 1);
        curve.points.emplace_back(x, f(x));
    }
    return curve;
}

}  // namespace detail

// First approximation from the frequency fit: linear dynamics (A*, B*) and
// the linear static curve f0(x) = C* x over the measured output range.
inline DssState dss_init(const TimeSeries& u, const TimeSeries& x,
                         const std::vector<FrequencyResponsePoint>& freq_points,
                         const DssConfig& cfg = {}) {
    const LinearParams p = fit_linear_freq(freq_points);
    DssState state;
    state.n = 0;
    state.order = 2;
    state.A = p.A;
    state.B = p.B;
    state.f = Nonlinearity::odd_poly({p.C}, detail::data_x_max(x));
    state.residual = detail::dss_residual(state, u, x, cfg);
    state.history.push_back({state.A, state.B, 0.0, state.residual});
    return state;
}

// Corrected static scatter: integrate the current model against the recorded
// drive and pair the measured output with the model's own restoring force,
// (x_measured(t_k), f_n(x_n(t_k))). The model equation makes f_n(x_n) equal
// u - A x_n'' - B x_n' exactly (one more term for third order), so no
// derivative of any measured signal is ever formed. Samples the model pushes
// outside the calibrated range are dropped.
inline std::vector<std::pair<double, double>> dynamic_correction(const DssState& state,
                                                                 const TimeSeries& u,
                                                                 const TimeSeries& x_measured,
                                                                 const DssConfig& cfg = {}) {
    u.validate();
    if (!u.same_grid(x_measured))
        throw GridMismatchError("dynamic_correction: u and x are not on the same grid");
    const PlantModel plant = state.plant();
    if (cfg.rk_step <= 0.0 && detail::substeps_per_sample(plant, u.dt, 0.0) >
                                  detail::TimeFitProblem::kMaxSubsteps)
        throw DivergenceError(
            "dynamic_correction: model is too stiff for the record's sample grid", 0.0);
    const TimeSeries xn = simulate_driven(plant, u, cfg.rk_step);
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (!state.f.in_range(xn.values[k])) continue;
        pairs.emplace_back(x_measured.values[k], state.f(xn.values[k]));
    }
    return pairs;
}

// One DSS iteration: rebuild the static curve from the corrected scatter,
// then refit the linear coefficients against the measurement with the new
// curve held fixed. Throws StagnationError when the step makes the fit worse
// than the acceptance ratio allows.
inline DssState dss_step(const DssState& state, const TimeSeries& u, const TimeSeries& x,
                         const DssConfig& cfg = {}) {
    const auto pairs = dynamic_correction(state, u, x, cfg);

    MonotoneFitOptions mf;
    mf.n_coeffs = cfg.n_coeffs;
    mf.x_max = state.f.x_max();  // the calibrated range never drifts
    const Nonlinearity f_next = fit_monotone(pairs, mf);

    DssState next;
    next.order = state.order;
    next.n = state.n + 1;
    next.f = f_next;
    // The outer loop only resolves parameters to param_tol, so the inner
    // search need not polish the simplex further than a couple digits below
    // that; the default tolerance wastes thousands of simulations per step.
    MinimizeOptions refit_opts;
    refit_opts.diameter_tol = 1e-2 * cfg.param_tol;
    if (state.order == 3) {
        const RefitResult3 r = refit_abc(u, x, f_next, cfg.window, state.A, state.B, state.C,
                                         cfg.rk_step, refit_opts);
        next.A = r.A;
        next.B = r.B;
        next.C = r.C;
        next.residual = r.diag.objective;
    } else {
        const RefitResult r =
            refit_ab(u, x, f_next, cfg.window, state.A, state.B, cfg.rk_step, refit_opts);
        next.A = r.A;
        next.B = r.B;
        next.residual = r.diag.objective;
    }
    next.history = state.history;
    next.history.push_back({next.A, next.B, next.C, next.residual});

    if (next.residual > cfg.reject_ratio * state.residual)
        throw StagnationError("dss_step: residual grew from " + fmt_g(state.residual) +
                                  " to " + fmt_g(next.residual),
                              state, next);
    return next;
}

namespace detail {

inline bool dss_converged(const DssState& prev, const DssState& next, const DssConfig& cfg) {
    double rel = std::abs(next.A - prev.A) / prev.A + std::abs(next.B - prev.B) / prev.B;
    if (prev.order == 3) rel += std::abs(next.C - prev.C) / prev.C;
    if (rel >= cfg.param_tol) return false;
    const double x_max = next.f.x_max();
    const double fscale = std::abs(next.f(x_max));
    double sup = 0.0;
    for (int i = 0; i <= 256; ++i) {
        const double x = -x_max + 2.0 * x_max * i / 256.0;
        sup = std::max(sup, std::abs(next.f(x) - prev.f(x)));
    }
    return sup < cfg.f_tol * std::max(fscale, 1e-300);
}

inline DssResult dss_iterate(DssState state, const TimeSeries& u, const TimeSeries& x,
                             const DssConfig& cfg) {
    DssResult out{state.plant(), {}, state, false, "max_iter"};
    for (int it = 0; it < cfg.max_iter; ++it) {
        DssState next;
        try {
            next = dss_step(state, u, x, cfg);
        } catch (const StagnationError&) {
            out.stop_reason = "stagnation";
            break;
        }
        const bool done = dss_converged(state, next, cfg);
        state = std::move(next);
        if (done) {
            out.converged = true;
            out.stop_reason = "converged";
            break;
        }
    }
    out.state = std::move(state);
    out.plant = out.state.plant();
    out.curve = sampled_curve(out.state.f);
    return out;
}

}  // namespace detail

// Full identification loop from measured records plus a frequency-response
// table for the starting point. Non-convergence is reported in the result,
// not thrown; a rejected step ends the loop with the last accepted state.
inline DssResult dss_run(const TimeSeries& u, const TimeSeries& x,
                         const std::vector<FrequencyResponsePoint>& freq_points,
                         const DssConfig& cfg = {}) {
    if (cfg.order != 2)
        throw ConfigError("dss_run: config order must be 2, got " +
                          std::to_string(cfg.order));
    return detail::dss_iterate(dss_init(u, x, freq_points, cfg), u, x, cfg);
}

// Third-order loop. The starting point comes from the third-order frequency
// fit when a response table is given, else from cfg.start3 = {A, B, C, f'(0)}.
inline DssResult dss_run_third_order(const TimeSeries& u, const TimeSeries& x,
                                     const std::vector<FrequencyResponsePoint>& freq_points,
                                     const DssConfig& cfg) {
    if (cfg.order != 3)
        throw ConfigError("dss_run_third_order: config order must be 3, got " +
                          std::to_string(cfg.order));
    DssState state;
    state.n = 0;
    state.order = 3;
    double slope = 0.0;
    if (!freq_points.empty()) {
        const ThirdOrderParams p = fit_linear_freq_third_order(freq_points);
        state.A = p.A;
        state.B = p.B;
        state.C = p.C;
        slope = p.D;
    } else if (cfg.start3) {
        const auto& s = *cfg.start3;
        state.A = s[0];
        state.B = s[1];
        state.C = s[2];
        slope = s[3];
        if (!(state.A > 0.0 && state.B > 0.0 && state.C > 0.0 && slope > 0.0))
            throw ConfigError("dss_run_third_order: start {A, B, C, slope} must be positive");
    } else {
        throw ConfigError(
            "dss_run_third_order: need frequency points or a start {A, B, C, slope}");
    }
    state.f = Nonlinearity::odd_poly({slope}, detail::data_x_max(x));
    state.residual = detail::dss_residual(state, u, x, cfg);
    state.history.push_back({state.A, state.B, state.C, state.residual});
    return detail::dss_iterate(std::move(state), u, x, cfg);
}

// The classical comparator: drive the plant with a slow sine and plot input
// against output directly. Points keep time order; at anything but a very low
// frequency the curve is an open loop whose width is the dynamic error the
// DSS correction removes.
inline StaticCurve lissajous_baseline(const TimeSeries& u, const TimeSeries& x) {
    u.validate();
    if (!u.same_grid(x))
        throw GridMismatchError("lissajous_baseline: u and x are not on the same grid");
    StaticCurve curve;
    curve.source = CurveSource::lissajous;
    curve.points.reserve(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        const std::pair<double, double> p{x.values[k], u.values[k]};
        if (curve.points.empty() || curve.points.back() != p) curve.points.push_back(p);
    }
    return curve;
}

struct LissajousOptions {
    double amplitude = -1.0;  // < 0: drive to the edge of the calibrated range
    double periods = 2.0;
    int samples_per_period = 512;
    double rk_step = 0.0;
};

inline StaticCurve lissajous_baseline(const PlantModel& plant, double omega,
                                      const LissajousOptions& opts = {}) {
    if (!(std::isfinite(omega) && omega > 0.0))
        throw ValidationError("lissajous_baseline: frequency must be positive, got " +
                              fmt_g(omega));
    const double amplitude =
        opts.amplitude >= 0.0 ? opts.amplitude : plant.f()(plant.f().x_max());
    SignalSpec sig = SignalSpec::harmonic_omega(amplitude, omega);
    const double period = 2.0 * kPi / omega;
    SimOptions so;
    so.sample_dt = period / opts.samples_per_period;
    so.duration = opts.periods * period;
    so.rk_step = opts.rk_step;
    const TimeSeries x = simulate(plant, sig, so);
    const TimeSeries u = generate_signal(sig, so);
    return lissajous_baseline(u, x);
}

}  // namespace sysid
