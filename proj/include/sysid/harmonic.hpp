#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/model.hpp"
#include "sysid/sim.hpp"

namespace sysid {

// Averaging window for harmonic extraction: skip settle_time of transient,
// then integrate over an integer number of drive periods.
struct AnalysisWindow {
    double settle_time = 0.0;
    int periods = 4;

    void validate() const {
        if (!(settle_time >= 0.0) || !std::isfinite(settle_time))
            throw ValidationError("analysis window: settle_time must be >= 0");
        if (periods < 1)
            throw ValidationError("analysis window: need at least one period");
    }
};

struct HarmonicCoefficient {
    double omega = 0.0;
    int k = 0;
    std::complex<double> value;
};

struct FrequencyResponsePoint {
    double omega = 0.0;
    std::complex<double> gain;
    double amplitude = 0.0;  // |gain|
    double phase = 0.0;      // arg(gain)

    static FrequencyResponsePoint from_gain(double omega, std::complex<double> g) {
        return {omega, g, std::abs(g), std::arg(g)};
    }
};

namespace detail {

// Trapezoid of x(t) e^{-i k w t} over [a, b] on x's grid, linear interpolation
// for the partial cells at the ends. Ends within 1e-9 dt of a node snap to it.
inline std::complex<double> integrate_against(const TimeSeries& x, double omega, int k,
                                              double a, double b) {
    const double w = static_cast<double>(k) * omega;
    auto g = [&](double t, double xv) {
        return xv * std::complex<double>(std::cos(w * t), -std::sin(w * t));
    };
    const double snap = 1e-9 * x.dt;
    auto i0 = static_cast<std::ptrdiff_t>(std::ceil((a - x.t0 - snap) / x.dt));
    auto i1 = static_cast<std::ptrdiff_t>(std::floor((b - x.t0 + snap) / x.dt));
    i0 = std::max<std::ptrdiff_t>(i0, 0);
    i1 = std::min<std::ptrdiff_t>(i1, static_cast<std::ptrdiff_t>(x.size()) - 1);

    std::complex<double> sum = 0.0;
    for (std::ptrdiff_t i = i0; i < i1; ++i) {
        const double t_lo = x.time(i), t_hi = x.time(i + 1);
        sum += 0.5 * x.dt * (g(t_lo, x.values[i]) + g(t_hi, x.values[i + 1]));
    }
    const double t_first = x.time(i0), t_last = x.time(i1);
    if (t_first - a > snap)
        sum += 0.5 * (t_first - a) * (g(a, x.interp_linear(a)) + g(t_first, x.values[i0]));
    if (b - t_last > snap)
        sum += 0.5 * (b - t_last) * (g(t_last, x.values[i1]) + g(b, x.interp_linear(b)));
    return sum;
}

}  // namespace detail

// k-th complex Fourier coefficient of x over the analysis window:
// (w / 2 pi n) * integral of x(t) e^{-i k w t} over n periods past the settle.
inline HarmonicCoefficient harmonic_coefficient(const TimeSeries& x, double omega, int k,
                                                const AnalysisWindow& win) {
    x.validate();
    win.validate();
    if (!(omega > 0.0) || !std::isfinite(omega))
        throw ValidationError("harmonic: omega must be positive");
    if (k < 0) throw ValidationError("harmonic: harmonic index must be >= 0");
    const double period = 2.0 * kPi / omega;
    if (x.dt > period / 32.0 + 1e-12 * period)
        throw WindowError("harmonic: need at least 32 samples per period, have " +
                          fmt_g(period / x.dt) + " (sample_dt " + fmt_g(x.dt) + " vs period " +
                          fmt_g(period) + ")");
    const double a = x.t0 + win.settle_time;
    const double b = a + win.periods * period;
    if (b > x.end_time() + 1e-9 * x.dt)
        throw WindowError("harmonic: record ends at t = " + fmt_g(x.end_time()) +
                          " but the window needs [" + fmt_g(a) + ", " + fmt_g(b) + "]");
    const auto integral = detail::integrate_against(x, omega, k, a, b);
    const double norm = omega / (2.0 * kPi * win.periods);
    return {omega, k, norm * integral};
}

// Complex gain K1(x) / K1(u): first-harmonic transfer as a two-channel
// analyzer measures it. Equals 1/(-A w^2 + i B w + C) exactly on linear
// plants; on quasilinear plants it is the describing-function gain.
inline FrequencyResponsePoint measured_gain(const TimeSeries& u, const TimeSeries& x,
                                            double omega, const AnalysisWindow& win) {
    if (!u.same_grid(x))
        throw GridMismatchError("measured_gain: u and x are not on the same time grid");
    const auto ku = harmonic_coefficient(u, omega, 1, win);
    const auto kx = harmonic_coefficient(x, omega, 1, win);
    const double u_scale = *std::max_element(u.values.begin(), u.values.end(),
                                             [](double p, double q) {
                                                 return std::abs(p) < std::abs(q);
                                             });
    if (std::abs(ku.value) < 1e-9 * std::max(std::abs(u_scale), 1e-30))
        throw DegenerateInputError("measured_gain: input has no component at omega = " +
                                   fmt_g(omega));
    return FrequencyResponsePoint::from_gain(omega, kx.value / ku.value);
}

// K(i w) = 1 / (-A w^2 + i B w + C).
inline std::complex<double> eval_transfer(const LinearParams& p, double omega) {
    const std::complex<double> den(p.C - p.A * omega * omega, p.B * omega);
    const double scale = std::abs(p.A * omega * omega) + std::abs(p.B * omega) +
                         std::abs(p.C);
    if (std::abs(den) < 1e-12 * std::max(scale, 1e-300))
        throw SingularityError("eval_transfer: denominator vanishes at omega = " +
                               fmt_g(omega));
    return 1.0 / den;
}

// Third-order form: 1 / (A (i w)^3 + B (i w)^2 + C (i w) + D).
inline std::complex<double> eval_transfer3(double a, double b, double c, double d,
                                           double omega) {
    const std::complex<double> den(d - b * omega * omega,
                                   c * omega - a * omega * omega * omega);
    const double scale = std::abs(a) * omega * omega * omega +
                         std::abs(b) * omega * omega + std::abs(c) * omega + std::abs(d);
    if (std::abs(den) < 1e-12 * std::max(scale, 1e-300))
        throw SingularityError("eval_transfer3: denominator vanishes at omega = " +
                               fmt_g(omega));
    return 1.0 / den;
}

// Window that lets the transient die before averaging: 8 time constants of
// the slowest characteristic root, at least two drive periods, then 4 periods
// of averaging.
inline AnalysisWindow settle_window(const LinearParams& p, double omega) {
    if (!(omega > 0.0) || !std::isfinite(omega))
        throw ValidationError("settle_window: omega must be positive");
    auto rep = check_stability(p);
    if (!rep.stable)
        throw NumericError("settle_window: linearization is not stable (A=" + fmt_g(p.A) +
                           " B=" + fmt_g(p.B) + " C=" + fmt_g(p.C) + ")");
    const double re_slow =
        std::max(rep.roots[0].real(), rep.roots[1].real());  // closest to the axis
    const double period = 2.0 * kPi / omega;
    AnalysisWindow w;
    // Repeated roots decay as t e^{lambda t}; 14 time constants push that
    // below 1e-4 of the forced response even before the window averages it.
    w.settle_time = std::max(14.0 / std::abs(re_slow), 2.0 * period);
    w.periods = 4;
    return w;
}

namespace detail {

inline AnalysisWindow settle_window_for(const PlantModel& plant, double omega) {
    double re_slow = -1e300;
    for (auto r : plant.characteristic_roots()) re_slow = std::max(re_slow, r.real());
    if (!(re_slow < 0.0))
        throw NumericError("sweep: plant linearization is not stable");
    const double period = 2.0 * kPi / omega;
    AnalysisWindow w;
    w.settle_time = std::max(14.0 / std::abs(re_slow), 2.0 * period);
    w.periods = 4;
    return w;
}

}  // namespace detail

struct SweepPolicy {
    double amplitude = 1.0;
    int samples_per_period = 256;
    int periods = 4;  // averaging periods after the settle
};

// One settle-and-average harmonic experiment per frequency. Sampling is
// node-aligned with the drive period so the quadrature is spectrally accurate;
// each frequency gets its own noise stream derived from opts.seed.
inline std::vector<FrequencyResponsePoint> sweep_frequency_response(
    const PlantModel& plant, const std::vector<double>& omegas, const SimOptions& opts,
    const SweepPolicy& policy = {}) {
    if (omegas.empty())
        throw ValidationError("sweep: frequency list is empty");
    std::vector<FrequencyResponsePoint> out;
    out.reserve(omegas.size());
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        const double omega = omegas[i];
        if (!(omega > 0.0) || !std::isfinite(omega))
            throw ValidationError("sweep: frequencies must be positive, got " + fmt_g(omega));
        for (std::size_t j = 0; j < i; ++j)
            if (omegas[j] == omega)
                throw ValidationError("sweep: duplicate frequency " + fmt_g(omega));

        const double period = 2.0 * kPi / omega;
        AnalysisWindow win = detail::settle_window_for(plant, omega);
        win.periods = policy.periods;
        SimOptions o = opts;
        o.sample_dt = period / policy.samples_per_period;
        // Settle snapped up to the sample grid keeps the averaging span
        // node-aligned; one extra sample of slack covers the window check.
        win.settle_time = std::ceil(win.settle_time / o.sample_dt) * o.sample_dt;
        o.duration = win.settle_time + win.periods * period + o.sample_dt;
        o.rk_step = 0.0;
        o.seed = opts.seed + 0x9e3779b97f4a7c15ULL * (i + 1);
        const auto spec = SignalSpec::harmonic_omega(policy.amplitude, omega);
        const auto x = simulate(plant, spec, o);
        auto clean = o;
        clean.noise_sigma = 0.0;
        const auto u = generate_signal(spec, clean);
        out.push_back(measured_gain(u, x, omega, win));
    }
    return out;
}

// Log-spaced grid bracketing the plant's natural frequency.
inline std::vector<double> default_frequency_grid(const PlantModel& plant, int n = 24,
                                                  double lo_factor = 0.05,
                                                  double hi_factor = 20.0) {
    if (n < 2) throw ValidationError("frequency grid: need at least 2 points");
    const double slope = plant.f().slope_at_origin();
    const double a = plant.linear_params().A;
    const double w_nat = plant.order() == 2 ? std::sqrt(slope / a) : std::cbrt(slope / a);
    std::vector<double> w(n);
    const double lo = std::log(lo_factor * w_nat), hi = std::log(hi_factor * w_nat);
    for (int i = 0; i < n; ++i)
        w[i] = std::exp(lo + (hi - lo) * i / (n - 1));
    return w;
}

}  // namespace sysid
