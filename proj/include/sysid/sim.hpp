#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/model.hpp"

namespace sysid {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Uniformly sampled scalar record: value k lives at t0 + k*dt.
struct TimeSeries {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
    double end_time() const { return time(values.empty() ? 0 : values.size() - 1); }

    bool same_grid(const TimeSeries& other, double rel_tol = 1e-9) const {
        if (values.size() != other.values.size()) return false;
        const double tol = rel_tol * std::max(dt, other.dt);
        return std::abs(t0 - other.t0) <= tol && std::abs(dt - other.dt) <= tol;
    }

    double interp_linear(double t) const {
        const double s = (t - t0) / dt;
        const auto n = static_cast<std::ptrdiff_t>(values.size());
        auto j = static_cast<std::ptrdiff_t>(std::floor(s));
        j = std::clamp<std::ptrdiff_t>(j, 0, n - 2);
        const double w = std::clamp(s - static_cast<double>(j), 0.0, 1.0);
        return values[j] * (1.0 - w) + values[j + 1] * w;
    }

    // Catmull-Rom through the samples; clamped ends. Smooth enough that a
    // forward model driven by samples tracks one driven by the generator.
    double interp_cubic(double t) const {
        const auto n = static_cast<std::ptrdiff_t>(values.size());
        if (n < 3) return interp_linear(t);
        const double s = (t - t0) / dt;
        auto j = static_cast<std::ptrdiff_t>(std::floor(s));
        j = std::clamp<std::ptrdiff_t>(j, 0, n - 2);
        const double w = std::clamp(s - static_cast<double>(j), 0.0, 1.0);
        // Edge ghosts by quadratic extrapolation keep full accuracy in the
        // first and last cells (a clamped ghost would bias the start of every
        // driven simulation).
        const double p1 = values[j];
        const double p2 = values[j + 1];
        const double p0 = j >= 1 ? values[j - 1]
                                 : 3.0 * values[0] - 3.0 * values[1] + values[2];
        const double p3 = j + 2 <= n - 1
                              ? values[j + 2]
                              : 3.0 * values[n - 1] - 3.0 * values[n - 2] + values[n - 3];
        return p1 + 0.5 * w *
                        (p2 - p0 +
                         w * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                              w * (3.0 * (p1 - p2) + p3 - p0)));
    }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt) || !std::isfinite(t0))
            throw ValidationError("time series: dt must be positive and finite");
        if (values.size() < 2)
            throw ValidationError("time series: need at least 2 samples");
    }
};

enum class SignalKind { step, harmonic, multistep };

struct StepLevel {
    double time;
    double level;
};

// Test input u(t). Optional dither rides on top of step/staircase shapes;
// optional ramp_time turns staircase switches into finite slews.
struct SignalSpec {
    SignalKind kind = SignalKind::step;
    double amplitude = 1.0;
    double frequency = 0.0;  // Hz, harmonic only
    std::vector<StepLevel> levels;
    double dither_amplitude = 0.0;
    double dither_frequency = 0.0;  // Hz
    double ramp_time = 0.0;         // multistep slew duration

    static SignalSpec step_of(double amplitude) {
        SignalSpec s;
        s.kind = SignalKind::step;
        s.amplitude = amplitude;
        return s;
    }
    static SignalSpec harmonic_hz(double amplitude, double hz) {
        SignalSpec s;
        s.kind = SignalKind::harmonic;
        s.amplitude = amplitude;
        s.frequency = hz;
        return s;
    }
    static SignalSpec harmonic_omega(double amplitude, double omega) {
        return harmonic_hz(amplitude, omega / (2.0 * kPi));
    }
    static SignalSpec staircase(std::vector<StepLevel> levels) {
        SignalSpec s;
        s.kind = SignalKind::multistep;
        s.levels = std::move(levels);
        return s;
    }

    void validate() const {
        if (!std::isfinite(amplitude))
            throw ValidationError("signal: non-finite amplitude");
        if (kind == SignalKind::harmonic && !(frequency > 0.0))
            throw ValidationError("signal: harmonic needs frequency > 0");
        if (kind == SignalKind::multistep) {
            if (levels.empty())
                throw ValidationError("signal: multistep needs at least one level");
            for (std::size_t i = 1; i < levels.size(); ++i)
                if (!(levels[i].time > levels[i - 1].time))
                    throw ValidationError("signal: multistep times must be increasing");
        }
        if (dither_amplitude != 0.0 && !(dither_frequency > 0.0))
            throw ValidationError("signal: dither needs a positive frequency");
        if (ramp_time < 0.0)
            throw ValidationError("signal: ramp_time must be >= 0");
    }

    double value(double t) const {
        double u = 0.0;
        switch (kind) {
            case SignalKind::step:
                u = t >= 0.0 ? amplitude : 0.0;
                break;
            case SignalKind::harmonic:
                u = amplitude * std::sin(2.0 * kPi * frequency * t);
                break;
            case SignalKind::multistep: {
                double prev = 0.0;
                for (const auto& lv : levels) {
                    if (t < lv.time) break;
                    if (ramp_time > 0.0 && t < lv.time + ramp_time) {
                        const double w = (t - lv.time) / ramp_time;
                        u = prev + w * (lv.level - prev);
                        return u + dither(t);
                    }
                    prev = lv.level;
                }
                u = prev;
                break;
            }
        }
        return u + dither(t);
    }

  private:
    double dither(double t) const {
        if (dither_amplitude == 0.0) return 0.0;
        return dither_amplitude * std::sin(2.0 * kPi * dither_frequency * t);
    }
};

struct SimOptions {
    double sample_dt = 0.01;
    double duration = 10.0;
    double rk_step = 0.0;  // 0: derive from plant timescale
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sample_dt > 0.0) || !std::isfinite(sample_dt))
            throw ValidationError("sim: sample_dt must be positive");
        if (!(duration >= sample_dt) || !std::isfinite(duration))
            throw ValidationError("sim: duration must cover at least one sample step");
        if (noise_sigma < 0.0 || !std::isfinite(noise_sigma))
            throw ValidationError("sim: noise_sigma must be >= 0");
        if (rk_step < 0.0 || !std::isfinite(rk_step))
            throw ValidationError("sim: rk_step must be >= 0");
    }
};

// Gaussian by Box-Muller over mt19937_64. std::normal_distribution is
// implementation-defined; this keeps seeded runs bitwise reproducible.
class GaussianSampler {
  public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

namespace detail {

// Fixed integrator step for a plant: the spec'd characteristic-period rule
// plus a stiffness guard on the fastest characteristic root.
inline double auto_rk_step(const PlantModel& plant, double sample_dt) {
    const double a = plant.linear_params().A;
    const double slope = std::max(plant.f().slope_at_origin(), 1e-300);
    double t_char;
    if (plant.order() == 2)
        t_char = 2.0 * kPi * std::sqrt(a / slope);
    else
        t_char = 2.0 * kPi * std::cbrt(a / slope);
    double h = std::min(sample_dt, t_char / 50.0);
    double wmax = 0.0;
    for (auto r : plant.characteristic_roots()) wmax = std::max(wmax, std::abs(r));
    if (wmax > 0.0) h = std::min(h, 0.2 / wmax);
    return h;
}

// Number of substeps per sample interval; exact division required when the
// caller pinned rk_step.
inline int substeps_per_sample(const PlantModel& plant, double sample_dt, double rk_step) {
    if (rk_step > 0.0) {
        const double ratio = sample_dt / rk_step;
        const int m = static_cast<int>(std::lround(ratio));
        if (m < 1 || std::abs(ratio - m) > 1e-9 * ratio)
            throw ValidationError("sim: sample_dt must be an integer multiple of rk_step");
        return m;
    }
    const double h = auto_rk_step(plant, sample_dt);
    return static_cast<int>(std::ceil(sample_dt / h - 1e-12));
}

// Classical RK4 over [t0, t0 + n*h] sampling every m-th step. State is
// (x, x') or (x, x', x''); u is any callable of time.
template <class U>
inline std::vector<double> integrate(const PlantModel& plant, const U& u, double h, int m,
                                     std::size_t n_samples) {
    const double a = plant.linear_params().A;
    const double b = plant.linear_params().B;
    const double c = plant.linear_params().C;
    const double inv_a = 1.0 / a;
    const Nonlinearity& f = plant.f();
    const bool third = plant.order() == 3;

    std::vector<double> out;
    out.reserve(n_samples);
    double x = 0.0, v = 0.0, w = 0.0;  // w: x'' (order 3 only)
    double t = 0.0;
    out.push_back(x);
    for (std::size_t k = 1; k < n_samples; ++k) {
        for (int s = 0; s < m; ++s) {
            if (third) {
                auto dw = [&](double tt, double xx, double vv, double ww) {
                    return (u(tt) - b * ww - c * vv - f(xx)) * inv_a;
                };
                const double k1x = v, k1v = w, k1w = dw(t, x, v, w);
                const double k2x = v + 0.5 * h * k1v, k2v = w + 0.5 * h * k1w,
                             k2w = dw(t + 0.5 * h, x + 0.5 * h * k1x, k2x, k2v);
                const double k3x = v + 0.5 * h * k2v, k3v = w + 0.5 * h * k2w,
                             k3w = dw(t + 0.5 * h, x + 0.5 * h * k2x, k3x, k3v);
                const double k4x = v + h * k3v, k4v = w + h * k3w,
                             k4w = dw(t + h, x + h * k3x, k4x, k4v);
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            } else {
                auto dv = [&](double tt, double xx, double vv) {
                    return (u(tt) - b * vv - f(xx)) * inv_a;
                };
                const double k1x = v, k1v = dv(t, x, v);
                const double k2x = v + 0.5 * h * k1v,
                             k2v = dv(t + 0.5 * h, x + 0.5 * h * k1x, k2x);
                const double k3x = v + 0.5 * h * k2v,
                             k3v = dv(t + 0.5 * h, x + 0.5 * h * k2x, k3x);
                const double k4x = v + h * k3v, k4v = dv(t + h, x + h * k3x, k4x);
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            t += h;
        }
        if (!std::isfinite(x) || !std::isfinite(v) || !std::isfinite(w))
            throw DivergenceError("sim: trajectory diverged at t = " + fmt_g(t), t);
        out.push_back(x);
    }
    return out;
}

}  // namespace detail

// Samples the input signal on the sim grid, with the configured output noise
// left off (noise models the output sensor, not the drive).
inline TimeSeries generate_signal(const SignalSpec& spec, const SimOptions& opts) {
    spec.validate();
    opts.validate();
    const auto n = static_cast<std::size_t>(std::floor(opts.duration / opts.sample_dt + 1e-9)) + 1;
    TimeSeries ts;
    ts.t0 = 0.0;
    ts.dt = opts.sample_dt;
    ts.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) ts.values.push_back(spec.value(ts.dt * static_cast<double>(k)));
    return ts;
}

// Integrates the plant from rest under the analytic signal. Noise (if any)
// is added to the sampled output only; the internal state stays clean.
inline TimeSeries simulate(const PlantModel& plant, const SignalSpec& spec,
                           const SimOptions& opts) {
    spec.validate();
    opts.validate();
    const auto n = static_cast<std::size_t>(std::floor(opts.duration / opts.sample_dt + 1e-9)) + 1;
    const int m = detail::substeps_per_sample(plant, opts.sample_dt, opts.rk_step);
    const double h = opts.sample_dt / m;
    TimeSeries ts;
    ts.t0 = 0.0;
    ts.dt = opts.sample_dt;
    ts.values = detail::integrate(plant, [&](double t) { return spec.value(t); }, h, m, n);
    if (opts.noise_sigma > 0.0) {
        GaussianSampler g(opts.seed);
        for (double& v : ts.values) v += opts.noise_sigma * g();
    }
    return ts;
}

// Integrates the plant from rest under a *sampled* drive (cubic interpolation
// between samples). This is the forward model the fits run on: it sees only
// what a data file carries. Always noiseless. Output shares u's grid.
inline TimeSeries simulate_driven(const PlantModel& plant, const TimeSeries& u,
                                  double rk_step = 0.0) {
    u.validate();
    const int m = detail::substeps_per_sample(plant, u.dt, rk_step);
    const double h = u.dt / m;
    TimeSeries ts;
    ts.t0 = u.t0;
    ts.dt = u.dt;
    ts.values = detail::integrate(
        plant, [&](double t) { return u.interp_cubic(u.t0 + t); }, h, m, u.size());
    return ts;
}

// Input-output plane trajectory (u_k, x_k). Both records must share a grid.
inline std::vector<std::pair<double, double>> lissajous(const TimeSeries& u,
                                                        const TimeSeries& x) {
    if (!u.same_grid(x))
        throw GridMismatchError("lissajous: u and x are not on the same time grid");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) pts.emplace_back(u.values[k], x.values[k]);
    return pts;
}

}  // namespace sysid
