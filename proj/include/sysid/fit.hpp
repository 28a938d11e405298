#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/harmonic.hpp"
#include "sysid/linalg.hpp"
#include "sysid/model.hpp"
#include "sysid/nelder_mead.hpp"
#include "sysid/sim.hpp"

namespace sysid {

// Fitted parameters failed the plant invariants.
struct InstabilityError : NumericError {
    LinearParams raw;
    InstabilityError(const std::string& msg, LinearParams p) : NumericError(msg), raw(p) {}
};

// Search ran out of iterations; best holds the point it reached.
struct NonConvergenceError : NumericError {
    FitResult best;
    NonConvergenceError(const std::string& msg, FitResult r)
        : NumericError(msg), best(std::move(r)) {}
};

struct ThirdOrderParams {
    double A = 1.0, B = 1.0, C = 1.0, D = 1.0;  // A s^3 + B s^2 + C s + D
};

// Time interval a time-domain fit scores residuals on.
struct FitWindow {
    double tau1 = 0.0;
    double tau2 = std::numeric_limits<double>::infinity();

    void validate() const {
        if (!(tau1 >= 0.0) || std::isnan(tau2) || !(tau2 > tau1))
            throw ValidationError("fit window: need 0 <= tau1 < tau2");
    }

    // Sample index range [k0, k1] of the window on a grid.
    std::pair<std::size_t, std::size_t> clamp_to(const TimeSeries& ts) const {
        validate();
        const double lo = std::max(tau1, ts.t0);
        const double hi = std::min(tau2, ts.end_time());
        const auto k0 = static_cast<std::ptrdiff_t>(std::ceil((lo - ts.t0) / ts.dt - 1e-9));
        const auto k1 = static_cast<std::ptrdiff_t>(std::floor((hi - ts.t0) / ts.dt + 1e-9));
        if (k0 > k1 || k1 < 0 || k0 >= static_cast<std::ptrdiff_t>(ts.size()))
            throw InsufficientDataError("fit window: [" + fmt_g(tau1) + ", " + fmt_g(tau2) +
                                        "] contains no samples");
        return {static_cast<std::size_t>(std::max<std::ptrdiff_t>(k0, 0)),
                static_cast<std::size_t>(
                    std::min<std::ptrdiff_t>(k1, static_cast<std::ptrdiff_t>(ts.size()) - 1))};
    }
};

namespace detail {

inline void check_response_points(const std::vector<FrequencyResponsePoint>& pts,
                                  std::size_t need) {
    if (pts.size() < need)
        throw InsufficientDataError("frequency fit: need at least " + std::to_string(need) +
                                    " points, got " + std::to_string(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        if (!(p.omega > 0.0) || !std::isfinite(p.omega))
            throw ValidationError("frequency fit: omega must be positive and finite");
        if (!std::isfinite(p.gain.real()) || !std::isfinite(p.gain.imag()) ||
            std::abs(p.gain) == 0.0)
            throw ValidationError("frequency fit: gain must be finite and nonzero at omega = " +
                                  fmt_g(p.omega));
        for (std::size_t j = 0; j < i; ++j)
            if (pts[j].omega == p.omega)
                throw ValidationError("frequency fit: duplicate frequency " + fmt_g(p.omega));
    }
}

// Sum of squared gain deviations, the frequency-domain objective.
inline double gain_sse(const LinearParams& p, const std::vector<FrequencyResponsePoint>& pts) {
    double s = 0.0;
    for (const auto& pt : pts) s += std::norm(eval_transfer(p, pt.omega) - pt.gain);
    return s;
}

inline double gain_sse3(const ThirdOrderParams& p,
                        const std::vector<FrequencyResponsePoint>& pts) {
    double s = 0.0;
    for (const auto& pt : pts)
        s += std::norm(eval_transfer3(p.A, p.B, p.C, p.D, pt.omega) - pt.gain);
    return s;
}

inline double positive_or(double v, double fallback) {
    return v > 0.0 && std::isfinite(v) ? v : fallback;
}

}  // namespace detail

// Fits K(iw) = 1/(-A w^2 + i B w + C) to measured gains. Linear least squares
// on the inverse gain seeds a simplex refinement of the direct objective
// (the two differ under noise: inversion reweights errors by |K|^-2).
inline LinearParams fit_linear_freq(const std::vector<FrequencyResponsePoint>& pts) {
    detail::check_response_points(pts, 2);

    linalg::NormalEquations ne(3);
    for (const auto& pt : pts) {
        const std::complex<double> inv = 1.0 / pt.gain;
        const double w = pt.omega;
        const double row_re[3] = {-w * w, 0.0, 1.0};
        const double row_im[3] = {0.0, w, 0.0};
        ne.add_row(row_re, inv.real());
        ne.add_row(row_im, inv.imag());
    }
    const auto seed = ne.solve();

    // Typical inverse-gain magnitude sets the scale for clamping a noisy
    // seed into the positive orthant.
    double ref = 0.0;
    for (const auto& pt : pts) ref = std::max(ref, std::abs(1.0 / pt.gain));
    const double wmax = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                            return a.omega < b.omega;
                        })->omega;
    std::vector<double> start = {
        std::log(detail::positive_or(seed[0], 1e-3 * ref / (wmax * wmax))),
        std::log(detail::positive_or(seed[1], 1e-3 * ref / wmax)),
        std::log(detail::positive_or(seed[2], 1e-3 * ref)),
    };

    MinimizeOptions mo;
    mo.max_iterations = 4000;
    mo.target = 0.0;
    auto res = minimize(
        [&](const std::vector<double>& q) {
            const LinearParams p{std::exp(q[0]), std::exp(q[1]), std::exp(q[2])};
            return detail::gain_sse(p, pts);
        },
        std::move(start), mo);
    if (!res.converged)
        throw NonConvergenceError("fit_linear_freq: simplex did not converge in " +
                                      std::to_string(res.iterations) + " iterations",
                                  res);
    const LinearParams fitted{std::exp(res.params[0]), std::exp(res.params[1]),
                              std::exp(res.params[2])};
    if (!check_stability(fitted).stable)
        throw InstabilityError("fit_linear_freq: fitted parameters are not stable", fitted);
    return fitted;
}

// Third-order analog: 1/K = A (iw)^3 + B (iw)^2 + C (iw) + D.
inline ThirdOrderParams fit_linear_freq_third_order(
    const std::vector<FrequencyResponsePoint>& pts) {
    detail::check_response_points(pts, 2);

    linalg::NormalEquations ne(4);
    for (const auto& pt : pts) {
        const std::complex<double> inv = 1.0 / pt.gain;
        const double w = pt.omega;
        const double row_re[4] = {0.0, -w * w, 0.0, 1.0};
        const double row_im[4] = {-w * w * w, 0.0, w, 0.0};
        ne.add_row(row_re, inv.real());
        ne.add_row(row_im, inv.imag());
    }
    const auto seed = ne.solve();

    double ref = 0.0;
    for (const auto& pt : pts) ref = std::max(ref, std::abs(1.0 / pt.gain));
    const double wmax = std::max_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
                            return a.omega < b.omega;
                        })->omega;
    std::vector<double> start = {
        std::log(detail::positive_or(seed[0], 1e-3 * ref / (wmax * wmax * wmax))),
        std::log(detail::positive_or(seed[1], 1e-3 * ref / (wmax * wmax))),
        std::log(detail::positive_or(seed[2], 1e-3 * ref / wmax)),
        std::log(detail::positive_or(seed[3], 1e-3 * ref)),
    };

    MinimizeOptions mo;
    mo.max_iterations = 6000;
    mo.target = 0.0;
    auto res = minimize(
        [&](const std::vector<double>& q) {
            const ThirdOrderParams p{std::exp(q[0]), std::exp(q[1]), std::exp(q[2]),
                                     std::exp(q[3])};
            return detail::gain_sse3(p, pts);
        },
        std::move(start), mo);
    if (!res.converged)
        throw NonConvergenceError("fit_linear_freq_third_order: simplex did not converge",
                                  res);
    return {std::exp(res.params[0]), std::exp(res.params[1]), std::exp(res.params[2]),
            std::exp(res.params[3])};
}

struct MonotoneFitOptions {
    int n_coeffs = 4;        // odd powers x..x^7
    double x_max = 0.0;      // 0: widest |x| in the data
    double mono_eps = -1.0;  // <0: 1e-6 of the fitted origin slope
};

// Least-squares odd polynomial through (x, y) scatter, constrained to be
// monotone on [-x_max, x_max]. The unconstrained solution is returned
// untouched whenever it already clears the slope floor on the grid.
// Otherwise the quadratic program min ||Ac - y||^2 s.t. slope(g) >= target
// at every grid point is solved in its dual by cyclic coordinate ascent
// (Hildreth): one multiplier per grid point, nudged one at a time. The dual
// is a bound-constrained strictly convex QP, so the sweeps converge to the
// exact constrained optimum; a floor is accepted only once the candidate
// coefficients clear it on the grid. Interior floor contacts of the even
// slope polynomial are tangencies, which single-point equality pinning
// cannot represent; the dual ascent sidesteps that entirely.
inline Nonlinearity fit_monotone(const std::vector<std::pair<double, double>>& pairs,
                                 const MonotoneFitOptions& opts = {}) {
    if (opts.n_coeffs < 1 || opts.n_coeffs > Nonlinearity::kMaxTerms)
        throw ValidationError("fit_monotone: n_coeffs must be 1..4");
    if (pairs.size() < static_cast<std::size_t>(opts.n_coeffs))
        throw InsufficientDataError("fit_monotone: " + std::to_string(pairs.size()) +
                                    " pairs cannot determine " + std::to_string(opts.n_coeffs) +
                                    " coefficients");
    const int n = opts.n_coeffs;

    double lo = pairs[0].first, hi = pairs[0].first, y_scale = 0.0;
    for (const auto& [x, y] : pairs) {
        if (!std::isfinite(x) || !std::isfinite(y))
            throw ValidationError("fit_monotone: non-finite data pair");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        y_scale = std::max(y_scale, std::abs(y));
    }
    const double x_max =
        opts.x_max > 0.0 ? opts.x_max : std::max(std::abs(lo), std::abs(hi));
    if (!(x_max > 0.0))
        throw InsufficientDataError("fit_monotone: data has no spread in x");
    if (hi - lo < 0.1 * x_max)
        throw InsufficientDataError("fit_monotone: x span " + fmt_g(hi - lo) +
                                    " covers under 10% of the range " + fmt_g(x_max));

    auto basis_row = [&](double x, double* row) {
        double p = x;
        for (int i = 0; i < n; ++i, p *= x * x) row[i] = p;
    };
    auto slope_row = [&](double x, double* row) {
        double p = 1.0;
        for (int i = 0; i < n; ++i, p *= x * x) row[i] = (2 * i + 1) * p;
    };

    std::vector<double> grid(Nonlinearity::kMonoGrid);
    for (int j = 0; j < Nonlinearity::kMonoGrid; ++j)
        grid[j] = -x_max + 2.0 * x_max * j / (Nonlinearity::kMonoGrid - 1);

    auto eps_of = [&](const std::vector<double>& c) {
        if (opts.mono_eps >= 0.0) return opts.mono_eps;
        const double c1 = c.empty() ? 0.0 : c[0];
        return 1e-6 * std::max(c1, 1e-3 * y_scale / x_max);
    };

    // Unconstrained normal equations, accumulated once.
    std::vector<double> ata(n * n, 0.0), atb(n, 0.0);
    {
        double row[Nonlinearity::kMaxTerms];
        for (const auto& [x, y] : pairs) {
            basis_row(x, row);
            for (int i = 0; i < n; ++i) {
                atb[i] += row[i] * y;
                for (int j = 0; j < n; ++j) ata[i * n + j] += row[i] * row[j];
            }
        }
    }
    auto slope_at = [&](const std::vector<double>& c, double x) {
        double row[Nonlinearity::kMaxTerms];
        slope_row(x, row);
        double d = 0.0;
        for (int i = 0; i < n; ++i) d += row[i] * c[i];
        return d;
    };
    auto grid_min_of = [&](const std::vector<double>& c) {
        double lo = std::numeric_limits<double>::infinity();
        for (double g : grid) lo = std::min(lo, slope_at(c, g));
        return lo;
    };
    // The floor the returned object will be validated against.
    auto floor_needed = [&](const std::vector<double>& c) {
        return opts.mono_eps >= 0.0 ? opts.mono_eps : 1e-6 * c[0];
    };

    std::vector<double> coeffs =
        linalg::solve(std::vector<double>(ata), std::vector<double>(atb));
    double grid_min = grid_min_of(coeffs);
    if (grid_min >= std::max(eps_of(coeffs), floor_needed(coeffs)))
        return Nonlinearity::odd_poly(coeffs, x_max,
                                      opts.mono_eps >= 0.0 ? opts.mono_eps : -1.0);

    const int m = Nonlinearity::kMonoGrid;
    // (A^T A)^{-1}, for rank-one updates of c as multipliers move.
    std::vector<double> minv(n * n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        auto col = linalg::solve(std::vector<double>(ata), std::move(e));
        for (int i = 0; i < n; ++i) minv[i * n + j] = col[i];
    }
    std::vector<double> srow(m * n), msrow(m * n), diag(m);
    for (int a = 0; a < m; ++a) {
        slope_row(grid[a], &srow[a * n]);
        double d = 0.0;
        for (int i = 0; i < n; ++i) {
            double v = 0.0;
            for (int j = 0; j < n; ++j) v += minv[i * n + j] * srow[a * n + j];
            msrow[a * n + i] = v;
            d += srow[a * n + i] * v;
        }
        diag[a] = d;
    }

    double yty = 0.0;
    for (const auto& [x, y] : pairs) yty += y * y;
    const double slack_tol = 1e-9 * (1.0 + yty);

    std::vector<double> lambda(m, 0.0);
    double floor_req = eps_of(coeffs);
    for (int attempt = 0;; ++attempt) {
        const double target = 2.0 * floor_req;
        bool done = false;
        for (int sweep = 0; sweep < 200000 && !done; ++sweep) {
            for (int a = 0; a < m; ++a) {
                if (!(diag[a] > 0.0)) continue;
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += srow[a * n + i] * coeffs[i];
                const double step = std::max(-lambda[a], (target - s) / diag[a]);
                if (step == 0.0) continue;
                lambda[a] += step;
                for (int i = 0; i < n; ++i) coeffs[i] += step * msrow[a * n + i];
            }
            // Converged once feasible and complementary slackness holds:
            // every multiplier rides a constraint sitting on the target.
            grid_min = std::numeric_limits<double>::infinity();
            double slack = 0.0;
            for (int a = 0; a < m; ++a) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += srow[a * n + i] * coeffs[i];
                grid_min = std::min(grid_min, s);
                slack = std::max(slack, std::abs(lambda[a] * (s - target)));
            }
            done = grid_min >= floor_req && slack <= slack_tol;
        }
        if (grid_min < floor_req || attempt >= 4)
            throw NumericError("fit_monotone: monotonicity constraint failed to converge "
                               "(min slope " +
                               fmt_g(grid_min) + ")");
        if (grid_min >= floor_needed(coeffs)) break;
        // The fitted origin slope grew past the working floor; retighten.
        // Multipliers stay valid as a warm start under a raised target.
        floor_req = 2.0 * floor_needed(coeffs);
    }
    return Nonlinearity::odd_poly(coeffs, x_max,
                                  opts.mono_eps >= 0.0 ? opts.mono_eps : -1.0);
}

struct TimeDomainFit {
    double A = 0.0, B = 0.0;
    Nonlinearity f = Nonlinearity::odd_poly_raw({1.0}, 1.0);
    FitResult diag;
};

struct RefitResult {
    double A = 0.0, B = 0.0;
    FitResult diag;
};

struct RefitResult3 {
    double A = 0.0, B = 0.0, C = 0.0;
    FitResult diag;
};

namespace detail {

struct TimeFitProblem {
    const TimeSeries& u;
    const TimeSeries& x;
    std::size_t k0, k1;
    double rk_step;

    static TimeFitProblem make(const TimeSeries& u, const TimeSeries& x,
                               const FitWindow& window, double rk_step) {
        u.validate();
        if (!u.same_grid(x))
            throw GridMismatchError("time-domain fit: u and x are not on the same grid");
        auto [k0, k1] = window.clamp_to(x);
        return {u, x, k0, k1, rk_step};
    }

    // A candidate whose fastest root needs more than this many integrator
    // substeps per sample is unresolvable by the data grid anyway; treating it
    // as divergent bounds the cost of an objective evaluation, which otherwise
    // grows without limit as a search walks into the stiff corner of an
    // unidentifiable direction.
    static constexpr int kMaxSubsteps = 256;

    // SSE of the candidate against the measured output; divergence of a bad
    // candidate is a large finite value so the simplex can walk away from it.
    double operator()(const PlantModel& candidate) const {
        try {
            if (rk_step <= 0.0 && substeps_per_sample(candidate, u.dt, 0.0) > kMaxSubsteps)
                return 1e100;
            const TimeSeries xm = simulate_driven(candidate, u, rk_step);
            double s = 0.0;
            for (std::size_t k = k0; k <= k1; ++k) {
                const double d = x.values[k] - xm.values[k];
                s += d * d;
            }
            return s;
        } catch (const DivergenceError&) {
            return 1e100;
        }
    }
};

}  // namespace detail

// Joint search over (A, B, f-coefficients) minimizing the output SSE of the
// forward model. A, B, c1 move in log space; higher coefficients are signed.
inline TimeDomainFit fit_time_domain(const TimeSeries& u, const TimeSeries& x,
                                     const Nonlinearity& f_start, const FitWindow& window,
                                     double a_start, double b_start,
                                     const MinimizeOptions& options = {}) {
    auto prob = detail::TimeFitProblem::make(u, x, window, 0.0);
    if (!(a_start > 0.0) || !(b_start > 0.0) || !(f_start.slope_at_origin() > 0.0))
        throw ValidationError("fit_time_domain: start must have positive A, B, c1");
    const int nt = f_start.n_terms();
    const double x_max = f_start.x_max();

    std::vector<double> start = {std::log(a_start), std::log(b_start),
                                 std::log(f_start.slope_at_origin())};
    for (int i = 1; i < nt; ++i) start.push_back(f_start.coeffs()[i]);

    auto unpack = [&](const std::vector<double>& q) {
        std::vector<double> c = {std::exp(q[2])};
        for (int i = 1; i < nt; ++i) c.push_back(q[2 + i]);
        return PlantModel::raw(2, {std::exp(q[0]), std::exp(q[1]), c[0]},
                               Nonlinearity::odd_poly_raw(c, x_max));
    };

    MinimizeOptions mo = options;
    if (mo.max_iterations == MinimizeOptions{}.max_iterations) mo.max_iterations = 4000;
    mo.target = std::max(mo.target, 0.0);
    if (mo.initial_step.empty()) {
        mo.initial_step.assign(start.size(), 0.25);
        const double c1 = f_start.slope_at_origin();
        for (int i = 1; i < nt; ++i)
            mo.initial_step[2 + i] = std::max(0.5 * std::abs(start[2 + i]),
                                              0.2 * c1 / std::pow(x_max, 2.0 * i));
    }

    auto res = minimize([&](const std::vector<double>& q) { return prob(unpack(q)); },
                        std::move(start), mo);
    if (!res.converged)
        throw NonConvergenceError("fit_time_domain: simplex did not converge in " +
                                      std::to_string(res.iterations) + " iterations",
                                  res);
    const PlantModel best = unpack(res.params);
    TimeDomainFit out;
    out.A = best.linear_params().A;
    out.B = best.linear_params().B;
    out.f = Nonlinearity::odd_poly(best.f().coeff_vector(), x_max);
    out.diag = std::move(res);
    return out;
}

// Re-estimates (A, B) only, holding the static curve fixed.
inline RefitResult refit_ab(const TimeSeries& u, const TimeSeries& x, const Nonlinearity& f,
                            const FitWindow& window, double a_start, double b_start,
                            double rk_step = 0.0, const MinimizeOptions& options = {}) {
    auto prob = detail::TimeFitProblem::make(u, x, window, rk_step);
    if (!(a_start > 0.0) || !(b_start > 0.0))
        throw ValidationError("refit_ab: start must have positive A, B");

    MinimizeOptions mo = options;
    mo.target = std::max(mo.target, 0.0);
    if (mo.initial_step.empty()) mo.initial_step.assign(2, 0.2);
    auto res = minimize(
        [&](const std::vector<double>& q) {
            return prob(PlantModel::raw(
                2, {std::exp(q[0]), std::exp(q[1]), f.slope_at_origin()}, f));
        },
        {std::log(a_start), std::log(b_start)}, mo);
    if (!res.converged)
        throw NonConvergenceError("refit_ab: simplex did not converge", res);
    return {std::exp(res.params[0]), std::exp(res.params[1]), std::move(res)};
}

// Third-order variant: re-estimates (A, B, C) with f fixed.
inline RefitResult3 refit_abc(const TimeSeries& u, const TimeSeries& x, const Nonlinearity& f,
                              const FitWindow& window, double a_start, double b_start,
                              double c_start, double rk_step = 0.0,
                              const MinimizeOptions& options = {}) {
    auto prob = detail::TimeFitProblem::make(u, x, window, rk_step);
    if (!(a_start > 0.0) || !(b_start > 0.0) || !(c_start > 0.0))
        throw ValidationError("refit_abc: start must have positive A, B, C");

    MinimizeOptions mo = options;
    mo.target = std::max(mo.target, 0.0);
    if (mo.initial_step.empty()) mo.initial_step.assign(3, 0.2);
    auto res = minimize(
        [&](const std::vector<double>& q) {
            return prob(PlantModel::raw(
                3, {std::exp(q[0]), std::exp(q[1]), std::exp(q[2])}, f));
        },
        {std::log(a_start), std::log(b_start), std::log(c_start)}, mo);
    if (!res.converged)
        throw NonConvergenceError("refit_abc: simplex did not converge", res);
    return {std::exp(res.params[0]), std::exp(res.params[1]), std::exp(res.params[2]),
            std::move(res)};
}

}  // namespace sysid
