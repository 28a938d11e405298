#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sysid/errors.hpp"
#include "sysid/model.hpp"

namespace sysid {

struct FitResult {
    std::vector<double> params;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct MinimizeOptions {
    int max_iterations = 2000;
    // Termination needs both: a small simplex AND a flat objective across it.
    // Either alone stalls (spread alone is zero on a symmetric straddle of
    // the optimum; diameter alone spins on plateaus the shrink step already
    // collapsed).
    double diameter_tol = 1e-9;  // max vertex distance to the best, L-inf
    double spread_tol = 1e-12;   // |f_worst - f_best| relative to |f_best|
    double target = -std::numeric_limits<double>::infinity();  // early exit at or below
    std::vector<double> initial_step;  // per-dimension; empty: 0.1|x| floored at 0.05
    int restarts = 0;  // re-seed a shrunk simplex at the optimum this many times
};

namespace detail {

inline std::string point_to_string(const std::vector<double>& p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ", " : "") + fmt_g(p[i]);
    return s + ")";
}

}  // namespace detail

// Classical Nelder-Mead downhill simplex. Callers that need positivity run it
// in log space; this routine itself is unconstrained.
inline FitResult minimize(const std::function<double(const std::vector<double>&)>& objective,
                          std::vector<double> start, const MinimizeOptions& opts = {}) {
    const std::size_t n = start.size();
    if (n == 0) throw ValidationError("minimize: empty parameter vector");
    if (opts.max_iterations < 1)
        throw ValidationError("minimize: max_iterations must be >= 1");
    if (!opts.initial_step.empty() && opts.initial_step.size() != n)
        throw ValidationError("minimize: initial_step size mismatch");

    auto eval = [&](const std::vector<double>& p) {
        const double v = objective(p);
        if (!std::isfinite(v))
            throw NonFiniteError("minimize: objective is not finite at " +
                                 detail::point_to_string(p));
        return v;
    };

    const double f_start = eval(start);
    if (f_start <= opts.target) return {std::move(start), f_start, 0, true};

    std::vector<std::vector<double>> vx(n + 1, start);
    std::vector<double> fv(n + 1);
    fv[0] = f_start;
    int iterations = 0;
    bool converged = false;

    auto seed_simplex = [&](std::vector<double> at, double shrink) {  // by value: `at` may alias vx[0]
        for (std::size_t i = 0; i <= n; ++i) vx[i] = at;
        for (std::size_t i = 1; i <= n; ++i) {
            const double step = opts.initial_step.empty()
                                    ? std::max(0.1 * std::abs(at[i - 1]), 0.05)
                                    : opts.initial_step[i - 1];
            vx[i][i - 1] += step * shrink;
        }
        fv[0] = eval(vx[0]);
        for (std::size_t i = 1; i <= n; ++i) fv[i] = eval(vx[i]);
    };

    auto order = [&] {
        std::vector<std::size_t> idx(n + 1);
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> vx2;
        std::vector<double> fv2;
        vx2.reserve(n + 1);
        fv2.reserve(n + 1);
        for (auto i : idx) {
            vx2.push_back(std::move(vx[i]));
            fv2.push_back(fv[i]);
        }
        vx = std::move(vx2);
        fv = std::move(fv2);
    };

    for (int round = 0; round <= opts.restarts; ++round) {
        seed_simplex(round == 0 ? start : vx[0], std::pow(0.25, round));
        converged = false;
        while (iterations < opts.max_iterations) {
            ++iterations;
            order();
            if (fv[0] <= opts.target) {
                converged = true;
                break;
            }
            double diam = 0.0;
            for (std::size_t i = 1; i <= n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    diam = std::max(diam, std::abs(vx[i][j] - vx[0][j]));
            const double spread_lim = opts.spread_tol * std::max(1.0, std::abs(fv[0]));
            if (diam < opts.diameter_tol && std::abs(fv[n] - fv[0]) <= spread_lim) {
                converged = true;
                break;
            }

            std::vector<double> centroid(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) centroid[j] += vx[i][j];
            }
            for (double& c : centroid) c /= static_cast<double>(n);

            auto at = [&](double coef) {
                std::vector<double> p(n);
                for (std::size_t j = 0; j < n; ++j)
                    p[j] = centroid[j] + coef * (vx[n][j] - centroid[j]);
                return p;
            };

            auto refl = at(-1.0);
            const double f_refl = eval(refl);
            if (f_refl < fv[0]) {
                auto expd = at(-2.0);
                const double f_expd = eval(expd);
                if (f_expd < f_refl) {
                    vx[n] = std::move(expd);
                    fv[n] = f_expd;
                } else {
                    vx[n] = std::move(refl);
                    fv[n] = f_refl;
                }
                continue;
            }
            if (f_refl < fv[n - 1]) {
                vx[n] = std::move(refl);
                fv[n] = f_refl;
                continue;
            }
            auto contr = at(f_refl < fv[n] ? -0.5 : 0.5);
            const double f_contr = eval(contr);
            if (f_contr < std::min(f_refl, fv[n])) {
                vx[n] = std::move(contr);
                fv[n] = f_contr;
                continue;
            }
            // total shrink toward the best vertex
            for (std::size_t i = 1; i <= n; ++i) {
                for (std::size_t j = 0; j < n; ++j)
                    vx[i][j] = vx[0][j] + 0.5 * (vx[i][j] - vx[0][j]);
                fv[i] = eval(vx[i]);
            }
        }
        order();
        if (!converged) break;  // iteration budget exhausted: stop restarting
    }
    return {vx[0], fv[0], iterations, converged};
}

}  // namespace sysid
