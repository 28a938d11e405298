#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "sysid/fit.hpp"
#include "test_helpers.hpp"

using namespace sysid;
using Catch::Approx;

namespace {

std::vector<FrequencyResponsePoint> exact_points(const LinearParams& p,
                                                 const std::vector<double>& omegas) {
    std::vector<FrequencyResponsePoint> pts;
    for (double w : omegas)
        pts.push_back(FrequencyResponsePoint::from_gain(w, eval_transfer(p, w)));
    return pts;
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
        w[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
    return w;
}

}  // namespace

TEST_CASE("simplex minimizer", "[fit]") {
    SECTION("1-d quadratic") {
        auto res = minimize([](const std::vector<double>& p) {
            return (p[0] - 3.0) * (p[0] - 3.0) + 2.0;
        }, {0.0});
        REQUIRE(res.converged);
        REQUIRE(res.params[0] == Approx(3.0).margin(1e-7));
        REQUIRE(res.objective == Approx(2.0).margin(1e-12));
        REQUIRE(res.iterations > 0);
    }
    SECTION("Rosenbrock valley from the classic start") {
        auto rosen = [](const std::vector<double>& p) {
            const double a = 1.0 - p[0], b = p[1] - p[0] * p[0];
            return a * a + 100.0 * b * b;
        };
        auto res = minimize(rosen, {-1.2, 1.0});
        REQUIRE(res.converged);
        REQUIRE(res.params[0] == Approx(1.0).margin(1e-4));
        REQUIRE(res.params[1] == Approx(1.0).margin(1e-4));
    }
    SECTION("objective already at the target returns the start untouched") {
        MinimizeOptions o;
        o.target = 0.0;
        int calls = 0;
        auto res = minimize([&](const std::vector<double>& p) {
            ++calls;
            return (p[0] - 1.0) * (p[0] - 1.0);
        }, {1.0}, o);
        REQUIRE(res.converged);
        REQUIRE(res.iterations == 0);
        REQUIRE(calls == 1);
        REQUIRE(res.params[0] == 1.0);
    }
    SECTION("minimum at the start point is rediscovered") {
        auto res = minimize([](const std::vector<double>& p) {
            return p[0] * p[0] + p[1] * p[1];
        }, {0.0, 0.0});
        REQUIRE(res.converged);
        REQUIRE(std::abs(res.params[0]) < 1e-7);
        REQUIRE(std::abs(res.params[1]) < 1e-7);
    }
    SECTION("iteration budget exhaustion is reported, not hidden") {
        MinimizeOptions o;
        o.max_iterations = 4;
        auto res = minimize([](const std::vector<double>& p) {
            const double a = 1.0 - p[0], b = p[1] - p[0] * p[0];
            return a * a + 100.0 * b * b;
        }, {-1.2, 1.0}, o);
        REQUIRE_FALSE(res.converged);
        REQUIRE(res.iterations == 4);
    }
    SECTION("non-finite objective aborts with the offending point named") {
        try {
            minimize([](const std::vector<double>& p) { return std::sqrt(p[0]); }, {-2.0});
            FAIL("expected NonFiniteError");
        } catch (const NonFiniteError& e) {
            REQUIRE(std::string(e.what()).find("-2") != std::string::npos);
        }
    }
    SECTION("argument validation") {
        auto f = [](const std::vector<double>&) { return 0.0; };
        REQUIRE_THROWS_AS(minimize(f, {}), ValidationError);
        MinimizeOptions o;
        o.initial_step = {0.1, 0.1};
        REQUIRE_THROWS_AS(minimize(f, {1.0}, o), ValidationError);
    }
    SECTION("restarts polish a rough tolerance") {
        MinimizeOptions rough;
        rough.diameter_tol = 1e-3;
        MinimizeOptions polished = rough;
        polished.restarts = 2;
        auto banana = [](const std::vector<double>& p) {
            const double a = 1.0 - p[0], b = p[1] - p[0] * p[0];
            return a * a + 100.0 * b * b;
        };
        auto r1 = minimize(banana, {-1.2, 1.0}, rough);
        auto r2 = minimize(banana, {-1.2, 1.0}, polished);
        REQUIRE(r2.objective <= r1.objective);
    }
}

TEST_CASE("frequency-domain linear fit", "[fit]") {
    const LinearParams truth{1.0, 2.0, 1.0};

    SECTION("exact recovery from 2, 3, and 8 points") {
        for (int n : {2, 3, 8}) {
            auto pts = exact_points(truth, log_grid(0.2, 5.0, n));
            auto p = fit_linear_freq(pts);
            REQUIRE(p.A == Approx(1.0).epsilon(1e-6));
            REQUIRE(p.B == Approx(2.0).epsilon(1e-6));
            REQUIRE(p.C == Approx(1.0).epsilon(1e-6));
        }
    }
    SECTION("exact recovery of a second parameter set") {
        auto pts = exact_points({0.5, 1.3, 2.0}, log_grid(0.3, 8.0, 8));
        auto p = fit_linear_freq(pts);
        REQUIRE(p.A == Approx(0.5).epsilon(1e-6));
        REQUIRE(p.B == Approx(1.3).epsilon(1e-6));
        REQUIRE(p.C == Approx(2.0).epsilon(1e-6));
    }
    SECTION("one point is not enough") {
        auto pts = exact_points(truth, {1.0});
        REQUIRE_THROWS_AS(fit_linear_freq(pts), InsufficientDataError);
    }
    SECTION("duplicate frequencies are rejected") {
        auto pts = exact_points(truth, {1.0, 2.0});
        pts.push_back(pts[0]);
        REQUIRE_THROWS_AS(fit_linear_freq(pts), ValidationError);
    }
    SECTION("zero gain is rejected") {
        auto pts = exact_points(truth, {1.0, 2.0});
        pts[1].gain = 0.0;
        REQUIRE_THROWS_AS(fit_linear_freq(pts), ValidationError);
    }
    SECTION("parameter scaling follows gain scaling") {
        auto pts = exact_points(truth, log_grid(0.2, 5.0, 6));
        for (auto& pt : pts) pt = FrequencyResponsePoint::from_gain(pt.omega, pt.gain / 4.0);
        auto p = fit_linear_freq(pts);
        REQUIRE(p.A == Approx(4.0).epsilon(1e-5));
        REQUIRE(p.B == Approx(8.0).epsilon(1e-5));
        REQUIRE(p.C == Approx(4.0).epsilon(1e-5));
    }
    SECTION("one noisy draw lands near the truth") {
        std::mt19937_64 rng(11);
        GaussianSampler g(11);
        auto pts = exact_points(truth, log_grid(0.2, 5.0, 8));
        for (auto& pt : pts) {
            const auto noisy =
                pt.gain * (1.0 + 0.01 * std::complex<double>(g(), g()));
            pt = FrequencyResponsePoint::from_gain(pt.omega, noisy);
        }
        auto p = fit_linear_freq(pts);
        REQUIRE(testutil::rel_err(p.A, 1.0) < 0.1);
        REQUIRE(testutil::rel_err(p.B, 2.0) < 0.1);
        REQUIRE(testutil::rel_err(p.C, 1.0) < 0.1);
    }
}

TEST_CASE("third-order frequency fit", "[fit]") {
    const double A = 0.1, B = 1.0, C = 2.0, D = 1.0;
    std::vector<FrequencyResponsePoint> pts;
    for (double w : log_grid(0.2, 8.0, 8))
        pts.push_back(FrequencyResponsePoint::from_gain(w, eval_transfer3(A, B, C, D, w)));
    auto p = fit_linear_freq_third_order(pts);
    REQUIRE(p.A == Approx(A).epsilon(1e-6));
    REQUIRE(p.B == Approx(B).epsilon(1e-6));
    REQUIRE(p.C == Approx(C).epsilon(1e-6));
    REQUIRE(p.D == Approx(D).epsilon(1e-6));
}

TEST_CASE("monotone static fit", "[fit]") {
    SECTION("plain linear data is fit exactly and left unconstrained") {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 50; ++i) {
            const double x = -1.0 + 2.0 * i / 50.0;
            pairs.emplace_back(x, 2.0 * x);
        }
        auto f = fit_monotone(pairs);
        REQUIRE(f.slope_at_origin() == Approx(2.0).margin(1e-10));
        for (int i = 1; i < 4; ++i) REQUIRE(std::abs(f.coeffs()[i]) < 1e-9);
    }
    SECTION("cubic data recovers its coefficients") {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 80; ++i) {
            const double x = -1.5 + 3.0 * i / 80.0;
            pairs.emplace_back(x, x + 0.1 * x * x * x);
        }
        MonotoneFitOptions o;
        o.n_coeffs = 2;
        auto f = fit_monotone(pairs, o);
        REQUIRE(f.slope_at_origin() == Approx(1.0).margin(1e-8));
        REQUIRE(f.coeffs()[1] == Approx(0.1).margin(1e-8));
    }
    SECTION("downward-bending data is pushed back to monotone") {
        // y = x - 0.5 x^3 decreases beyond x ~ 0.82; the fit must not.
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 100; ++i) {
            const double x = -1.5 + 3.0 * i / 100.0;
            pairs.emplace_back(x, x - 0.5 * x * x * x);
        }
        auto f = fit_monotone(pairs);
        REQUIRE(f.grid_min_slope() >= f.mono_eps());
        // and it should still track the data where the data is sane
        REQUIRE(f(0.3) == Approx(0.3 - 0.5 * 0.027).margin(0.1));
    }
    SECTION("noisy scatter stays monotone") {
        GaussianSampler g(3);
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 2000; ++i) {
            const double x = -1.2 + 2.4 * i / 2000.0;
            pairs.emplace_back(x, x + 0.1 * x * x * x + 0.02 * g());
        }
        auto f = fit_monotone(pairs);
        REQUIRE(f.grid_min_slope() >= f.mono_eps());
        REQUIRE(f.slope_at_origin() == Approx(1.0).epsilon(0.05));
    }
    SECTION("matches an unconstrained least squares on monotone data") {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 60; ++i) {
            const double x = -1.0 + 2.0 * i / 60.0;
            pairs.emplace_back(x, 1.5 * x + 0.05 * std::pow(x, 5));
        }
        linalg::NormalEquations ne(4);
        for (auto [x, y] : pairs) {
            double row[4] = {x, x * x * x, std::pow(x, 5), std::pow(x, 7)};
            ne.add_row(row, y);
        }
        auto direct = ne.solve();
        auto f = fit_monotone(pairs);
        for (int i = 0; i < 4; ++i)
            REQUIRE(f.coeffs()[i] == Approx(direct[i]).margin(1e-10));
    }
    SECTION("too few pairs") {
        std::vector<std::pair<double, double>> pairs = {{-1.0, -1.0}, {0.5, 0.5}, {1.0, 1.0}};
        REQUIRE_THROWS_AS(fit_monotone(pairs), InsufficientDataError);
        MonotoneFitOptions o;
        o.n_coeffs = 2;
        REQUIRE_NOTHROW(fit_monotone(pairs, o));
    }
    SECTION("degenerate abscissae cannot separate the basis") {
        // x in {-1, 0, 1} makes x and x^3 identical columns
        std::vector<std::pair<double, double>> pairs = {{-1.0, -1.0}, {0.0, 0.0}, {1.0, 1.0}};
        MonotoneFitOptions o;
        o.n_coeffs = 2;
        REQUIRE_THROWS_AS(fit_monotone(pairs, o), InsufficientDataError);
    }
    SECTION("x span below 10% of the range") {
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i <= 20; ++i) pairs.emplace_back(1.0 + 0.001 * i, 1.0 + 0.001 * i);
        MonotoneFitOptions o;
        o.n_coeffs = 1;
        o.x_max = 1.5;
        REQUIRE_THROWS_AS(fit_monotone(pairs, o), InsufficientDataError);
    }
}

TEST_CASE("time-domain joint fit", "[fit]") {
    auto truth = PlantModel::quasilinear(1.0, 2.0, Nonlinearity::odd_poly({1.0, 0.1}, 1.6));
    auto recipe = testutil::dss_recipe(truth);
    auto u = testutil::recipe_input(recipe);
    auto x = simulate(truth, recipe.spec, recipe.opts);

    SECTION("recovers all four parameters from a clean record") {
        auto start = Nonlinearity::odd_poly_raw({1.0, 0.0}, 1.6);
        auto fit = fit_time_domain(u, x, start, {}, 1.5, 1.5);
        REQUIRE(testutil::rel_err(fit.A, 1.0) < 0.01);
        REQUIRE(testutil::rel_err(fit.B, 2.0) < 0.01);
        REQUIRE(testutil::rel_err(fit.f.slope_at_origin(), 1.0) < 0.01);
        REQUIRE(fit.f.coeffs()[1] == Approx(0.1).margin(0.01));
        REQUIRE(fit.diag.converged);
    }
    SECTION("the generating parameters are a fixed point") {
        auto x_model = simulate_driven(truth, u);
        auto start = Nonlinearity::odd_poly_raw({1.0, 0.1}, 1.6);
        auto fit = fit_time_domain(u, x_model, start, {}, 1.0, 2.0);
        REQUIRE(fit.diag.iterations == 0);
        REQUIRE(fit.diag.objective == 0.0);
        REQUIRE(fit.A == 1.0);
        REQUIRE(fit.B == 2.0);
    }
    SECTION("window with no samples") {
        FitWindow w{1e6, 2e6};
        auto start = Nonlinearity::odd_poly_raw({1.0, 0.0}, 1.6);
        REQUIRE_THROWS_AS(fit_time_domain(u, x, start, w, 1.0, 2.0),
                          InsufficientDataError);
    }
    SECTION("grid mismatch") {
        auto x2 = x;
        x2.dt *= 2.0;
        auto start = Nonlinearity::odd_poly_raw({1.0, 0.0}, 1.6);
        REQUIRE_THROWS_AS(fit_time_domain(u, x2, start, {}, 1.0, 2.0), GridMismatchError);
    }
    SECTION("bad start") {
        auto start = Nonlinearity::odd_poly_raw({1.0, 0.0}, 1.6);
        REQUIRE_THROWS_AS(fit_time_domain(u, x, start, {}, -1.0, 2.0), ValidationError);
    }
}

TEST_CASE("damping-and-mass refit", "[fit]") {
    auto truth = PlantModel::quasilinear(1.0, 2.0, Nonlinearity::odd_poly({1.0, 0.1}, 1.6));
    auto recipe = testutil::dss_recipe(truth);
    auto u = testutil::recipe_input(recipe);

    SECTION("recovers A and B with the true static curve held fixed") {
        auto x = simulate(truth, recipe.spec, recipe.opts);
        auto r = refit_ab(u, x, truth.f(), {}, 1.4, 1.4);
        REQUIRE(testutil::rel_err(r.A, 1.0) < 0.005);
        REQUIRE(testutil::rel_err(r.B, 2.0) < 0.005);
    }
    SECTION("exact model data is a zero-iteration fixed point") {
        auto x_model = simulate_driven(truth, u);
        auto r = refit_ab(u, x_model, truth.f(), {}, 1.0, 2.0);
        REQUIRE(r.diag.iterations == 0);
        REQUIRE(r.diag.objective == 0.0);
        REQUIRE(r.A == 1.0);
        REQUIRE(r.B == 2.0);
    }
    SECTION("third-order refit recovers A, B, C") {
        auto truth3 = PlantModel::third_order(0.1, 1.0, 2.0,
                                              Nonlinearity::odd_poly({1.0, 0.1}, 1.6));
        auto rec3 = testutil::dss_recipe(truth3);
        auto u3 = testutil::recipe_input(rec3);
        auto x3 = simulate(truth3, rec3.spec, rec3.opts);
        auto r = refit_abc(u3, x3, truth3.f(), {}, 0.15, 0.8, 2.4);
        REQUIRE(testutil::rel_err(r.A, 0.1) < 0.02);
        REQUIRE(testutil::rel_err(r.B, 1.0) < 0.02);
        REQUIRE(testutil::rel_err(r.C, 2.0) < 0.02);
    }
}
