#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "sysid/harmonic.hpp"
#include "sysid/sim.hpp"

using namespace sysid;
using Catch::Approx;
using namespace std::complex_literals;

namespace {

TimeSeries sampled(double dt, double duration, auto fn) {
    TimeSeries ts;
    ts.dt = dt;
    const auto n = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
    for (std::size_t k = 0; k < n; ++k) ts.values.push_back(fn(dt * k));
    return ts;
}

}  // namespace

TEST_CASE("harmonic coefficient of pure tones", "[harmonic]") {
    const double w = 1.0;
    const double T = 2.0 * kPi / w;

    SECTION("sin(wt) has K1 = -i/2, node-aligned window") {
        auto x = sampled(T / 256.0, 6.0 * T, [&](double t) { return std::sin(w * t); });
        auto k1 = harmonic_coefficient(x, w, 1, {0.0, 4});
        REQUIRE(std::abs(k1.value - (-0.5i)) < 1e-9);
    }
    SECTION("R sin(wt + phi) has K1 = (R/2) e^{i(phi - pi/2)}, offset window") {
        const double R = 0.7, phi = 0.4;
        auto x = sampled(T / 256.0, 8.0 * T,
                         [&](double t) { return R * std::sin(w * t + phi); });
        auto k1 = harmonic_coefficient(x, w, 1, {0.37, 4});  // partial end cells
        const auto want = 0.5 * R * std::exp(1i * (phi - kPi / 2.0));
        REQUIRE(std::abs(k1.value - want) < 1e-6);
    }
    SECTION("constant signal has zero first harmonic and K0 = mean") {
        auto x = sampled(T / 64.0, 5.0 * T, [](double) { return 3.0; });
        REQUIRE(std::abs(harmonic_coefficient(x, w, 1, {0.0, 4}).value) < 1e-9);
        REQUIRE(harmonic_coefficient(x, w, 0, {0.0, 4}).value.real() == Approx(3.0));
    }
    SECTION("pure tone has no second harmonic") {
        auto x = sampled(T / 256.0, 5.0 * T, [&](double t) { return std::sin(w * t); });
        REQUIRE(std::abs(harmonic_coefficient(x, w, 2, {0.0, 4}).value) < 1e-9);
    }
    SECTION("three-term series is reconstructed from its coefficients") {
        const double w0 = 0.7;
        const double T0 = 2.0 * kPi / w0;
        auto fn = [&](double t) {
            return 0.3 + 0.5 * std::sin(w0 * t + 0.4) + 0.2 * std::sin(3.0 * w0 * t - 1.0);
        };
        auto x = sampled(T0 / 512.0, 6.0 * T0, fn);
        AnalysisWindow win{0.5, 4};
        std::complex<double> k[4];
        for (int i = 0; i < 4; ++i) k[i] = harmonic_coefficient(x, w0, i, win).value;
        for (double t : {1.0, 2.3, 7.7}) {
            double rec = k[0].real();
            for (int i = 1; i < 4; ++i)
                rec += 2.0 * (k[i] * std::exp(1i * (i * w0) * t)).real();
            REQUIRE(rec == Approx(fn(t)).margin(2e-5));
        }
    }
}

TEST_CASE("harmonic coefficient window requirements", "[harmonic]") {
    const double w = 2.0;
    const double T = kPi;
    auto x = sampled(T / 64.0, 3.0 * T, [&](double t) { return std::sin(w * t); });

    SECTION("record shorter than the window") {
        REQUIRE_THROWS_AS(harmonic_coefficient(x, w, 1, {0.0, 4}), WindowError);
        REQUIRE_THROWS_AS(harmonic_coefficient(x, w, 1, {2.0 * T, 2}), WindowError);
        REQUIRE_NOTHROW(harmonic_coefficient(x, w, 1, {0.0, 3}));
    }
    SECTION("fewer than 32 samples per period") {
        auto coarse = sampled(T / 8.0, 20.0 * T, [&](double t) { return std::sin(w * t); });
        REQUIRE_THROWS_AS(harmonic_coefficient(coarse, w, 1, {0.0, 4}), WindowError);
    }
    SECTION("argument validation") {
        REQUIRE_THROWS_AS(harmonic_coefficient(x, -1.0, 1, {0.0, 2}), ValidationError);
        REQUIRE_THROWS_AS(harmonic_coefficient(x, w, -1, {0.0, 2}), ValidationError);
        REQUIRE_THROWS_AS(harmonic_coefficient(x, w, 1, {-1.0, 2}), ValidationError);
        REQUIRE_THROWS_AS(harmonic_coefficient(x, w, 1, {0.0, 0}), ValidationError);
    }
}

TEST_CASE("transfer function evaluation", "[harmonic]") {
    SECTION("canonical plant at its natural frequency") {
        const auto g = eval_transfer({1.0, 2.0, 1.0}, 1.0);
        REQUIRE(g.real() == Approx(0.0).margin(1e-15));
        REQUIRE(g.imag() == Approx(-0.5));
    }
    SECTION("static gain is 1/C") {
        REQUIRE(std::abs(eval_transfer({1.0, 2.0, 4.0}, 1e-9) - 0.25) < 1e-8);
    }
    SECTION("lightly damped resonance peak") {
        REQUIRE(std::abs(eval_transfer({1.0, 0.1, 1.0}, 1.0)) == Approx(10.0));
    }
    SECTION("conjugate symmetry") {
        for (double w : {0.1, 0.5, 1.0, 3.0, 17.0}) {
            const auto g = eval_transfer({2.0, 0.7, 3.0}, w);
            const auto gm = eval_transfer({2.0, 0.7, 3.0}, -w);
            REQUIRE(std::abs(gm - std::conj(g)) < 1e-15);
        }
    }
    SECTION("undamped plant at resonance is singular") {
        REQUIRE_THROWS_AS(eval_transfer({1.0, 0.0, 1.0}, 1.0), SingularityError);
    }
    SECTION("third-order form matches direct complex evaluation") {
        const double A = 0.1, B = 1.0, C = 2.0, D = 1.0;
        for (double w : {0.2, 1.0, 4.4}) {
            const std::complex<double> s(0.0, w);
            const auto want = 1.0 / (A * s * s * s + B * s * s + C * s + D);
            REQUIRE(std::abs(eval_transfer3(A, B, C, D, w) - want) < 1e-14);
        }
    }
}

TEST_CASE("settle window", "[harmonic]") {
    SECTION("critically damped plant at its natural frequency") {
        auto w = settle_window({1.0, 2.0, 1.0}, 1.0);
        // fourteen unit time constants edge out two periods (4 pi)
        REQUIRE(w.settle_time == Approx(14.0));
        REQUIRE(w.periods == 4);
    }
    SECTION("low frequency is period-dominated") {
        auto w = settle_window({1.0, 2.0, 1.0}, 0.1);
        REQUIRE(w.settle_time == Approx(2.0 * 2.0 * kPi / 0.1));
    }
    SECTION("stiff plant is dominated by its slow root") {
        auto w = settle_window({1.0, 20.0, 1.0}, 10.0);
        const double re_slow = (-20.0 + std::sqrt(396.0)) / 2.0;
        REQUIRE(w.settle_time == Approx(14.0 / std::abs(re_slow)));
    }
    SECTION("unstable linearization is refused") {
        REQUIRE_THROWS_AS(settle_window({1.0, -2.0, 1.0}, 1.0), NumericError);
        REQUIRE_THROWS_AS(settle_window({1.0, 0.0, 1.0}, 1.0), NumericError);
    }
}

TEST_CASE("measured gain on simulated records", "[harmonic]") {
    auto plant = PlantModel::linear({1.0, 2.0, 1.0}, 3.0);

    SECTION("matches the transfer function at the natural frequency") {
        const double w = 1.0, T = 2.0 * kPi;
        AnalysisWindow win = settle_window({1.0, 2.0, 1.0}, w);
        SimOptions o;
        o.sample_dt = T / 256.0;
        win.settle_time = std::ceil(win.settle_time / o.sample_dt) * o.sample_dt;
        o.duration = win.settle_time + win.periods * T + o.sample_dt;
        auto spec = SignalSpec::harmonic_omega(1.0, w);
        auto x = simulate(plant, spec, o);
        auto u = generate_signal(spec, o);
        auto pt = measured_gain(u, x, w, win);
        REQUIRE(std::abs(pt.gain - (-0.5i)) < 1e-3 * 0.5);
        REQUIRE(pt.amplitude == Approx(0.5).epsilon(1e-3));
        REQUIRE(pt.phase == Approx(-kPi / 2.0).margin(1e-3));
    }
    SECTION("identical records have unit gain") {
        auto x = sampled(0.05, 50.0, [](double t) { return std::sin(t) + 0.2; });
        auto pt = measured_gain(x, x, 1.0, {0.0, 3});
        REQUIRE(std::abs(pt.gain - 1.0) < 1e-12);
    }
    SECTION("input without the analysis tone is degenerate") {
        auto u = sampled(0.05, 50.0, [](double) { return 0.0; });
        auto x = sampled(0.05, 50.0, [](double t) { return std::sin(t); });
        REQUIRE_THROWS_AS(measured_gain(u, x, 1.0, {0.0, 3}), DegenerateInputError);
    }
    SECTION("grid mismatch") {
        auto u = sampled(0.05, 50.0, [](double t) { return std::sin(t); });
        auto x = sampled(0.04, 50.0, [](double t) { return std::sin(t); });
        REQUIRE_THROWS_AS(measured_gain(u, x, 1.0, {0.0, 3}), GridMismatchError);
    }
}

TEST_CASE("frequency sweep", "[harmonic]") {
    auto plant = PlantModel::linear({1.0, 2.0, 1.0}, 4.0);

    SECTION("linear plant matches its transfer function") {
        SimOptions o;
        auto pts = sweep_frequency_response(plant, {0.5, 1.0, 2.0}, o);
        REQUIRE(pts.size() == 3);
        for (const auto& pt : pts) {
            const auto want = eval_transfer({1.0, 2.0, 1.0}, pt.omega);
            REQUIRE(std::abs(pt.gain - want) < 1e-3 * std::abs(want));
        }
    }
    SECTION("low-frequency gain magnitude approaches 1/C") {
        SimOptions o;
        auto pts = sweep_frequency_response(plant, {0.01}, o);
        REQUIRE(pts[0].amplitude == Approx(1.0).epsilon(0.01));
        REQUIRE(std::abs(pts[0].gain - eval_transfer({1.0, 2.0, 1.0}, 0.01)) < 1e-6);
    }
    SECTION("small-amplitude quasilinear sweep matches the linearization") {
        auto ql = PlantModel::quasilinear(1.0, 2.0, Nonlinearity::odd_poly({1.0, 0.1}, 1.6));
        SimOptions o;
        SweepPolicy pol;
        pol.amplitude = 0.01;
        auto pts = sweep_frequency_response(ql, {1.0}, o, pol);
        const auto want = eval_transfer({1.0, 2.0, 1.0}, 1.0);
        REQUIRE(std::abs(pts[0].gain - want) < 0.01 * std::abs(want));
    }
    SECTION("input validation") {
        SimOptions o;
        REQUIRE_THROWS_AS(sweep_frequency_response(plant, {}, o), ValidationError);
        REQUIRE_THROWS_AS(sweep_frequency_response(plant, {1.0, 1.0}, o), ValidationError);
        REQUIRE_THROWS_AS(sweep_frequency_response(plant, {1.0, -2.0}, o), ValidationError);
    }
    SECTION("seeded sweeps reproduce bitwise") {
        SimOptions o;
        o.noise_sigma = 0.01;
        o.seed = 5;
        auto p1 = sweep_frequency_response(plant, {0.5, 1.0}, o);
        auto p2 = sweep_frequency_response(plant, {0.5, 1.0}, o);
        for (std::size_t i = 0; i < p1.size(); ++i) REQUIRE(p1[i].gain == p2[i].gain);
    }
}

TEST_CASE("longer averaging shrinks transient leakage", "[harmonic]") {
    // Deliberately short settle: what's left of the transient must average
    // out harder as the window grows.
    auto plant = PlantModel::linear({1.0, 2.0, 1.0}, 4.0);
    const double w = 1.0, T = 2.0 * kPi;
    SimOptions o;
    o.sample_dt = T / 256.0;
    const double settle = std::ceil(2.0 / o.sample_dt) * o.sample_dt;
    o.duration = settle + 9.0 * T;
    auto spec = SignalSpec::harmonic_omega(1.0, w);
    auto x = simulate(plant, spec, o);
    auto u = generate_signal(spec, o);
    const auto want = eval_transfer({1.0, 2.0, 1.0}, w);
    const double e2 = std::abs(measured_gain(u, x, w, {settle, 2}).gain - want);
    const double e8 = std::abs(measured_gain(u, x, w, {settle, 8}).gain - want);
    REQUIRE(e8 < e2);
}

TEST_CASE("default frequency grid", "[harmonic]") {
    auto plant = PlantModel::linear({1.0, 2.0, 1.0}, 3.0);  // natural frequency 1
    auto grid = default_frequency_grid(plant, 24);
    REQUIRE(grid.size() == 24);
    REQUIRE(grid.front() == Approx(0.05));
    REQUIRE(grid.back() == Approx(20.0));
    for (std::size_t i = 2; i < grid.size(); ++i)
        REQUIRE(grid[i] / grid[i - 1] == Approx(grid[1] / grid[0]));
}
