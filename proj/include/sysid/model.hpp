#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "sysid/errors.hpp"

namespace sysid {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Roots of a*z^2 + b*z + c, a != 0. Citardauq-style split avoids cancellation.
inline std::array<std::complex<double>, 2> quadratic_roots(double a, double b, double c) {
    if (a == 0.0)
        throw DegenerateOrderError("quadratic_roots: leading coefficient is zero");
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (b + std::copysign(sq, b));
        if (q == 0.0) return {std::complex<double>(0.0), std::complex<double>(0.0)};
        return {std::complex<double>(q / a), std::complex<double>(c / q)};
    }
    const double re = -b / (2.0 * a);
    const double im = std::sqrt(-disc) / (2.0 * a);
    return {std::complex<double>(re, im), std::complex<double>(re, -im)};
}

// Roots of a3*z^3 + a2*z^2 + a1*z + a0, a3 != 0. Durand-Kerner on the monic form.
inline std::array<std::complex<double>, 3> cubic_roots(double a3, double a2, double a1,
                                                       double a0) {
    if (a3 == 0.0)
        throw DegenerateOrderError("cubic_roots: leading coefficient is zero");
    const double c2 = a2 / a3, c1 = a1 / a3, c0 = a0 / a3;
    auto p = [&](std::complex<double> z) { return ((z + c2) * z + c1) * z + c0; };
    const double scale =
        1.0 + std::max(std::abs(c2), std::max(std::abs(c1), std::abs(c0)));
    std::complex<double> r0(0.4, 0.9), r1 = r0 * r0, r2 = r0 * r1;
    r0 *= scale, r1 *= scale, r2 *= scale;
    for (int it = 0; it < 200; ++it) {
        const auto d0 = p(r0) / ((r0 - r1) * (r0 - r2));
        const auto d1 = p(r1) / ((r1 - r0) * (r1 - r2));
        const auto d2 = p(r2) / ((r2 - r0) * (r2 - r1));
        r0 -= d0, r1 -= d1, r2 -= d2;
        const double step = std::abs(d0) + std::abs(d1) + std::abs(d2);
        if (step < 1e-14 * scale) break;
    }
    return {r0, r1, r2};
}

// Coefficients of A x'' + B x' + C x = u. Aggregate on purpose: fits and
// stability checks handle candidate values that violate the plant invariants.
struct LinearParams {
    double A = 1.0;
    double B = 1.0;
    double C = 1.0;

    void validate() const {
        if (!(std::isfinite(A) && std::isfinite(B) && std::isfinite(C)))
            throw ValidationError("linear params: non-finite coefficient");
        if (!(A > 0.0 && B > 0.0 && C > 0.0))
            throw ValidationError("linear params: coefficients must be positive (A=" +
                                  fmt_g(A) + " B=" + fmt_g(B) + " C=" + fmt_g(C) + ")");
    }
};

struct StabilityReport {
    std::array<std::complex<double>, 2> roots;
    bool stable;
};

inline StabilityReport check_stability(const LinearParams& p) {
    auto roots = quadratic_roots(p.A, p.B, p.C);
    const bool stable = roots[0].real() < 0.0 && roots[1].real() < 0.0;
    return {roots, stable};
}

enum class NonlinearityFamily { odd_poly };

// Odd polynomial c1 x + c3 x^3 + c5 x^5 + c7 x^7, monotone increasing on
// [-x_max, x_max]. Monotonicity means f' >= mono_eps on a fixed 256-point grid.
class Nonlinearity {
  public:
    static constexpr int kMaxTerms = 4;
    static constexpr int kMonoGrid = 256;

    // Validating factory. coeffs = {c1[, c3[, c5[, c7]]]}; missing terms are zero.
    // mono_eps < 0 selects the default floor 1e-6 * c1.
    static Nonlinearity odd_poly(const std::vector<double>& coeffs, double x_max,
                                 double mono_eps = -1.0) {
        Nonlinearity f = odd_poly_raw(coeffs, x_max, mono_eps);
        f.validate();
        return f;
    }

    // No validity checks; fit internals probe candidates through this.
    static Nonlinearity odd_poly_raw(const std::vector<double>& coeffs, double x_max,
                                     double mono_eps = -1.0) {
        if (coeffs.empty() || coeffs.size() > kMaxTerms)
            throw ValidationError("nonlinearity: need 1 to 4 odd-power coefficients, got " +
                                  std::to_string(coeffs.size()));
        Nonlinearity f;
        f.n_terms_ = static_cast<int>(coeffs.size());
        for (std::size_t i = 0; i < coeffs.size(); ++i) f.c_[i] = coeffs[i];
        f.x_max_ = x_max;
        f.mono_eps_ = mono_eps >= 0.0 ? mono_eps : 1e-6 * f.c_[0];
        return f;
    }

    double operator()(double x) const {
        const double x2 = x * x;
        return x * (c_[0] + x2 * (c_[1] + x2 * (c_[2] + x2 * c_[3])));
    }

    double derivative(double x) const {
        const double x2 = x * x;
        return c_[0] + x2 * (3.0 * c_[1] + x2 * (5.0 * c_[2] + x2 * 7.0 * c_[3]));
    }

    double slope_at_origin() const { return c_[0]; }
    double x_max() const { return x_max_; }
    double mono_eps() const { return mono_eps_; }
    int n_terms() const { return n_terms_; }
    const std::array<double, kMaxTerms>& coeffs() const { return c_; }

    std::vector<double> coeff_vector() const {
        return std::vector<double>(c_.begin(), c_.begin() + n_terms_);
    }

    bool in_range(double x) const { return std::abs(x) <= x_max_; }

    // Min of f' over the validation grid.
    double grid_min_slope() const {
        double lo = derivative(0.0);
        for (int j = 0; j < kMonoGrid; ++j) {
            const double x = -x_max_ + 2.0 * x_max_ * j / (kMonoGrid - 1);
            lo = std::min(lo, derivative(x));
        }
        return lo;
    }

    void validate() const {
        if (!(std::isfinite(x_max_) && x_max_ > 0.0))
            throw ValidationError("nonlinearity: x_max must be positive and finite");
        for (int i = 0; i < n_terms_; ++i)
            if (!std::isfinite(c_[i]))
                throw ValidationError("nonlinearity: non-finite coefficient");
        if (!(c_[0] > 0.0))
            throw ValidationError("nonlinearity: slope at origin must be positive, got " +
                                  fmt_g(c_[0]));
        const double lo = grid_min_slope();
        if (lo < mono_eps_)
            throw ValidationError("nonlinearity: not monotone on [-x_max, x_max], min f' = " +
                                  fmt_g(lo) + " < " + fmt_g(mono_eps_));
    }

    // Solves f(x) = u on [-x_max, x_max]: bisection bracket, Newton polish.
    double invert(double u) const {
        const double lo_u = (*this)(-x_max_), hi_u = (*this)(x_max_);
        const double slack = 1e-12 * (hi_u - lo_u);
        if (u < lo_u - slack || u > hi_u + slack)
            throw OutOfRangeError("invert: target " + fmt_g(u) + " outside image [" +
                                  fmt_g(lo_u) + ", " + fmt_g(hi_u) + "]");
        const double target = std::min(std::max(u, lo_u), hi_u);
        double a = -x_max_, b = x_max_;
        for (int it = 0; it < 64; ++it) {
            const double mid = 0.5 * (a + b);
            if ((*this)(mid) < target)
                a = mid;
            else
                b = mid;
        }
        double x = 0.5 * (a + b);
        for (int it = 0; it < 2; ++it) {
            const double d = derivative(x);
            if (d <= 0.0) break;
            const double step = ((*this)(x)-target) / d;
            const double next = x - step;
            if (next < -x_max_ || next > x_max_) break;
            x = next;
        }
        return x;
    }

  private:
    std::array<double, kMaxTerms> c_{0.0, 0.0, 0.0, 0.0};
    int n_terms_ = 1;
    double x_max_ = 1.0;
    double mono_eps_ = 0.0;
};

inline double eval_nonlinearity(const Nonlinearity& f, double x) { return f(x); }
inline double invert_nonlinearity(const Nonlinearity& f, double u) { return f.invert(u); }

// Plant under test. Order 2: A x'' + B x' + f(x) = u. Order 3 adds a damping
// cascade: A x''' + B x'' + C x' + f(x) = u. linear().C mirrors f'(0) for
// order 2 so the same triple feeds transfer-function code.
class PlantModel {
  public:
    static PlantModel quasilinear(double a, double b, Nonlinearity f) {
        PlantModel m = raw(2, {a, b, f.slope_at_origin()}, std::move(f));
        m.validate();
        return m;
    }

    static PlantModel third_order(double a, double b, double c, Nonlinearity f) {
        PlantModel m = raw(3, {a, b, c}, std::move(f));
        m.validate();
        return m;
    }

    // Linear plant expressed in the same family: f(x) = C x.
    static PlantModel linear(const LinearParams& p, double x_max) {
        return quasilinear(p.A, p.B, Nonlinearity::odd_poly({p.C}, x_max));
    }

    // Unchecked candidate for fit internals.
    static PlantModel raw(int order, LinearParams lin, Nonlinearity f) {
        PlantModel m;
        m.order_ = order;
        m.lin_ = lin;
        m.f_ = std::move(f);
        return m;
    }

    int order() const { return order_; }
    const LinearParams& linear_params() const { return lin_; }
    const Nonlinearity& f() const { return f_; }

    void validate() const {
        if (order_ != 2 && order_ != 3)
            throw ValidationError("plant: order must be 2 or 3, got " + std::to_string(order_));
        f_.validate();
        const double slope = f_.slope_at_origin();
        if (order_ == 2) {
            LinearParams eff{lin_.A, lin_.B, slope};
            eff.validate();
            if (!check_stability(eff).stable)
                throw ValidationError("plant: linearization is not stable");
        } else {
            if (!(lin_.A > 0.0 && lin_.B > 0.0 && lin_.C > 0.0))
                throw ValidationError("plant: third-order coefficients must be positive");
            if (!(lin_.B * lin_.C > lin_.A * slope))
                throw ValidationError("plant: third-order stability needs B*C > A*f'(0) (" +
                                      fmt_g(lin_.B * lin_.C) + " <= " + fmt_g(lin_.A * slope) +
                                      ")");
        }
    }

    // Roots of the characteristic polynomial of the linearization at x = 0.
    std::vector<std::complex<double>> characteristic_roots() const {
        const double slope = f_.slope_at_origin();
        if (order_ == 2) {
            auto r = quadratic_roots(lin_.A, lin_.B, slope);
            return {r[0], r[1]};
        }
        auto r = cubic_roots(lin_.A, lin_.B, lin_.C, slope);
        return {r[0], r[1], r[2]};
    }

  private:
    int order_ = 2;
    LinearParams lin_;
    Nonlinearity f_ = Nonlinearity::odd_poly_raw({1.0}, 1.0);
};

}  // namespace sysid
