#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sysid/errors.hpp"

namespace sysid::linalg {

// Solves the n-by-n system A x = b in place by Gaussian elimination with
// partial pivoting. A is row-major. Throws on a (near-)singular pivot.
inline std::vector<double> solve(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) throw InsufficientDataError("linear solve: zero matrix");

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (std::abs(a[piv * n + col]) < 1e-13 * scale)
            throw InsufficientDataError("linear solve: singular system (rank-deficient data)");
        if (piv != col) {
            for (std::size_t c = col; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
            std::swap(b[piv], b[col]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double m = a[r * n + col] * inv;
            if (m == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= m * a[col * n + c];
            b[r] -= m * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= a[ri * n + c] * x[c];
        x[ri] = s / a[ri * n + ri];
    }
    return x;
}

// Accumulates least-squares normal equations one row at a time and solves
// with column equilibration. Rows may carry individual weights.
class NormalEquations {
  public:
    explicit NormalEquations(std::size_t n) : n_(n), ata_(n * n, 0.0), atb_(n, 0.0) {}

    void add_row(const double* row, double y, double w = 1.0) {
        for (std::size_t i = 0; i < n_; ++i) {
            const double wi = w * row[i];
            atb_[i] += wi * y;
            for (std::size_t j = i; j < n_; ++j) ata_[i * n_ + j] += wi * row[j];
        }
        ++rows_;
    }

    std::size_t rows() const { return rows_; }

    std::vector<double> solve() const {
        if (rows_ < n_)
            throw InsufficientDataError("least squares: fewer rows than unknowns");
        // Equilibrate columns so x^7-type columns don't swamp the pivoting.
        std::vector<double> d(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double diag = ata_[i * n_ + i];
            d[i] = diag > 0.0 ? 1.0 / std::sqrt(diag) : 1.0;
        }
        std::vector<double> a(n_ * n_);
        std::vector<double> b(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            b[i] = atb_[i] * d[i];
            for (std::size_t j = 0; j < n_; ++j) {
                const double v = i <= j ? ata_[i * n_ + j] : ata_[j * n_ + i];
                a[i * n_ + j] = v * d[i] * d[j];
            }
        }
        std::vector<double> y = linalg::solve(std::move(a), std::move(b));
        for (std::size_t i = 0; i < n_; ++i) y[i] *= d[i];
        return y;
    }

  private:
    std::size_t n_;
    std::size_t rows_ = 0;
    std::vector<double> ata_;  // upper triangle filled
    std::vector<double> atb_;
};

}  // namespace sysid::linalg
