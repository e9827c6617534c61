#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ncmech::linalg {

struct DenseSolve {
    std::vector<double> x;
    double det = 0.0;
    /// Crude growth estimate: max|pivot| / min|pivot|.
    double conditionEstimate = 0.0;
    bool singular = false;
};

/// Solves A x = b for a k-by-k row-major matrix by Gaussian elimination with
/// partial pivoting. On a structurally zero pivot the result is flagged
/// singular with det = 0. A and b are taken by value (the elimination is
/// destructive).
inline DenseSolve solve_dense(std::vector<double> a, std::vector<double> b) {
    const int k = static_cast<int>(b.size());
    DenseSolve out;
    double det = 1.0;
    double maxPivot = 0.0, minPivot = 0.0;

    for (int col = 0; col < k; ++col) {
        int pivot = col;
        double best = std::abs(a[static_cast<std::size_t>(col) * k + col]);
        for (int r = col + 1; r < k; ++r) {
            double cand = std::abs(a[static_cast<std::size_t>(r) * k + col]);
            if (cand > best) {
                best = cand;
                pivot = r;
            }
        }
        if (best == 0.0) {
            out.singular = true;
            out.det = 0.0;
            return out;
        }
        if (pivot != col) {
            for (int j = col; j < k; ++j)
                std::swap(a[static_cast<std::size_t>(pivot) * k + j], a[static_cast<std::size_t>(col) * k + j]);
            std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
            det = -det;
        }
        const double p = a[static_cast<std::size_t>(col) * k + col];
        det *= p;
        maxPivot = std::max(maxPivot, std::abs(p));
        minPivot = (col == 0) ? std::abs(p) : std::min(minPivot, std::abs(p));
        for (int r = col + 1; r < k; ++r) {
            const double m = a[static_cast<std::size_t>(r) * k + col] / p;
            if (m == 0.0) continue;
            a[static_cast<std::size_t>(r) * k + col] = 0.0;
            for (int j = col + 1; j < k; ++j)
                a[static_cast<std::size_t>(r) * k + j] -= m * a[static_cast<std::size_t>(col) * k + j];
            b[static_cast<std::size_t>(r)] -= m * b[static_cast<std::size_t>(col)];
        }
    }

    out.x.assign(static_cast<std::size_t>(k), 0.0);
    for (int r = k - 1; r >= 0; --r) {
        double s = b[static_cast<std::size_t>(r)];
        for (int j = r + 1; j < k; ++j) s -= a[static_cast<std::size_t>(r) * k + j] * out.x[static_cast<std::size_t>(j)];
        out.x[static_cast<std::size_t>(r)] = s / a[static_cast<std::size_t>(r) * k + r];
    }
    out.det = det;
    out.conditionEstimate = minPivot > 0.0 ? maxPivot / minPivot : std::numeric_limits<double>::infinity();
    return out;
}

/// Determinant only (same elimination).
inline double determinant(std::vector<double> a, int k) {
    std::vector<double> b(static_cast<std::size_t>(k), 0.0);
    return solve_dense(std::move(a), std::move(b)).det;
}

inline double inf_norm(const std::vector<double>& a, int k) {
    double best = 0.0;
    for (int r = 0; r < k; ++r) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += std::abs(a[static_cast<std::size_t>(r) * k + j]);
        best = std::max(best, s);
    }
    return best;
}

} // namespace ncmech::linalg
