#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tgnn/matrix.hpp"
#include "tgnn/rng.hpp"

namespace tgnn::testing {

inline Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double r = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(a[i] - b[i]));
    return r;
}

/// Largest |a-b| scaled by max(1, |a|_inf).
inline double rel_deviation(std::span<const double> a, std::span<const double> b) {
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::abs(v));
    return max_abs_diff(a, b) / scale;
}

/// Per-entry relative error with a floor: |a-b| / max(|a|, |b|, floor).
inline double floored_rel_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace tgnn::testing
