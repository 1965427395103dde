#pragma once

#include <span>

namespace suma {

/// Signed Welch statistic plus its Welch-Satterthwaite degrees of freedom.
struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
};

/// Welch's t between two samples (each of size >= 2). When both group
/// variances are zero: equal means give t = 0, differing means give a
/// signed-infinity sentinel so selection rankings stay total.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

/// Sample Pearson correlation; n >= 3 and both inputs must have nonzero
/// variance (degenerate input throws, never a silent 0).
double pearson_r(std::span<const double> a, std::span<const double> b);

/// atanh(r); throws std::domain_error for |r| >= 1.
double fisher_z(double r);

}  // namespace suma
