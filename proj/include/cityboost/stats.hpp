#pragma once

#include <span>
#include <vector>

namespace cb {

/// Quantile of already-sorted data, linear interpolation between the
/// closest order statistics: position (n-1)*q.
double quantile_sorted(std::span<const double> sorted, double q);

/// Copies and sorts, then quantile_sorted.
double quantile(std::span<const double> values, double q);

inline double median(std::span<const double> values) { return quantile(values, 0.5); }

/// Several quantiles from one sort.
std::vector<double> quantiles(std::span<const double> values, std::span<const double> qs);

}  // namespace cb
