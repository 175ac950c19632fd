#pragma once

#include <vector>

namespace coda {

/// Linear-interpolation quantile (R type 7) of an ascending-sorted sample.
/// p in [0,1]; the sample must be non-empty.
double quantile_sorted(const std::vector<double>& sorted, double p);

} // namespace coda
