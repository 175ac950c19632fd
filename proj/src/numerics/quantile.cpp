#include "coda/numerics/quantile.hpp"

#include "coda/errors.hpp"

#include <cmath>

namespace coda {

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty())
        throw parameter_error("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0))
        throw parameter_error("quantile level must be in [0, 1]");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= sorted.size())
        return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace coda
