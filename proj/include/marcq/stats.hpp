#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <boost/math/distributions/normal.hpp>

#include "marcq/errors.hpp"

namespace marcq {

/// Point estimate with a symmetric confidence half-width.
struct Estimate {
    double mean = 0.0;
    double half_width = 0.0;

    double lower() const noexcept { return mean - half_width; }
    double upper() const noexcept { return mean + half_width; }
    bool contains(double x) const noexcept { return lower() <= x && x <= upper(); }
};

/// Two-sided standard normal critical value, e.g. 1.96 for 0.95.
inline double normal_critical_value(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ValidationError("confidence level must lie in (0, 1)");
    }
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + confidence / 2.0);
}

/// Normal-approximation interval for the mean of i.i.d. samples. With fewer
/// than two samples the half-width is infinite.
inline Estimate mean_interval(std::span<const double> xs, double confidence = 0.95) {
    if (xs.empty()) {
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()};
    }
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) {
        return {mean, std::numeric_limits<double>::infinity()};
    }
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return {mean, normal_critical_value(confidence) * sd / std::sqrt(static_cast<double>(xs.size()))};
}

} // namespace marcq
