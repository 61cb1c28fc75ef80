#pragma once

#include <span>
#include <string>

namespace imitlab {

double mean(std::span<const double> xs);
/// Population standard deviation (divides by n).
double population_std(std::span<const double> xs);
/// Least-squares slope of log(y) against log(x). All inputs must be positive.
double log_log_slope(std::span<const double> x, std::span<const double> y);

/// Shortest text of up to 17 significant digits that parses back to the same
/// double. "nan", "inf" and "-inf" for non-finite values.
std::string format_double(double x);

}  // namespace imitlab
