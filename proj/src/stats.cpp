#include "imitlab/stats.hpp"

#include <charconv>
#include <cmath>

#include "imitlab/error.hpp"

namespace imitlab {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("mean of an empty sample");
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
  const double m = mean(xs);
  double total = 0.0;
  for (double x : xs) total += (x - m) * (x - m);
  return std::sqrt(total / static_cast<double>(xs.size()));
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("log_log_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ValueError("log_log_slope: values must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ValueError("log_log_slope: x values are all equal");
  return sxy / sxx;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  // Plain to_chars yields the shortest round-trip form, at most 17 digits.
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw ValueError("format_double failed");
  return std::string(buf, ptr);
}

}  // namespace imitlab
