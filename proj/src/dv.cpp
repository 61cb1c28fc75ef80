#include "imitlab/dv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imitlab/error.hpp"
#include "imitlab/mdp.hpp"

namespace imitlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw DimensionError("dv: distributions differ in size");
  for (auto dist : {p, q}) {
    double total = 0.0;
    for (double x : dist) {
      if (!std::isfinite(x) || x < 0.0) throw ValueError("dv: invalid probability");
      total += x;
    }
    if (std::abs(total - 1.0) > kProbTolerance) throw ValueError("dv: probabilities must sum to 1");
  }
}

bool support_ok(std::span<const double> p_exp, std::span<const double> p_pi) {
  for (std::size_t i = 0; i < p_exp.size(); ++i)
    if (p_exp[i] == 0.0 && p_pi[i] > 0.0) return false;
  return true;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_pair(p, q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double dv_objective(std::span<const double> p_exp, std::span<const double> p_pi,
                    std::span<const double> x) {
  if (x.size() != p_exp.size() || x.size() != p_pi.size())
    throw DimensionError("dv_objective: size mismatch");
  double top = -kInf;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (p_exp[i] > 0.0) top = std::max(top, x[i]);
  double total = 0.0;
  if (std::isfinite(top))
    for (std::size_t i = 0; i < x.size(); ++i)
      if (p_exp[i] > 0.0) total += p_exp[i] * std::exp(x[i] - top);
  double value = std::isfinite(top) ? top + std::log(total) : -kInf;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (p_pi[i] > 0.0) value -= p_pi[i] * x[i];
  return value;
}

DvResult dv_dual_value(std::span<const double> p_exp, std::span<const double> p_pi) {
  check_pair(p_exp, p_pi);
  DvResult out;
  if (!support_ok(p_exp, p_pi)) {
    out.value = -kInf;
    out.infinite = true;
    out.verified = kl_divergence(p_pi, p_exp) == kInf;
    return out;
  }
  out.argmin.resize(p_exp.size());
  for (std::size_t i = 0; i < p_exp.size(); ++i)
    out.argmin[i] = p_pi[i] > 0.0 ? std::log(p_pi[i] / p_exp[i]) : -kInf;
  out.value = dv_objective(p_exp, p_pi, out.argmin);
  out.check_error = std::abs(out.value + kl_divergence(p_pi, p_exp));
  out.verified = out.check_error <= 1e-8;
  return out;
}

double dv_dual_by_descent(std::span<const double> p_exp, std::span<const double> p_pi,
                          int iterations, double learning_rate) {
  check_pair(p_exp, p_pi);
  if (!support_ok(p_exp, p_pi)) return -kInf;
  if (iterations < 0 || !(learning_rate > 0.0)) throw ArgumentError("dv: bad descent settings");
  const std::size_t n = p_exp.size();
  std::vector<double> x(n, 0.0), w(n);
  for (int it = 0; it < iterations; ++it) {
    double top = -kInf;
    for (std::size_t i = 0; i < n; ++i)
      if (p_exp[i] > 0.0) top = std::max(top, x[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      total += (w[i] = p_exp[i] > 0.0 ? p_exp[i] * std::exp(x[i] - top) : 0.0);
    for (std::size_t i = 0; i < n; ++i) x[i] -= learning_rate * (w[i] / total - p_pi[i]);
  }
  return dv_objective(p_exp, p_pi, x);
}

}  // namespace imitlab
