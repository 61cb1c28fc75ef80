#pragma once

#include <span>
#include <vector>

namespace imitlab {

/// KL(p || q) over a finite set; +infinity when p puts mass where q does not.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Donsker-Varadhan objective log E_{p_exp}[e^x] - E_{p_pi}[x].
/// Entries of x may be -infinity; 0 * (-inf) is taken as 0.
double dv_objective(std::span<const double> p_exp, std::span<const double> p_pi,
                    std::span<const double> x);

struct DvResult {
  /// min_x of the DV objective, i.e. -KL(p_pi || p_exp). -infinity when the
  /// support condition fails.
  double value = 0.0;
  bool infinite = false;
  /// Minimizer x* = log(p_pi / p_exp) (-inf where p_pi = 0).
  std::vector<double> argmin;
  /// |value - (-KL)| computed through the independent KL formula.
  double check_error = 0.0;
  bool verified = false;
};

/// Closed-form dual minimum; verified against -KL to 1e-8.
DvResult dv_dual_value(std::span<const double> p_exp, std::span<const double> p_pi);

/// Numerical minimum by plain gradient descent from x = 0.
double dv_dual_by_descent(std::span<const double> p_exp, std::span<const double> p_pi,
                          int iterations = 10000, double learning_rate = 1.0);

}  // namespace imitlab
