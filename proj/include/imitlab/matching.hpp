#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imitlab/dataset.hpp"
#include "imitlab/mdp.hpp"

namespace imitlab {

/// Per-time-step empirical expert distribution dhat_t(s, a).
class EmpiricalExpertOccupancy {
 public:
  EmpiricalExpertOccupancy(const Dataset& ds, Dims dims);

  const Dims& dims() const { return dims_; }
  double at(int t, int s, int a) const;
  double state(int t, int s) const;
  bool visited(int t, int s) const { return state(t, s) > 0.0; }
  /// False for time steps without any record.
  bool slice_nonempty(int t) const;
  const std::vector<double>& values() const { return d_; }

 private:
  Dims dims_;
  std::vector<double> d_;
  std::vector<char> nonempty_;
};

/// Throws ConstraintError unless pi_t(.|s) is uniform (within 1e-9) on every
/// (t, s) with dhat_t(s) = 0.
void check_uniform_constraint(const Policy& policy, const EmpiricalExpertOccupancy& dhat);

/// Loss_t = sum_{s,a} |d^pi_t(s,a) - dhat_t(s,a)|.
std::vector<double> step_losses(const TabularMDP& mdp, const Policy& policy,
                                const EmpiricalExpertOccupancy& dhat);

/// sum_t Loss_t, after the constraint check.
double l1_loss(const TabularMDP& mdp, const Policy& policy, const EmpiricalExpertOccupancy& dhat);

/// Tail sum l_h = sum_{t >= h} Loss_t, 1 <= h <= H.
double cost_to_go(const TabularMDP& mdp, const Policy& policy, const EmpiricalExpertOccupancy& dhat,
                  int h);

struct Certificate {
  Dims dims;
  int visited_pairs = 0;
  long deterministic_checked = 0;
  int stochastic_checked = 0;
  double bc_loss = 0.0;
  double runner_up_loss = 0.0;
  /// runner_up_loss - bc_loss over deterministic assignments.
  double min_gap = 0.0;
  /// min over sampled stochastic policies of loss - bc_loss.
  double min_stochastic_gap = 0.0;
  /// Sampled policies with TV > 1e-6 from BC whose loss did not exceed BC's.
  int stochastic_violations = 0;
  bool bc_strict_minimum = false;

  bool passed() const { return bc_strict_minimum && stochastic_violations == 0; }
  std::string report() const;
};

inline constexpr long kCertifierLimit = 1000000;

/// Exhaustive check over deterministic choices on visited (t, s) plus
/// `samples` random stochastic policies (uniform on the simplex at visited
/// (t, s), uniform elsewhere). Requires one complete trajectory; throws
/// SizeLimitError when |A|^(visited pairs) exceeds kCertifierLimit.
Certificate certify_unique_optimum(const TabularMDP& mdp, const Dataset& ds, int samples,
                                   std::uint64_t seed);

}  // namespace imitlab
