#pragma once

#include <cstdint>
#include <vector>

#include "imitlab/dataset.hpp"
#include "imitlab/mdp.hpp"

namespace imitlab {

/// per_step: one empirical distribution per (t, s) (Appendix A form).
/// aggregated: counts pooled over t, expanded to a stationary policy (Eq. 2 form).
enum class CountingMode { per_step, aggregated };

/// pi(a|s) = n(s,a) / n(s) where n(s) > 0, uniform otherwise.
Policy bc_counting(const Dataset& ds, Dims dims, CountingMode mode = CountingMode::per_step);

/// Row-major feature table phi(s), num_rows x dim.
struct FeatureTable {
  int num_rows = 0;
  int dim = 0;
  std::vector<double> values;

  double at(int s, int j) const {
    return values[static_cast<std::size_t>(s) * static_cast<std::size_t>(dim) +
                  static_cast<std::size_t>(j)];
  }
};

FeatureTable one_hot_features(int num_states);
/// One-hot columns followed by d_noise i.i.d. standard normal columns.
FeatureTable one_hot_noise_features(int num_states, int d_noise, std::uint64_t seed);

/// pi_t(a|s) = softmax_a(phi(s) . theta_t[:, a]). Weights are shared across t
/// in stationary mode and stored per step otherwise; layout [(t-1)*d + j]*A + a.
class LinearSoftmaxPolicy {
 public:
  LinearSoftmaxPolicy(FeatureTable features, int num_actions, int horizon, TimeMode mode);

  const FeatureTable& features() const { return features_; }
  int num_actions() const { return num_actions_; }
  int horizon() const { return horizon_; }
  TimeMode mode() const { return mode_; }

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t weight_index(int t, int j, int a) const;
  double weight_norm() const;

  /// Action probabilities at (t, s).
  std::vector<double> probs(int t, int s) const;
  /// Tabular policy over the first dims.num_states feature rows.
  Policy policy(Dims dims) const;

 private:
  FeatureTable features_;
  int num_actions_;
  int horizon_;
  TimeMode mode_;
  std::vector<double> weights_;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int steps = 1000;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Record a trace row every eval_every steps (0 = only first and last).
  int eval_every = 0;
  /// Standard deviation of a seeded perturbation added to the initial weights.
  double init_scale = 0.0;
};

struct BcObjective {
  double nll = 0.0;
  double reg = 0.0;
  /// d(nll + reg)/d(theta), same layout as the weights.
  std::vector<double> grad;

  double total() const { return nll + reg; }
};

/// Eq. (1) summed over the dataset plus weight_decay * ||theta||^2.
BcObjective bc_objective(const Dataset& ds, const LinearSoftmaxPolicy& policy, double weight_decay,
                         bool with_grad = true);

struct BcTraceRow {
  int step = 0;
  double nll = 0.0;
  double reg = 0.0;
  double value_gap = 0.0;  // NaN without an evaluation MDP
};

struct BcEvaluation {
  const TabularMDP* mdp = nullptr;
  const Policy* expert = nullptr;
};

struct BcTrainResult {
  LinearSoftmaxPolicy policy;
  std::vector<BcTraceRow> trace;
};

/// Full-batch gradient descent. Weight decay is applied as the proximal step
///   theta <- (theta - lr * grad_nll) / (1 + 2 lr lambda).
BcTrainResult bc_mle_train(const Dataset& ds, LinearSoftmaxPolicy policy0, const TrainConfig& cfg,
                           BcEvaluation eval = {});

/// V(expert) - V(learner), exact.
double value_gap(const TabularMDP& mdp, const Policy& expert, const Policy& learner);

}  // namespace imitlab
