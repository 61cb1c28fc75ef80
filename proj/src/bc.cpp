#include "imitlab/bc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imitlab/error.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

void softmax_inplace(std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& x : z) total += (x = std::exp(x - top));
  for (double& x : z) x /= total;
}

void check_feature_rows(const Dataset& ds, const LinearSoftmaxPolicy& policy) {
  for (const auto& traj : ds.trajectories)
    for (const auto& step : traj.steps) {
      if (step.s < 0 || step.s >= policy.features().num_rows)
        throw FeatureError("no feature row for state " + std::to_string(step.s));
      if (step.a < 0 || step.a >= policy.num_actions())
        throw DimensionError("dataset action out of range");
      if (step.t < 1 || step.t > policy.horizon())
        throw DimensionError("dataset time index out of range");
    }
}

}  // namespace

Policy bc_counting(const Dataset& ds, Dims dims, CountingMode mode) {
  const Visitation v(ds, dims);
  const std::size_t S = as_size(dims.num_states), A = as_size(dims.num_actions);
  const double uniform = 1.0 / static_cast<double>(dims.num_actions);
  if (mode == CountingMode::aggregated) {
    std::vector<double> probs(S * A, uniform);
    for (int s = 0; s < dims.num_states; ++s) {
      const int n = v.total_state_count(s);
      if (n == 0) continue;
      for (int a = 0; a < dims.num_actions; ++a)
        probs[as_size(s) * A + as_size(a)] = static_cast<double>(v.total_count(s, a)) / n;
    }
    return Policy::stationary(dims, probs);
  }
  std::vector<double> probs(as_size(dims.horizon) * S * A, uniform);
  for (int t = 1; t <= dims.horizon; ++t)
    for (int s : v.visited(t)) {
      const int n = v.state_count(t, s);
      for (int a = 0; a < dims.num_actions; ++a)
        probs[(as_size(t - 1) * S + as_size(s)) * A + as_size(a)] =
            static_cast<double>(v.count(t, s, a)) / n;
    }
  return Policy(dims, std::move(probs));
}

FeatureTable one_hot_features(int num_states) {
  return one_hot_noise_features(num_states, 0, 0);
}

FeatureTable one_hot_noise_features(int num_states, int d_noise, std::uint64_t seed) {
  if (num_states <= 0 || d_noise < 0) throw ArgumentError("features: bad sizes");
  FeatureTable f;
  f.num_rows = num_states;
  f.dim = num_states + d_noise;
  f.values.assign(as_size(f.num_rows) * as_size(f.dim), 0.0);
  Rng rng(derive_seed(seed, 0xfea7));
  for (int s = 0; s < num_states; ++s) {
    double* row = &f.values[as_size(s) * as_size(f.dim)];
    row[s] = 1.0;
    for (int j = 0; j < d_noise; ++j) row[num_states + j] = rng.normal();
  }
  return f;
}

// ---------------------------------------------------------------------------
// LinearSoftmaxPolicy

LinearSoftmaxPolicy::LinearSoftmaxPolicy(FeatureTable features, int num_actions, int horizon,
                                         TimeMode mode)
    : features_(std::move(features)), num_actions_(num_actions), horizon_(horizon), mode_(mode) {
  if (num_actions <= 0 || horizon <= 0 || features_.dim <= 0 || features_.num_rows <= 0)
    throw DimensionError("LinearSoftmaxPolicy: sizes must be positive");
  if (features_.values.size() != as_size(features_.num_rows) * as_size(features_.dim))
    throw DimensionError("LinearSoftmaxPolicy: feature table size mismatch");
  const std::size_t slices = mode == TimeMode::stationary ? 1 : as_size(horizon);
  weights_.assign(slices * as_size(features_.dim) * as_size(num_actions), 0.0);
}

std::size_t LinearSoftmaxPolicy::weight_index(int t, int j, int a) const {
  const std::size_t slice = mode_ == TimeMode::stationary ? 0 : as_size(t - 1);
  return (slice * as_size(features_.dim) + as_size(j)) * as_size(num_actions_) + as_size(a);
}

double LinearSoftmaxPolicy::weight_norm() const {
  double total = 0.0;
  for (double w : weights_) total += w * w;
  return std::sqrt(total);
}

std::vector<double> LinearSoftmaxPolicy::probs(int t, int s) const {
  if (s < 0 || s >= features_.num_rows)
    throw FeatureError("no feature row for state " + std::to_string(s));
  std::vector<double> z(as_size(num_actions_), 0.0);
  for (int j = 0; j < features_.dim; ++j) {
    const double phi = features_.at(s, j);
    if (phi == 0.0) continue;
    for (int a = 0; a < num_actions_; ++a) z[as_size(a)] += phi * weights_[weight_index(t, j, a)];
  }
  softmax_inplace(z);
  return z;
}

Policy LinearSoftmaxPolicy::policy(Dims dims) const {
  if (dims.num_actions != num_actions_ || dims.horizon != horizon_)
    throw DimensionError("LinearSoftmaxPolicy: dims mismatch");
  if (dims.num_states > features_.num_rows)
    throw FeatureError("LinearSoftmaxPolicy: fewer feature rows than states");
  std::vector<double> out;
  out.reserve(as_size(dims.horizon) * as_size(dims.num_states) * as_size(dims.num_actions));
  for (int t = 1; t <= dims.horizon; ++t)
    for (int s = 0; s < dims.num_states; ++s) {
      const auto p = probs(t, s);
      out.insert(out.end(), p.begin(), p.end());
    }
  return Policy(dims, std::move(out),
                mode_ == TimeMode::stationary ? PolicyKind::stationary : PolicyKind::non_stationary);
}

// ---------------------------------------------------------------------------
// Training

BcObjective bc_objective(const Dataset& ds, const LinearSoftmaxPolicy& policy, double weight_decay,
                         bool with_grad) {
  if (weight_decay < 0.0) throw ArgumentError("bc_objective: weight_decay must be >= 0");
  check_feature_rows(ds, policy);
  BcObjective out;
  const auto& w = policy.weights();
  if (with_grad) out.grad.assign(w.size(), 0.0);
  const int d = policy.features().dim;
  for (const auto& traj : ds.trajectories) {
    for (const auto& step : traj.steps) {
      auto p = policy.probs(step.t, step.s);
      out.nll -= std::log(p[as_size(step.a)]);
      if (!with_grad) continue;
      p[as_size(step.a)] -= 1.0;
      for (int j = 0; j < d; ++j) {
        const double phi = policy.features().at(step.s, j);
        if (phi == 0.0) continue;
        for (int a = 0; a < policy.num_actions(); ++a)
          out.grad[policy.weight_index(step.t, j, a)] += phi * p[as_size(a)];
      }
    }
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.reg += weight_decay * w[i] * w[i];
    if (with_grad) out.grad[i] += 2.0 * weight_decay * w[i];
  }
  return out;
}

BcTrainResult bc_mle_train(const Dataset& ds, LinearSoftmaxPolicy policy0, const TrainConfig& cfg,
                           BcEvaluation eval) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("bc: learning_rate must be positive");
  if (cfg.steps < 0) throw ConfigError("bc: steps must be >= 0");
  if (cfg.weight_decay < 0.0) throw ConfigError("bc: weight_decay must be >= 0");
  check_feature_rows(ds, policy0);

  BcTrainResult result{std::move(policy0), {}};
  auto& policy = result.policy;
  if (cfg.init_scale > 0.0) {
    Rng rng(derive_seed(cfg.seed, 0xb0));
    for (double& w : policy.weights()) w += cfg.init_scale * rng.normal();
  }

  const Dims dims = eval.mdp ? eval.mdp->dims() : Dims{};
  auto record = [&](int step) {
    const BcObjective obj = bc_objective(ds, policy, cfg.weight_decay, false);
    double gap = std::numeric_limits<double>::quiet_NaN();
    if (eval.mdp && eval.expert) gap = value_gap(*eval.mdp, *eval.expert, policy.policy(dims));
    result.trace.push_back({step, obj.nll, obj.reg, gap});
  };

  record(0);
  const double shrink = 1.0 / (1.0 + 2.0 * cfg.learning_rate * cfg.weight_decay);
  for (int step = 1; step <= cfg.steps; ++step) {
    const BcObjective obj = bc_objective(ds, policy, 0.0, true);
    auto& w = policy.weights();
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = (w[i] - cfg.learning_rate * obj.grad[i]) * shrink;
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps) record(step);
  }
  return result;
}

double value_gap(const TabularMDP& mdp, const Policy& expert, const Policy& learner) {
  check_same_dims(mdp.dims(), expert.dims(), "value_gap expert");
  check_same_dims(mdp.dims(), learner.dims(), "value_gap learner");
  return policy_value(mdp, expert) - policy_value(mdp, learner);
}

}  // namespace imitlab
