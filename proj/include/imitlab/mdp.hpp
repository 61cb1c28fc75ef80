#pragma once

// Finite episodic MDPs, tabular policies, occupancy measures and exact
// dynamic-programming evaluation.
//
// Conventions used throughout the library:
//   * states and actions are 0-based indices;
//   * time indices t are 1-based, t = 1..H, for every public accessor and
//     operation (p_t, pi_t, d_t, dataset records);
//   * probabilities are doubles, validated to 1e-9.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imitlab {

inline constexpr double kProbTolerance = 1e-9;

struct Dims {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
};

/// One record of an episode: at time t the agent was in s, took a, and moved
/// to s_next. s_next is absent only in datasets that were stripped of
/// successors on purpose.
struct Step {
  int t = 0;
  int s = 0;
  int a = 0;
  std::optional<int> s_next;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::vector<Step> steps;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Finite-horizon MDP with non-stationary transitions p_t(s'|s,a), t = 1..H.
///
/// Immutable after construction; the constructor validates every invariant
/// (stochastic rows, rewards in [0,1], normalized initial distribution).
class TabularMDP {
 public:
  TabularMDP(int num_states, int num_actions, int horizon, std::vector<double> transitions,
             std::vector<double> rewards, std::vector<double> initial_dist,
             std::optional<double> discount = std::nullopt);

  int num_states() const { return dims_.num_states; }
  int num_actions() const { return dims_.num_actions; }
  int horizon() const { return dims_.horizon; }
  const Dims& dims() const { return dims_; }

  double transition(int t, int s, int a, int next) const;
  std::span<const double> next_state_dist(int t, int s, int a) const;
  double reward(int s, int a) const { return rewards_[index_sa(s, a)]; }
  double initial(int s) const { return initial_[static_cast<std::size_t>(s)]; }
  std::span<const double> initial_dist() const { return initial_; }

  /// Flattened row-major arrays: transitions[((t-1)*S + s)*A + a)*S + s'].
  const std::vector<double>& transitions() const { return transitions_; }
  const std::vector<double>& rewards() const { return rewards_; }

  std::optional<double> discount() const { return discount_; }
  TabularMDP with_discount(std::optional<double> gamma) const;

  /// True when every transition row is a point mass.
  bool is_deterministic() const;

 private:
  std::size_t index_sa(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(dims_.num_actions) +
           static_cast<std::size_t>(a);
  }
  std::size_t row_offset(int t, int s, int a) const;

  Dims dims_;
  std::vector<double> transitions_;
  std::vector<double> rewards_;
  std::vector<double> initial_;
  std::optional<double> discount_;
};

enum class PolicyKind { stationary, non_stationary };

/// Tabular policy pi_t(a|s). Stationary policies are stored expanded to H
/// identical slices so that every consumer has a single code path.
class Policy {
 public:
  Policy(Dims dims, std::vector<double> probs, PolicyKind kind = PolicyKind::non_stationary);

  static Policy uniform(Dims dims);
  /// Expands one |S|x|A| table to all H slices.
  static Policy stationary(Dims dims, std::span<const double> probs_sa);
  /// actions[(t-1)*S + s] is the action taken at (t, s).
  static Policy deterministic(Dims dims, std::span<const int> actions);

  const Dims& dims() const { return dims_; }
  PolicyKind kind() const { return kind_; }
  double prob(int t, int s, int a) const { return probs_[offset(t, s) + static_cast<std::size_t>(a)]; }
  std::span<const double> row(int t, int s) const;
  const std::vector<double>& probs() const { return probs_; }

  /// Most likely action; ties go to the lowest index.
  int greedy_action(int t, int s) const;
  bool is_deterministic_at(int t, int s) const;

 private:
  std::size_t offset(int t, int s) const {
    return (static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(dims_.num_states) +
            static_cast<std::size_t>(s)) *
           static_cast<std::size_t>(dims_.num_actions);
  }

  Dims dims_;
  std::vector<double> probs_;
  PolicyKind kind_;
};

/// d_t(s,a) = P(s_t = s, a_t = a) for t = 1..H.
class OccupancyMeasure {
 public:
  OccupancyMeasure(Dims dims, std::vector<double> d);

  const Dims& dims() const { return dims_; }
  double at(int t, int s, int a) const;
  /// Marginal d_t(s).
  double state(int t, int s) const;
  std::span<const double> slice(int t) const;
  const std::vector<double>& values() const { return d_; }

 private:
  Dims dims_;
  std::vector<double> d_;
};

enum class TimeMode { stationary, per_step };

/// Real-valued table over (t, s, a). In stationary mode the time index is
/// accepted but ignored. Used for the ValueDice dual variable nu and for
/// policy logits.
class ActionTable {
 public:
  ActionTable(Dims dims, TimeMode mode, double fill = 0.0);
  ActionTable(Dims dims, TimeMode mode, std::vector<double> values);

  const Dims& dims() const { return dims_; }
  TimeMode mode() const { return mode_; }
  std::size_t index(int t, int s, int a) const;
  double at(int t, int s, int a) const { return values_[index(t, s, a)]; }
  double& at(int t, int s, int a) { return values_[index(t, s, a)]; }
  std::span<const double> row(int t, int s) const;
  std::span<double> row(int t, int s);
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  bool all_finite() const;

 private:
  Dims dims_;
  TimeMode mode_;
  std::vector<double> values_;
};

using NuTable = ActionTable;
using LogitTable = ActionTable;

/// Row-wise softmax of a logit table into a policy.
Policy softmax_policy(const LogitTable& logits);

OccupancyMeasure compute_occupancy(const TabularMDP& mdp, const Policy& policy);

/// Expected H-step return computed as sum_t <d_t, r>.
double policy_value(const TabularMDP& mdp, const Policy& policy);

/// Expected H-step return computed by backward induction, sum_s p0(s) V_1(s).
double backward_induction_value(const TabularMDP& mdp, const Policy& policy);

/// State values V_t(s) for t = 1..H+1 (V_{H+1} = 0), laid out [(t-1)*S + s].
std::vector<double> state_values(const TabularMDP& mdp, const Policy& policy);

/// Samples one complete H-step episode. Reproducible given the seed.
Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, std::uint64_t seed);

/// One-step zero-reward Bellman backup
///   gamma * sum_{s'} p_t(s'|s,a) sum_{a'} pi_{t+1}(a'|s') nu(t+1, s', a'),
/// with the terminal convention nu(H+1, ., .) = 0. Uses the MDP's discount;
/// throws ConfigError when it is unset.
double bellman_nu(const TabularMDP& mdp, const Policy& policy, const NuTable& nu, int t, int s,
                  int a);
double bellman_nu(const TabularMDP& mdp, const Policy& policy, const NuTable& nu, int t, int s,
                  int a, double gamma);

/// Throws DimensionError unless the policy was built for the MDP's dimensions.
void check_same_dims(const Dims& expected, const Dims& actual, std::string_view what);

/// JSON document with dimensions and flattened row-major arrays. Doubles are
/// written in shortest round-trip form, so parsing restores them bit-exactly.
std::string mdp_to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(std::string_view text);

}  // namespace imitlab
