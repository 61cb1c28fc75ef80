#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imitlab/bc.hpp"
#include "imitlab/dataset.hpp"
#include "imitlab/mdp.hpp"
#include "imitlab/objective.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

/// The two players of max_pi min_nu J(pi, nu) plus optimizer state.
struct SaddleState {
  NuTable nu;
  LogitTable logits;
  int grad_steps = 0;
  long env_steps = 0;
  double nu_lr = 0.1;
  double policy_lr = 0.1;
  /// lambda_nu * ||nu||^2 added to the nu player's objective.
  double nu_weight_decay = 0.0;

  Policy policy() const { return softmax_policy(logits); }
};

/// nu and logits filled with init_scale * N(0,1) draws (zeros when init_scale = 0).
SaddleState init_saddle_state(Dims dims, TimeMode mode, double init_scale = 0.0,
                              std::uint64_t seed = 0);

/// Fixed-capacity ring buffer of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Step& step);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  bool empty() const { return data_.empty(); }
  const Step& at(std::size_t i) const { return data_.at(i); }

  /// n draws, uniform with replacement.
  std::vector<Step> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Step> data_;
  std::uint64_t inserted_ = 0;
};

enum class InitialTerm { expert_states, exact_p0 };

struct MixConfig {
  double alpha = 0.0;
  int batch_size = 64;
  std::size_t replay_capacity = 100000;
  /// Environment steps taken before each gradient step (online training).
  int env_steps_per_update = 1;
  /// Total environment-step budget (online training).
  long env_step_budget = 0;
  InitialTerm initial_term = InitialTerm::expert_states;
};

/// Eq. (6):
///   log sum_i exp(nu(t_i,s_i,a_i) - gamma E_pi nu(t_i+1, s'_i, .))
///     - (1 - gamma) (1/T) sum_i E_pi nu(t_i, s_i, .)
/// The Bellman term vanishes at t = H. Throws DataError when gamma > 0 and a
/// record has no successor.
double offline_loss(const Dataset& ds, const SaddleState& state, double gamma);
LossGrad offline_loss_grad(const Dataset& ds, const SaddleState& state, double gamma);

/// Eq. (7); the gamma = 0 instance of offline_loss.
double gamma0_loss(const Dataset& ds, const SaddleState& state);
LossGrad gamma0_loss_grad(const Dataset& ds, const SaddleState& state);

/// Mixed objective with d_mix = (1 - alpha) d_exp + alpha d_RB:
///   log[(1-alpha) sum_i e^{x_i} + (alpha T / B) sum_j e^{y_j}]
///     - (1-alpha)(1-gamma) I(nu, pi)
///     - alpha (1/B) sum_j (nu - B^pi nu)(t_j, s_j, a_j)
/// x uses the recorded successor when present and the exact Bellman term
/// otherwise; y always uses the exact term. I is the expert-state average of
/// E_pi nu (so alpha = 0 reproduces offline_loss), or the exact p_0 average at
/// t = 1 with InitialTerm::exact_p0.
double mix_loss(const Dataset& ds, const std::vector<Step>& batch, const SaddleState& state,
                double gamma, const MixConfig& cfg, const TabularMDP& mdp);
LossGrad mix_loss_grad(const Dataset& ds, const std::vector<Step>& batch, const SaddleState& state,
                       double gamma, const MixConfig& cfg, const TabularMDP& mdp);
/// Draws a batch of cfg.batch_size from rb first. Throws StateError when
/// alpha > 0 and rb is empty.
double mix_loss(const Dataset& ds, const ReplayBuffer& rb, const SaddleState& state, double gamma,
                const MixConfig& cfg, const TabularMDP& mdp, Rng& rng);

enum class LossKind { offline, gamma0, mix };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct GdaConfig {
  int steps = 1000;
  double gamma = 0.0;
  int eval_every = 100;
  std::uint64_t seed = 0;
};

struct GdaTraceRow {
  long env_steps = 0;
  int grad_steps = 0;
  double loss = 0.0;
  double value_gap = 0.0;  // NaN without MDP and expert
  double tv_to_bc = 0.0;
  bool diverged = false;
};

/// Everything the solver reads besides its own state.
struct GdaInputs {
  const Dataset* dataset = nullptr;
  /// Required for mix losses and for value-gap evaluation.
  const TabularMDP* mdp = nullptr;
  const Policy* expert = nullptr;
  MixConfig mix;
  /// Replay data for LossKind::mix (not modified).
  const ReplayBuffer* replay = nullptr;
};

struct GdaOutcome {
  SaddleState state;
  std::vector<GdaTraceRow> trace;
  bool diverged = false;
  /// Gradient step at which a non-finite loss or gradient appeared. The
  /// returned state is the last finite one.
  std::optional<int> diverged_at;
};

/// Alternating gradient descent-ascent, one step each, nu first:
///   nu     <- nu - eta_nu (dL/dnu + 2 lambda_nu nu)
///   logits <- logits + eta_pi dL/dlogits   (evaluated at the new nu)
GdaOutcome gda_optimize(LossKind kind, const GdaInputs& inputs, SaddleState state0,
                        const GdaConfig& cfg);

/// Online ValueDice: before every gradient step, act env_steps_per_update
/// times in the MDP with the current policy (until the budget is used),
/// store the transitions, then take one GDA step on mix_loss.
GdaOutcome online_train(const TabularMDP& mdp, const Policy& expert, const Dataset& ds,
                        const MixConfig& mix, SaddleState state0, const GdaConfig& cfg);

/// Mean over dataset-visited (t, s) of TV(pi_t(.|s), bc_t(.|s)).
double tv_on_visited(const Policy& pi, const Policy& bc, const Dataset& ds);

/// Fraction of visited (t, s) where the greedy actions of pi and bc agree.
double argmax_match_rate(const Policy& pi, const Policy& bc, const Dataset& ds);

}  // namespace imitlab
