#include "imitlab/valuedice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "imitlab/error.hpp"

namespace imitlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

BellmanSample successor_sample(const Step& step) {
  return BellmanSample{step.t, step.s, step.a, step.s_next, BellmanSource::successor};
}

BellmanSample exact_sample(const Step& step) {
  return BellmanSample{step.t, step.s, step.a, step.s_next, BellmanSource::exact};
}

int checked_total(const Dataset& ds) {
  const int T = ds.total_pairs();
  if (T == 0) throw DataError("ValueDice loss needs a nonempty dataset");
  return T;
}

ObjectiveTerms offline_terms(const Dataset& ds, double gamma) {
  const int T = checked_total(ds);
  ObjectiveTerms terms;
  terms.gamma = gamma;
  const double coef = (1.0 - gamma) / T;
  for (const auto& traj : ds.trajectories)
    for (const auto& step : traj.steps) {
      terms.log_terms.push_back({successor_sample(step), 1.0});
      terms.expect_terms.push_back({step.t, step.s, coef});
    }
  return terms;
}

ObjectiveTerms mix_terms(const Dataset& ds, const std::vector<Step>& batch, double gamma,
                         const MixConfig& cfg, const TabularMDP& mdp) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 1.0)) throw ConfigError("mix: alpha must lie in [0, 1)");
  if (cfg.alpha > 0.0 && batch.empty()) throw StateError("mix: alpha > 0 needs replay samples");
  const int T = checked_total(ds);
  const double alpha = cfg.alpha;
  ObjectiveTerms terms;
  terms.gamma = gamma;
  terms.mdp = &mdp;
  for (const auto& traj : ds.trajectories)
    for (const auto& step : traj.steps) {
      terms.log_terms.push_back(
          {step.s_next ? successor_sample(step) : exact_sample(step), 1.0 - alpha});
      if (cfg.initial_term == InitialTerm::expert_states)
        terms.expect_terms.push_back({step.t, step.s, (1.0 - alpha) * (1.0 - gamma) / T});
    }
  if (cfg.initial_term == InitialTerm::exact_p0)
    for (int s = 0; s < mdp.num_states(); ++s)
      if (mdp.initial(s) > 0.0)
        terms.expect_terms.push_back({1, s, (1.0 - alpha) * (1.0 - gamma) * mdp.initial(s)});
  if (alpha > 0.0) {
    const double B = static_cast<double>(batch.size());
    for (const auto& step : batch) {
      terms.log_terms.push_back({exact_sample(step), alpha * T / B});
      terms.residual_terms.push_back({exact_sample(step), alpha / B});
    }
  }
  return terms;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

using LossFn = std::function<LossGrad(const SaddleState&, bool)>;
using BeforeStep = std::function<void(SaddleState&)>;

/// Shared GDA loop for the offline and online drivers.
GdaOutcome run_gda(const LossFn& loss_fn, const GdaInputs& inputs, SaddleState state,
                   const GdaConfig& cfg, const BeforeStep& before_step) {
  if (cfg.steps < 0) throw ConfigError("gda: steps must be >= 0");
  if (!(state.nu_lr > 0.0) || !(state.policy_lr > 0.0))
    throw ConfigError("gda: learning rates must be positive");
  if (state.nu_weight_decay < 0.0) throw ConfigError("gda: nu_weight_decay must be >= 0");
  if (!inputs.dataset) throw ConfigError("gda: dataset missing");
  const Dataset& ds = *inputs.dataset;
  const Dims dims = state.nu.dims();
  check_same_dims(dims, state.logits.dims(), "gda logits");

  const Policy bc = bc_counting(ds, dims,
                                state.logits.mode() == TimeMode::per_step ? CountingMode::per_step
                                                                          : CountingMode::aggregated);
  GdaOutcome out{std::move(state), {}, false, std::nullopt};
  SaddleState& st = out.state;

  auto record = [&](double loss, bool diverged) {
    const Policy pi = st.policy();
    double gap = kNaN;
    if (inputs.mdp && inputs.expert) gap = value_gap(*inputs.mdp, *inputs.expert, pi);
    out.trace.push_back({st.env_steps, st.grad_steps, loss, gap, tv_on_visited(pi, bc, ds), diverged});
  };
  auto safe_loss = [&]() {
    try {
      return loss_fn(st, false).loss;
    } catch (const StateError&) {
      return kNaN;
    }
  };

  record(safe_loss(), false);
  for (int step = 1; step <= cfg.steps; ++step) {
    if (before_step) before_step(st);
    const SaddleState previous = st;

    LossGrad g = loss_fn(st, true);
    bool finite = std::isfinite(g.loss) && all_finite(g.grad_nu);
    if (finite) {
      auto& nu = st.nu.values();
      for (std::size_t i = 0; i < nu.size(); ++i)
        nu[i] -= st.nu_lr * (g.grad_nu[i] + 2.0 * st.nu_weight_decay * nu[i]);
      g = loss_fn(st, true);
      finite = std::isfinite(g.loss) && all_finite(g.grad_logits) && st.nu.all_finite();
    }
    if (finite) {
      auto& logits = st.logits.values();
      for (std::size_t i = 0; i < logits.size(); ++i) logits[i] += st.policy_lr * g.grad_logits[i];
      finite = st.logits.all_finite();
    }
    if (!finite) {
      const double bad_loss = g.loss;
      st = previous;
      out.diverged = true;
      out.diverged_at = step;
      record(bad_loss, true);
      return out;
    }
    ++st.grad_steps;
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps)
      record(safe_loss(), false);
  }
  return out;
}

}  // namespace

SaddleState init_saddle_state(Dims dims, TimeMode mode, double init_scale, std::uint64_t seed) {
  SaddleState st{NuTable(dims, mode), LogitTable(dims, mode)};
  if (init_scale > 0.0) {
    Rng rng(derive_seed(seed, 0x5add1e));
    for (double& x : st.nu.values()) x = init_scale * rng.normal();
    for (double& x : st.logits.values()) x = init_scale * rng.normal();
  }
  return st;
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ArgumentError("ReplayBuffer: capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 4096));
}

void ReplayBuffer::push(const Step& step) {
  if (data_.size() < capacity_)
    data_.push_back(step);
  else
    data_[inserted_ % capacity_] = step;
  ++inserted_;
}

std::vector<Step> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw StateError("ReplayBuffer: sampling from an empty buffer");
  std::vector<Step> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(data_[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data_.size())))]);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

LossGrad offline_loss_grad(const Dataset& ds, const SaddleState& state, double gamma) {
  return evaluate_objective(offline_terms(ds, gamma), state.nu, state.logits, true);
}

double offline_loss(const Dataset& ds, const SaddleState& state, double gamma) {
  return evaluate_objective(offline_terms(ds, gamma), state.nu, state.logits, false).loss;
}

double gamma0_loss(const Dataset& ds, const SaddleState& state) { return offline_loss(ds, state, 0.0); }

LossGrad gamma0_loss_grad(const Dataset& ds, const SaddleState& state) {
  return offline_loss_grad(ds, state, 0.0);
}

double mix_loss(const Dataset& ds, const std::vector<Step>& batch, const SaddleState& state,
                double gamma, const MixConfig& cfg, const TabularMDP& mdp) {
  return evaluate_objective(mix_terms(ds, batch, gamma, cfg, mdp), state.nu, state.logits, false)
      .loss;
}

LossGrad mix_loss_grad(const Dataset& ds, const std::vector<Step>& batch, const SaddleState& state,
                       double gamma, const MixConfig& cfg, const TabularMDP& mdp) {
  return evaluate_objective(mix_terms(ds, batch, gamma, cfg, mdp), state.nu, state.logits, true);
}

double mix_loss(const Dataset& ds, const ReplayBuffer& rb, const SaddleState& state, double gamma,
                const MixConfig& cfg, const TabularMDP& mdp, Rng& rng) {
  if (cfg.alpha > 0.0 && rb.empty()) throw StateError("mix: alpha > 0 with an empty replay buffer");
  std::vector<Step> batch;
  if (cfg.alpha > 0.0) batch = rb.sample(static_cast<std::size_t>(cfg.batch_size), rng);
  return mix_loss(ds, batch, state, gamma, cfg, mdp);
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::offline: return "offline";
    case LossKind::gamma0: return "gamma0";
    case LossKind::mix: return "mix";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "offline") return LossKind::offline;
  if (name == "gamma0") return LossKind::gamma0;
  if (name == "mix") return LossKind::mix;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Solvers

GdaOutcome gda_optimize(LossKind kind, const GdaInputs& inputs, SaddleState state0,
                        const GdaConfig& cfg) {
  if (!inputs.dataset) throw ConfigError("gda: dataset missing");
  const Dataset& ds = *inputs.dataset;
  if (kind == LossKind::offline || kind == LossKind::gamma0) {
    const double gamma = kind == LossKind::gamma0 ? 0.0 : cfg.gamma;
    const ObjectiveTerms terms = offline_terms(ds, gamma);
    const LossFn fn = [&](const SaddleState& st, bool grad) {
      return evaluate_objective(terms, st.nu, st.logits, grad);
    };
    return run_gda(fn, inputs, std::move(state0), cfg, nullptr);
  }

  if (!inputs.mdp) throw ConfigError("gda: mix loss needs an MDP");
  if (inputs.mix.batch_size < 1) throw ConfigError("mix: batch_size must be >= 1");
  Rng rng(derive_seed(cfg.seed, 0xba7c));
  std::vector<Step> batch;
  const LossFn fn = [&](const SaddleState& st, bool grad) {
    return evaluate_objective(mix_terms(ds, batch, cfg.gamma, inputs.mix, *inputs.mdp), st.nu,
                              st.logits, grad);
  };
  const BeforeStep before = [&](SaddleState&) {
    if (inputs.mix.alpha > 0.0) {
      if (!inputs.replay || inputs.replay->empty())
        throw StateError("mix: alpha > 0 with an empty replay buffer");
      batch = inputs.replay->sample(static_cast<std::size_t>(inputs.mix.batch_size), rng);
    }
  };
  return run_gda(fn, inputs, std::move(state0), cfg, before);
}

GdaOutcome online_train(const TabularMDP& mdp, const Policy& expert, const Dataset& ds,
                        const MixConfig& mix, SaddleState state0, const GdaConfig& cfg) {
  if (mix.batch_size < 1) throw ConfigError("mix: batch_size must be >= 1");
  if (mix.env_steps_per_update < 0) throw ConfigError("mix: env_steps_per_update must be >= 0");
  if (mix.env_step_budget < 0) throw ConfigError("mix: env_step_budget must be >= 0");
  check_same_dims(mdp.dims(), state0.nu.dims(), "online_train");

  ReplayBuffer replay(mix.replay_capacity);
  GdaInputs inputs{&ds, &mdp, &expert, mix, &replay};
  Rng env_rng(derive_seed(cfg.seed, 0xe7));
  Rng batch_rng(derive_seed(cfg.seed, 0xba7c));
  int t = 1;
  int s = env_rng.categorical(mdp.initial_dist());
  std::vector<Step> batch;

  const LossFn fn = [&](const SaddleState& st, bool grad) {
    return evaluate_objective(mix_terms(ds, batch, cfg.gamma, mix, mdp), st.nu, st.logits, grad);
  };
  const BeforeStep before = [&](SaddleState& st) {
    if (st.env_steps < mix.env_step_budget && mix.env_steps_per_update > 0) {
      const Policy pi = st.policy();
      for (int k = 0; k < mix.env_steps_per_update && st.env_steps < mix.env_step_budget; ++k) {
        const int a = env_rng.categorical(pi.row(t, s));
        const int next = env_rng.categorical(mdp.next_state_dist(t, s, a));
        replay.push(Step{t, s, a, next});
        ++st.env_steps;
        s = next;
        if (++t > mdp.horizon()) {
          t = 1;
          s = env_rng.categorical(mdp.initial_dist());
        }
      }
    }
    batch.clear();
    if (mix.alpha > 0.0) {
      if (replay.empty()) throw StateError("mix: alpha > 0 with an empty replay buffer");
      batch = replay.sample(static_cast<std::size_t>(mix.batch_size), batch_rng);
    }
  };
  return run_gda(fn, inputs, std::move(state0), cfg, before);
}

double tv_on_visited(const Policy& pi, const Policy& bc, const Dataset& ds) {
  check_same_dims(pi.dims(), bc.dims(), "tv_on_visited");
  const Visitation v(ds, pi.dims());
  double total = 0.0;
  int count = 0;
  for (int t = 1; t <= pi.dims().horizon; ++t)
    for (int s : v.visited(t)) {
      const auto p = pi.row(t, s);
      const auto q = bc.row(t, s);
      double tv = 0.0;
      for (std::size_t a = 0; a < p.size(); ++a) tv += std::abs(p[a] - q[a]);
      total += 0.5 * tv;
      ++count;
    }
  return count == 0 ? 0.0 : total / count;
}

double argmax_match_rate(const Policy& pi, const Policy& bc, const Dataset& ds) {
  check_same_dims(pi.dims(), bc.dims(), "argmax_match_rate");
  const Visitation v(ds, pi.dims());
  int match = 0, count = 0;
  for (int t = 1; t <= pi.dims().horizon; ++t)
    for (int s : v.visited(t)) {
      match += pi.greedy_action(t, s) == bc.greedy_action(t, s);
      ++count;
    }
  return count == 0 ? 1.0 : static_cast<double>(match) / count;
}

}  // namespace imitlab
