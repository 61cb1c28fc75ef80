#include <gtest/gtest.h>

#include "imitlab/bc.hpp"
#include "imitlab/envs.hpp"
#include "imitlab/error.hpp"
#include "imitlab/objective.hpp"
#include "imitlab/valuedice.hpp"
#include "test_util.hpp"

using namespace imitlab;
using imitlab::testing::gradient_error;
using imitlab::testing::random_mdp;

namespace {

// E_{a ~ pi_t(.|s)} nu(t, s, a), zero past the horizon.
double expect_nu(const SaddleState& st, const Policy& pi, int t, int s) {
  if (t > pi.dims().horizon) return 0.0;
  double e = 0.0;
  for (int a = 0; a < pi.dims().num_actions; ++a) e += pi.prob(t, s, a) * st.nu.at(t, s, a);
  return e;
}

double exact_backup(const TabularMDP& m, const SaddleState& st, const Policy& pi, const Step& x, double gamma) {
  if (x.t == m.horizon()) return 0.0;
  double b = 0.0;
  for (int n = 0; n < m.num_states(); ++n) b += m.transition(x.t, x.s, x.a, n) * expect_nu(st, pi, x.t + 1, n);
  return gamma * b;
}

// Plain-summation re-implementation of Eq. (6).
double offline_oracle(const Dataset& ds, const SaddleState& st, double gamma) {
  const Policy pi = st.policy();
  const int H = ds.horizon;
  double sum_exp = 0.0, linear = 0.0;
  int T = 0;
  for (const auto& tr : ds.trajectories)
    for (const auto& x : tr.steps) {
      const double b = x.t == H ? 0.0 : gamma * expect_nu(st, pi, x.t + 1, *x.s_next);
      sum_exp += std::exp(st.nu.at(x.t, x.s, x.a) - b);
      linear += expect_nu(st, pi, x.t, x.s);
      ++T;
    }
  return std::log(sum_exp) - (1 - gamma) * linear / T;
}

double mix_oracle(const Dataset& ds, const std::vector<Step>& batch, const SaddleState& st, double gamma,
                  double alpha, const TabularMDP& m) {
  const Policy pi = st.policy();
  double expert = 0.0, replay = 0.0, linear = 0.0, residual = 0.0;
  int T = 0;
  for (const auto& tr : ds.trajectories)
    for (const auto& x : tr.steps) {
      const double b = x.s_next ? (x.t == m.horizon() ? 0.0 : gamma * expect_nu(st, pi, x.t + 1, *x.s_next))
                                : exact_backup(m, st, pi, x, gamma);
      expert += std::exp(st.nu.at(x.t, x.s, x.a) - b);
      linear += expect_nu(st, pi, x.t, x.s);
      ++T;
    }
  for (const auto& y : batch) {
    const double r = st.nu.at(y.t, y.s, y.a) - exact_backup(m, st, pi, y, gamma);
    replay += std::exp(r);
    residual += r;
  }
  const double B = static_cast<double>(batch.size());
  return std::log((1 - alpha) * expert + alpha * T / B * replay) - (1 - alpha) * (1 - gamma) * linear / T -
         alpha * residual / B;
}

struct Instance {
  TabularMDP mdp = random_mdp(4, 3, 4, 21);
  Policy expert = optimal_expert(mdp);
  Dataset ds = collect_expert(mdp, expert, 3, 5);
};

std::vector<double> concat(const SaddleState& st) {
  std::vector<double> x = st.nu.values();
  x.insert(x.end(), st.logits.values().begin(), st.logits.values().end());
  return x;
}

SaddleState with_params(SaddleState st, const std::vector<double>& x) {
  const std::size_t n = st.nu.values().size();
  std::copy(x.begin(), x.begin() + static_cast<long>(n), st.nu.values().begin());
  std::copy(x.begin() + static_cast<long>(n), x.end(), st.logits.values().begin());
  return st;
}

std::vector<Step> random_batch(const TabularMDP& m, Rng& rng, int n) {
  std::vector<Step> out;
  for (int i = 0; i < n; ++i) {
    const int t = 1 + rng.uniform_int(m.horizon()), s = rng.uniform_int(m.num_states()),
              a = rng.uniform_int(m.num_actions());
    out.push_back({t, s, a, rng.categorical(m.next_state_dist(t, s, a))});
  }
  return out;
}

}  // namespace

TEST(Offline, ZeroNuGivesLogT) {
  Instance f;
  const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step);
  EXPECT_NEAR(offline_loss(f.ds, st, 0.9), std::log(12.0), 1e-15);
}

TEST(Offline, SingleDeterministicSampleIsZero) {
  Dataset ds;
  ds.horizon = 1;
  ds.trajectories = {Trajectory{{{1, 0, 1, 0}}}};
  SaddleState st = init_saddle_state(Dims{1, 2, 1}, TimeMode::per_step, 1.0, 3);
  st.logits.at(1, 0, 1) = 50.0;
  st.logits.at(1, 0, 0) = -50.0;
  EXPECT_NEAR(offline_loss(ds, st, 0.0), 0.0, 1e-12);
}

TEST(Offline, MatchesSummationOracle) {
  Instance f;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 1.0, seed);
    for (double gamma : {0.0, 0.5, 0.9})
      EXPECT_NEAR(offline_loss(f.ds, st, gamma), offline_oracle(f.ds, st, gamma), 1e-10);
  }
}

TEST(Offline, SubsampledWithoutSuccessorIsDataError) {
  Instance f;
  const Dataset sub = subsample(f.ds, 2, 1, false);
  const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step);
  EXPECT_THROW(offline_loss(sub, st, 0.9), DataError);
  EXPECT_NO_THROW(offline_loss(sub, st, 0.0));
}

TEST(Gamma0, ArithmeticExample) {
  Dataset ds;
  ds.horizon = 1;
  ds.trajectories = {Trajectory{{{1, 0, 0, 0}}}};
  SaddleState st = init_saddle_state(Dims{1, 2, 1}, TimeMode::per_step);
  st.nu.at(1, 0, 0) = 1.0;
  EXPECT_NEAR(gamma0_loss(ds, st), 0.5, 1e-15);
}

TEST(Gamma0, BcPolicyGivesLogT) {
  Instance f;
  SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 1.0, 4);
  // nu(t,s,.) constant across actions on visited states makes the inner term vanish for any pi.
  for (int t = 1; t <= 4; ++t)
    for (int s = 0; s < 4; ++s) {
      for (int a = 0; a < 3; ++a) st.nu.at(t, s, a) = 0.25 * t;
      const int bc = f.expert.greedy_action(t, s);
      for (int a = 0; a < 3; ++a) st.logits.at(t, s, a) = a == bc ? 60.0 : -60.0;
    }
  // Deterministic expert, one action per visited (t,s): the loss is log sum e^{nu} - mean nu.
  const double T = 12.0;
  double sum_exp = 0.0, mean_nu = 0.0;
  for (const auto& tr : f.ds.trajectories)
    for (const auto& x : tr.steps) {
      sum_exp += std::exp(st.nu.at(x.t, x.s, x.a));
      mean_nu += st.nu.at(x.t, x.s, x.a) / T;
    }
  EXPECT_NEAR(gamma0_loss(f.ds, st), std::log(sum_exp) - mean_nu, 1e-12);
  for (auto& v : st.nu.values()) v = 0.0;
  EXPECT_NEAR(gamma0_loss(f.ds, st), std::log(T), 1e-12);
}

TEST(Gamma0, SharesOfflinePath) {
  Instance f;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 1.0, seed);
    EXPECT_EQ(gamma0_loss(f.ds, st), offline_loss(f.ds, st, 0.0));
  }
}

TEST(Mix, AlphaZeroEqualsOffline) {
  Instance f;
  MixConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 1.0, seed);
    EXPECT_NEAR(mix_loss(f.ds, {}, st, 0.9, cfg, f.mdp), offline_loss(f.ds, st, 0.9), 1e-10);
  }
}

TEST(Mix, MatchesSummationOracle) {
  Instance f;
  const Dataset sub = subsample(f.ds, 2, 3, false);
  Rng rng(8);
  MixConfig cfg;
  cfg.alpha = 0.5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 1.0, seed);
    const auto batch = random_batch(f.mdp, rng, 7);
    for (const Dataset* ds : {static_cast<const Dataset*>(&f.ds), static_cast<const Dataset*>(&sub)})
      EXPECT_NEAR(mix_loss(*ds, batch, st, 0.9, cfg, f.mdp), mix_oracle(*ds, batch, st, 0.9, 0.5, f.mdp), 1e-10);
  }
}

TEST(Mix, EmptyReplayIsStateError) {
  Instance f;
  MixConfig cfg;
  cfg.alpha = 0.3;
  const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step);
  ReplayBuffer rb(10);
  Rng rng(1);
  EXPECT_THROW(mix_loss(f.ds, rb, st, 0.9, cfg, f.mdp, rng), StateError);
  EXPECT_THROW(mix_loss(f.ds, {}, st, 0.9, cfg, f.mdp), StateError);
}

TEST(Gradients, AllLossesMatchFiniteDifferences) {
  Instance f;
  Rng rng(12);
  MixConfig cfg;
  cfg.alpha = 0.4;
  const Dataset sub = subsample(f.ds, 2, 3, false);
  for (auto mode : {TimeMode::per_step, TimeMode::stationary}) {
    for (int trial = 0; trial < 20; ++trial) {
      const SaddleState st = init_saddle_state(f.mdp.dims(), mode, 1.0, derive_seed(99, static_cast<std::uint64_t>(trial)));
      const auto x = concat(st);
      const auto batch = random_batch(f.mdp, rng, 5);
      auto check = [&](auto loss, auto grad) {
        const LossGrad g = grad(st);
        std::vector<double> gx = g.grad_nu;
        gx.insert(gx.end(), g.grad_logits.begin(), g.grad_logits.end());
        EXPECT_LT(gradient_error([&](const std::vector<double>& y) { return loss(with_params(st, y)); }, x, gx), 1e-4);
        EXPECT_NEAR(g.loss, loss(st), 1e-12);
      };
      check([&](const SaddleState& s) { return offline_loss(f.ds, s, 0.9); },
            [&](const SaddleState& s) { return offline_loss_grad(f.ds, s, 0.9); });
      check([&](const SaddleState& s) { return gamma0_loss(f.ds, s); },
            [&](const SaddleState& s) { return gamma0_loss_grad(f.ds, s); });
      check([&](const SaddleState& s) { return mix_loss(sub, batch, s, 0.9, cfg, f.mdp); },
            [&](const SaddleState& s) { return mix_loss_grad(sub, batch, s, 0.9, cfg, f.mdp); });
    }
  }
}

TEST(Objective, Validation) {
  ObjectiveTerms terms;
  terms.gamma = 1.0;
  terms.log_terms.push_back({BellmanSample{1, 0, 0, 0, BellmanSource::successor}, 1.0});
  NuTable nu(Dims{1, 1, 1}, TimeMode::per_step);
  EXPECT_THROW(evaluate_objective(terms, nu, nu, false), ArgumentError);
  terms.gamma = 0.5;
  terms.log_terms[0].sample.source = BellmanSource::exact;
  NuTable nu2(Dims{1, 1, 2}, TimeMode::per_step);
  EXPECT_THROW(evaluate_objective(terms, nu2, nu2, false), ConfigError);
}

TEST(Gda, EquilibriumHasZeroPolicyGradient) {
  Dataset ds;
  ds.horizon = 2;
  ds.trajectories = {Trajectory{{{1, 0, 1, 1}, {2, 1, 0, 0}}}};
  SaddleState st = init_saddle_state(Dims{2, 2, 2}, TimeMode::per_step);
  st.logits.at(1, 0, 1) = 80.0;
  st.logits.at(2, 1, 0) = 80.0;
  const LossGrad g = gamma0_loss_grad(ds, st);
  EXPECT_NEAR(g.grad_logits[st.logits.index(1, 0, 0)], 0.0, 1e-12);
  EXPECT_NEAR(g.grad_logits[st.logits.index(1, 0, 1)], 0.0, 1e-12);
  EXPECT_NEAR(g.grad_logits[st.logits.index(2, 1, 0)], 0.0, 1e-12);
}

TEST(Gda, Theorem2OnDetChain) {
  EnvSpec spec;
  spec.num_states = 6;
  spec.num_actions = 3;
  spec.horizon = 5;
  for (std::uint64_t seed = 2021; seed <= 2025; ++seed) {
    spec.seed = seed;
    const TabularMDP m = build_env(spec);
    const Policy expert = optimal_expert(m);
    const Dataset ds = collect_expert(m, expert, 1, seed);
    GdaConfig cfg;
    cfg.steps = 2000;
    cfg.seed = seed;
    const GdaOutcome res = gda_optimize(LossKind::gamma0, {&ds, &m, &expert, {}, nullptr},
                                        init_saddle_state(m.dims(), TimeMode::per_step, 0.1, seed), cfg);
    EXPECT_FALSE(res.diverged);
    EXPECT_DOUBLE_EQ(argmax_match_rate(res.state.policy(), bc_counting(ds, m.dims()), ds), 1.0);
    EXPECT_EQ(res.trace.front().grad_steps, 0);
    EXPECT_EQ(res.trace.back().grad_steps, 2000);
    EXPECT_LT(res.trace.back().tv_to_bc, res.trace.front().tv_to_bc);
  }
}

TEST(Gda, DeterministicGivenSeed) {
  Instance f;
  GdaConfig cfg;
  cfg.steps = 300;
  cfg.gamma = 0.9;
  const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 0.1, 3);
  const auto a = gda_optimize(LossKind::offline, {&f.ds, &f.mdp, &f.expert, {}, nullptr}, st, cfg);
  const auto b = gda_optimize(LossKind::offline, {&f.ds, &f.mdp, &f.expert, {}, nullptr}, st, cfg);
  EXPECT_EQ(a.state.nu.values(), b.state.nu.values());
  EXPECT_EQ(a.state.logits.values(), b.state.logits.values());
}

TEST(Gda, DivergenceIsReportedWithStep) {
  Instance f;
  SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step);
  st.nu_lr = 1e300;
  st.policy_lr = 1e300;
  GdaConfig cfg;
  cfg.steps = 50;
  cfg.gamma = 0.9;
  const GdaOutcome res = gda_optimize(LossKind::offline, {&f.ds, nullptr, nullptr, {}, nullptr}, st, cfg);
  EXPECT_TRUE(res.diverged);
  ASSERT_TRUE(res.diverged_at.has_value());
  EXPECT_GE(*res.diverged_at, 1);
  EXPECT_TRUE(res.state.nu.all_finite());
  EXPECT_TRUE(res.trace.back().diverged);
}

TEST(Online, ZeroBudgetAlphaZeroEqualsOffline) {
  Instance f;
  GdaConfig cfg;
  cfg.steps = 200;
  cfg.gamma = 0.9;
  MixConfig mix;
  const SaddleState st = init_saddle_state(f.mdp.dims(), TimeMode::per_step, 0.1, 1);
  const auto online = online_train(f.mdp, f.expert, f.ds, mix, st, cfg);
  const auto offline = gda_optimize(LossKind::offline, {&f.ds, &f.mdp, &f.expert, {}, nullptr}, st, cfg);
  EXPECT_EQ(online.state.nu.values(), offline.state.nu.values());
  EXPECT_EQ(online.state.logits.values(), offline.state.logits.values());
  EXPECT_EQ(online.state.env_steps, 0);
}

TEST(Online, CompleteTrajectoriesReachExpert) {
  EnvSpec spec;
  spec.num_states = 10;
  spec.horizon = 10;
  spec.seed = derive_seed(2021, 11);
  const TabularMDP m = build_env(spec);
  const Policy expert = optimal_expert(m);
  const Dataset ds = collect_expert(m, expert, 10, 1);
  MixConfig mix;
  mix.alpha = 0.5;
  mix.env_step_budget = 20000;
  GdaConfig cfg;
  cfg.steps = 20000;
  cfg.gamma = 0.9;
  cfg.eval_every = 5000;
  SaddleState st = init_saddle_state(m.dims(), TimeMode::per_step, 0.1, 3);
  st.nu_weight_decay = 1e-3;
  const auto res = online_train(m, expert, ds, mix, st, cfg);
  EXPECT_EQ(res.state.env_steps, 20000);
  EXPECT_LE(value_gap(m, expert, res.state.policy()), 0.05 * policy_value(m, expert));
  EXPECT_EQ(res.trace.back().env_steps, 20000);
}

TEST(Replay, RingAndSampling) {
  ReplayBuffer rb(3);
  Rng rng(1);
  EXPECT_THROW(rb.sample(1, rng), StateError);
  for (int i = 0; i < 5; ++i) rb.push(Step{1, i, 0, 0});
  EXPECT_EQ(rb.size(), 3u);
  EXPECT_EQ(rb.inserted(), 5u);
  std::vector<int> seen(5, 0);
  for (const auto& x : rb.sample(3000, rng)) ++seen[static_cast<std::size_t>(x.s)];
  EXPECT_EQ(seen[0] + seen[1], 0);
  for (int s = 2; s < 5; ++s) EXPECT_NEAR(seen[static_cast<std::size_t>(s)] / 3000.0, 1.0 / 3, 0.04);
  Rng r1(4), r2(4);
  EXPECT_EQ(rb.sample(10, r1), rb.sample(10, r2));
  EXPECT_THROW(ReplayBuffer(0), ArgumentError);
}

TEST(Metrics, TvAndArgmax) {
  Dataset ds;
  ds.horizon = 1;
  ds.trajectories = {Trajectory{{{1, 0, 0, 0}}}, Trajectory{{{1, 1, 1, 1}}}};
  const Dims d{3, 2, 1};
  const Policy bc = bc_counting(ds, d);
  const Policy u = Policy::uniform(d);
  EXPECT_DOUBLE_EQ(tv_on_visited(u, bc, ds), 0.5);
  EXPECT_DOUBLE_EQ(tv_on_visited(bc, bc, ds), 0.0);
  EXPECT_DOUBLE_EQ(argmax_match_rate(u, bc, ds), 0.5);
  EXPECT_EQ(parse_loss_kind(to_string(LossKind::mix)), LossKind::mix);
  EXPECT_THROW(parse_loss_kind("nope"), ConfigError);
}
