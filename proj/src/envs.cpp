#include "imitlab/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "imitlab/error.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

struct Builder {
  explicit Builder(const EnvSpec& spec)
      : S(as_size(spec.num_states)),
        A(as_size(spec.num_actions)),
        H(as_size(spec.horizon)),
        transitions(H * S * A * S, 0.0),
        rewards(S * A, 0.0),
        initial(S, 0.0) {}

  double& p(std::size_t t0, std::size_t s, std::size_t a, std::size_t next) {
    return transitions[((t0 * S + s) * A + a) * S + next];
  }
  double& r(std::size_t s, std::size_t a) { return rewards[s * A + a]; }

  /// Copies the t=1 slice to every later step (time-homogeneous families).
  void replicate_first_slice() {
    const std::size_t slice = S * A * S;
    for (std::size_t t0 = 1; t0 < H; ++t0)
      std::copy_n(transitions.begin(), slice, transitions.begin() + static_cast<long>(t0 * slice));
  }

  void uniform_initial(int k) {
    for (int s = 0; s < k; ++s) initial[as_size(s)] = 1.0 / k;
  }

  TabularMDP finish(const EnvSpec& spec) {
    return TabularMDP(spec.num_states, spec.num_actions, spec.horizon, std::move(transitions),
                      std::move(rewards), std::move(initial));
  }

  std::size_t S, A, H;
  std::vector<double> transitions;
  std::vector<double> rewards;
  std::vector<double> initial;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

TabularMDP build_det_chain(const EnvSpec& spec) {
  require(spec.num_initial_states <= spec.num_states, "det_chain: num_initial_states > num_states");
  Rng rng(derive_seed(spec.seed, 1));
  Builder b(spec);
  for (std::size_t s = 0; s < b.S; ++s) {
    const auto forward = as_size(rng.uniform_int(spec.num_actions));
    for (std::size_t a = 0; a < b.A; ++a) {
      if (a == forward) {
        b.p(0, s, a, std::min(s + 1, b.S - 1)) = 1.0;
        b.r(s, a) = 1.0;
      } else {
        b.p(0, s, a, s) = 1.0;
      }
    }
  }
  b.replicate_first_slice();
  b.uniform_initial(spec.num_initial_states);
  return b.finish(spec);
}

TabularMDP build_det_grid(const EnvSpec& spec) {
  require(spec.grid_width > 0, "det_grid: grid_width must be positive");
  require(spec.num_states % spec.grid_width == 0, "det_grid: num_states not divisible by grid_width");
  require(spec.num_actions <= 5, "det_grid: at most 5 actions (stay, right, down, left, up)");
  require(spec.num_initial_states <= spec.num_states, "det_grid: num_initial_states > num_states");
  constexpr std::array<std::array<int, 2>, 5> kMoves{{{0, 0}, {1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
  const int width = spec.grid_width;
  const int height = spec.num_states / width;
  const std::size_t goal = as_size(spec.num_states - 1);
  Builder b(spec);
  for (int s = 0; s < spec.num_states; ++s) {
    const int x = s % width, y = s / width;
    for (int a = 0; a < spec.num_actions; ++a) {
      const int nx = x + kMoves[as_size(a)][0], ny = y + kMoves[as_size(a)][1];
      const bool inside = nx >= 0 && nx < width && ny >= 0 && ny < height;
      const std::size_t next = inside ? as_size(ny * width + nx) : as_size(s);
      b.p(0, as_size(s), as_size(a), next) = 1.0;
      if (next == goal) b.r(as_size(s), as_size(a)) = 1.0;
    }
  }
  b.replicate_first_slice();
  b.uniform_initial(spec.num_initial_states);
  return b.finish(spec);
}

TabularMDP build_reset_cliff(const EnvSpec& spec) {
  require(spec.num_states >= 2, "reset_cliff: need at least one good state plus the bad state");
  require(spec.num_actions >= 2, "reset_cliff: need at least two actions");
  require(spec.slip >= 0.0 && spec.slip < 1.0, "reset_cliff: slip must lie in [0, 1)");
  const int good = spec.num_states - 1;
  require(spec.num_initial_states <= good, "reset_cliff: num_initial_states exceeds good states");
  const std::size_t bad = as_size(good);
  Rng rng(derive_seed(spec.seed, 2));
  Builder b(spec);
  for (std::size_t s = 0; s < bad; ++s) {
    const auto expert = as_size(rng.uniform_int(spec.num_actions));
    for (std::size_t a = 0; a < b.A; ++a) {
      if (a != expert) {
        b.p(0, s, a, bad) = 1.0;
        continue;
      }
      b.r(s, a) = 1.0;
      b.p(0, s, a, (s + 1) % bad) += 1.0 - spec.slip;
      if (spec.slip > 0.0)
        for (std::size_t n = 0; n < bad; ++n) b.p(0, s, a, n) += spec.slip / good;
    }
  }
  for (std::size_t a = 0; a < b.A; ++a) b.p(0, bad, a, bad) = 1.0;
  b.replicate_first_slice();
  b.uniform_initial(spec.num_initial_states);
  return b.finish(spec);
}

TabularMDP build_random(const EnvSpec& spec) {
  require(spec.num_initial_states <= spec.num_states, "random: num_initial_states > num_states");
  Rng rng(derive_seed(spec.seed, 3));
  Builder b(spec);
  for (std::size_t row = 0; row < b.H * b.S * b.A; ++row) {
    double total = 0.0;
    double* p = &b.transitions[row * b.S];
    for (std::size_t n = 0; n < b.S; ++n) total += (p[n] = rng.uniform_open_low());
    for (std::size_t n = 0; n < b.S; ++n) p[n] /= total;
  }
  for (double& r : b.rewards) r = rng.uniform();
  b.uniform_initial(spec.num_initial_states);
  return b.finish(spec);
}

}  // namespace

std::string to_string(EnvFamily family) {
  switch (family) {
    case EnvFamily::det_chain: return "det_chain";
    case EnvFamily::det_grid: return "det_grid";
    case EnvFamily::reset_cliff: return "reset_cliff";
    case EnvFamily::random: return "random";
  }
  return "unknown";
}

EnvFamily parse_env_family(std::string_view name) {
  if (name == "det_chain") return EnvFamily::det_chain;
  if (name == "det_grid") return EnvFamily::det_grid;
  if (name == "reset_cliff") return EnvFamily::reset_cliff;
  if (name == "random") return EnvFamily::random;
  throw ConfigError("unknown env family '" + std::string(name) + "'");
}

TabularMDP build_env(const EnvSpec& spec) {
  if (spec.num_states <= 0 || spec.num_actions <= 0 || spec.horizon <= 0)
    throw ConfigError("env sizes must be positive");
  if (spec.num_initial_states < 1) throw ConfigError("num_initial_states must be >= 1");
  switch (spec.family) {
    case EnvFamily::det_chain: return build_det_chain(spec);
    case EnvFamily::det_grid: return build_det_grid(spec);
    case EnvFamily::reset_cliff: return build_reset_cliff(spec);
    case EnvFamily::random: return build_random(spec);
  }
  throw ConfigError("unknown env family");
}

std::vector<double> optimal_q_values(const TabularMDP& mdp) {
  const Dims& d = mdp.dims();
  const std::size_t S = as_size(d.num_states), A = as_size(d.num_actions);
  std::vector<double> q(as_size(d.horizon) * S * A, 0.0);
  std::vector<double> next_v(S, 0.0), v(S, 0.0);
  for (int t = d.horizon; t >= 1; --t) {
    for (int s = 0; s < d.num_states; ++s) {
      double best = -INFINITY;
      for (int a = 0; a < d.num_actions; ++a) {
        double value = mdp.reward(s, a);
        const auto p = mdp.next_state_dist(t, s, a);
        for (std::size_t n = 0; n < S; ++n) value += p[n] * next_v[n];
        q[(as_size(t - 1) * S + as_size(s)) * A + as_size(a)] = value;
        best = std::max(best, value);
      }
      v[as_size(s)] = best;
    }
    next_v.swap(v);
  }
  return q;
}

Policy optimal_expert(const TabularMDP& mdp) {
  const Dims& d = mdp.dims();
  const std::size_t S = as_size(d.num_states), A = as_size(d.num_actions);
  const std::vector<double> q = optimal_q_values(mdp);
  std::vector<int> actions(as_size(d.horizon) * S);
  for (std::size_t row = 0; row < actions.size(); ++row) {
    const double* qs = &q[row * A];
    const double best = *std::max_element(qs, qs + A);
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    int choice = 0;
    while (qs[as_size(choice)] < best - tol) ++choice;
    actions[row] = choice;
  }
  return Policy::deterministic(d, actions);
}

}  // namespace imitlab
