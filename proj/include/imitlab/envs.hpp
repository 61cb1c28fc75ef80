#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "imitlab/mdp.hpp"

namespace imitlab {

enum class EnvFamily { det_chain, det_grid, reset_cliff, random };

std::string to_string(EnvFamily family);
EnvFamily parse_env_family(std::string_view name);

/// Parameters for one benchmark MDP.
///
/// Families:
///   det_chain   - states 0..S-1 on a line. Each state has one "forward"
///                 action (drawn from the seed) that advances to s+1 (the
///                 last state loops on itself) with reward 1; every other
///                 action stays put with reward 0.
///   det_grid    - grid_width x (S / grid_width) cells, actions
///                 {stay, right, down, left, up} truncated to |A| <= 5, moves
///                 off the grid stay put. Reward 1 for any action whose
///                 successor is the goal cell S-1.
///   reset_cliff - good states 0..S-2 plus the absorbing bad state S-1. In a
///                 good state the expert action (drawn from the seed) earns 1
///                 and advances cyclically to the next good state with
///                 probability 1-slip, or jumps to a uniformly random good
///                 state with probability slip. Any other action leads to the
///                 bad state with reward 0, which it never leaves.
///   random      - non-stationary transitions and rewards drawn uniformly
///                 from the seed (transition rows are normalized weights).
///
/// For every family the initial distribution is uniform over the first
/// num_initial_states non-absorbing states.
struct EnvSpec {
  EnvFamily family = EnvFamily::det_chain;
  int num_states = 2;
  int num_actions = 2;
  int horizon = 1;
  int grid_width = 0;
  double slip = 0.0;
  int num_initial_states = 1;
  std::uint64_t seed = 0;
};

TabularMDP build_env(const EnvSpec& spec);

/// Backward-induction optimal Q-values Q_t(s,a), laid out [((t-1)*S + s)*A + a].
std::vector<double> optimal_q_values(const TabularMDP& mdp);

/// Deterministic, non-stationary optimal policy. Ties (within 1e-12 relative)
/// go to the lowest action index.
Policy optimal_expert(const TabularMDP& mdp);

}  // namespace imitlab
