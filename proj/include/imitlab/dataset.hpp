#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "imitlab/mdp.hpp"

namespace imitlab {

/// Ordered expert demonstrations plus the metadata needed to interpret them.
struct Dataset {
  std::vector<Trajectory> trajectories;
  int horizon = 0;
  bool complete = true;
  std::optional<int> subsample_rate;

  int num_trajectories() const { return static_cast<int>(trajectories.size()); }
  /// Total number of (s, a) records across all trajectories.
  int total_pairs() const;
  bool empty() const { return total_pairs() == 0; }
  bool has_all_successors() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws DataError when a trajectory breaks the ordering/completeness rules.
void validate_dataset(const Dataset& ds);

/// m i.i.d. complete expert episodes; episode i uses a seed derived from (seed, i).
Dataset collect_expert(const TabularMDP& mdp, const Policy& expert, int m, std::uint64_t seed);

/// DAC-style subsampling: for each trajectory draw an offset uniformly from
/// [0, rate) and keep steps offset, offset + rate, ... (0-based positions).
/// With keep_successor = false the retained records lose s_next.
Dataset subsample(const Dataset& ds, int rate, std::uint64_t seed, bool keep_successor = true);

/// Per-time-step and time-aggregated visit counts.
class Visitation {
 public:
  Visitation(const Dataset& ds, Dims dims);

  const Dims& dims() const { return dims_; }
  int count(int t, int s, int a) const;
  int state_count(int t, int s) const;
  int total_count(int s, int a) const;
  int total_state_count(int s) const;
  /// States seen at time t, ascending.
  const std::vector<int>& visited(int t) const;
  int pairs_at(int t) const;

 private:
  Dims dims_;
  std::vector<int> counts_;        // H x S x A
  std::vector<int> state_counts_;  // H x S
  std::vector<int> total_counts_;  // S x A
  std::vector<int> total_state_counts_;
  std::vector<std::vector<int>> visited_;
};

Visitation visitation(const Dataset& ds, Dims dims);

/// Text format:
///
///   # imitlab dataset v1
///   m <int>
///   H <int>
///   complete <true|false>
///   subsample_rate <int|none>
///   traj_id,t,s,a,s_next
///   0,1,3,0,4
///   ...
///
/// A missing successor is written as '-'. Integers only, so the format is
/// locale-independent.
void write_dataset(std::ostream& os, const Dataset& ds);
Dataset read_dataset(std::istream& is);

}  // namespace imitlab
