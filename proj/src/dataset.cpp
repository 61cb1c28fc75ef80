#include "imitlab/dataset.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "imitlab/error.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("dataset: bad integer for " + std::string(what) + ": '" + std::string(text) + "'");
  return value;
}

}  // namespace

int Dataset::total_pairs() const {
  int total = 0;
  for (const auto& traj : trajectories) total += static_cast<int>(traj.steps.size());
  return total;
}

bool Dataset::has_all_successors() const {
  for (const auto& traj : trajectories)
    for (const auto& step : traj.steps)
      if (!step.s_next) return false;
  return true;
}

void validate_dataset(const Dataset& ds) {
  if (ds.horizon <= 0) throw DataError("dataset: horizon must be positive");
  if (ds.subsample_rate && *ds.subsample_rate < 1) throw DataError("dataset: subsample_rate < 1");
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& steps = ds.trajectories[i].steps;
    const std::string where = "dataset: trajectory " + std::to_string(i);
    int previous = 0;
    for (const auto& step : steps) {
      if (step.t <= previous) throw DataError(where + ": time indices not strictly increasing");
      if (step.t > ds.horizon) throw DataError(where + ": time index beyond horizon");
      previous = step.t;
    }
    if (ds.subsample_rate && steps.size() > 1) {
      const int rate = *ds.subsample_rate;
      for (std::size_t k = 1; k < steps.size(); ++k)
        if (steps[k].t - steps[k - 1].t != rate)
          throw DataError(where + ": retained indices are not spaced by the subsample rate");
      if ((steps.front().t - 1) >= rate) throw DataError(where + ": subsample offset >= rate");
    }
    if (!ds.complete) continue;
    if (steps.size() != as_size(ds.horizon))
      throw DataError(where + ": complete dataset needs exactly H steps");
    for (std::size_t k = 0; k < steps.size(); ++k) {
      if (steps[k].t != static_cast<int>(k) + 1)
        throw DataError(where + ": complete trajectory must cover t = 1..H");
      if (k + 1 < steps.size() && steps[k].s_next != steps[k + 1].s)
        throw DataError(where + ": successor does not match next state");
    }
  }
}

Dataset collect_expert(const TabularMDP& mdp, const Policy& expert, int m, std::uint64_t seed) {
  if (m < 1) throw ArgumentError("collect_expert: m must be >= 1");
  Dataset ds;
  ds.horizon = mdp.horizon();
  ds.complete = true;
  ds.trajectories.reserve(as_size(m));
  for (int i = 0; i < m; ++i)
    ds.trajectories.push_back(
        sample_trajectory(mdp, expert, derive_seed(seed, static_cast<std::uint64_t>(i))));
  return ds;
}

Dataset subsample(const Dataset& ds, int rate, std::uint64_t seed, bool keep_successor) {
  if (rate < 1) throw ArgumentError("subsample: rate must be >= 1");
  if (!ds.complete) throw ArgumentError("subsample: source dataset must be complete");
  Rng rng(derive_seed(seed, 0x5ab5));
  Dataset out;
  out.horizon = ds.horizon;
  out.complete = rate == 1;
  out.subsample_rate = rate;
  out.trajectories.reserve(ds.trajectories.size());
  for (const auto& traj : ds.trajectories) {
    const auto offset = as_size(rng.uniform_int(rate));
    Trajectory kept;
    for (std::size_t k = offset; k < traj.steps.size(); k += as_size(rate)) {
      Step step = traj.steps[k];
      if (!keep_successor) step.s_next.reset();
      kept.steps.push_back(step);
    }
    out.trajectories.push_back(std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Visitation

Visitation::Visitation(const Dataset& ds, Dims dims)
    : dims_(dims),
      counts_(as_size(dims.horizon) * as_size(dims.num_states) * as_size(dims.num_actions), 0),
      state_counts_(as_size(dims.horizon) * as_size(dims.num_states), 0),
      total_counts_(as_size(dims.num_states) * as_size(dims.num_actions), 0),
      total_state_counts_(as_size(dims.num_states), 0),
      visited_(as_size(dims.horizon)) {
  if (ds.horizon != dims.horizon && !ds.trajectories.empty())
    throw DimensionError("visitation: dataset horizon differs from MDP horizon");
  const std::size_t S = as_size(dims.num_states), A = as_size(dims.num_actions);
  for (const auto& traj : ds.trajectories) {
    for (const auto& step : traj.steps) {
      if (step.t < 1 || step.t > dims.horizon || step.s < 0 || step.s >= dims.num_states ||
          step.a < 0 || step.a >= dims.num_actions)
        throw DimensionError("visitation: record outside the MDP's index ranges");
      const std::size_t t0 = as_size(step.t - 1);
      ++counts_[(t0 * S + as_size(step.s)) * A + as_size(step.a)];
      ++state_counts_[t0 * S + as_size(step.s)];
      ++total_counts_[as_size(step.s) * A + as_size(step.a)];
      ++total_state_counts_[as_size(step.s)];
    }
  }
  for (std::size_t t0 = 0; t0 < as_size(dims.horizon); ++t0)
    for (std::size_t s = 0; s < S; ++s)
      if (state_counts_[t0 * S + s] > 0) visited_[t0].push_back(static_cast<int>(s));
}

int Visitation::count(int t, int s, int a) const {
  return counts_[(as_size(t - 1) * as_size(dims_.num_states) + as_size(s)) *
                     as_size(dims_.num_actions) +
                 as_size(a)];
}

int Visitation::state_count(int t, int s) const {
  return state_counts_[as_size(t - 1) * as_size(dims_.num_states) + as_size(s)];
}

int Visitation::total_count(int s, int a) const {
  return total_counts_[as_size(s) * as_size(dims_.num_actions) + as_size(a)];
}

int Visitation::total_state_count(int s) const { return total_state_counts_[as_size(s)]; }

const std::vector<int>& Visitation::visited(int t) const { return visited_.at(as_size(t - 1)); }

int Visitation::pairs_at(int t) const {
  int total = 0;
  for (int s = 0; s < dims_.num_states; ++s) total += state_count(t, s);
  return total;
}

Visitation visitation(const Dataset& ds, Dims dims) { return Visitation(ds, dims); }

// ---------------------------------------------------------------------------
// Text format

void write_dataset(std::ostream& os, const Dataset& ds) {
  os << "# imitlab dataset v1\n";
  os << "m " << ds.num_trajectories() << '\n';
  os << "H " << ds.horizon << '\n';
  os << "complete " << (ds.complete ? "true" : "false") << '\n';
  os << "subsample_rate ";
  if (ds.subsample_rate)
    os << *ds.subsample_rate << '\n';
  else
    os << "none\n";
  os << "traj_id,t,s,a,s_next\n";
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    for (const auto& step : ds.trajectories[i].steps) {
      os << i << ',' << step.t << ',' << step.s << ',' << step.a << ',';
      if (step.s_next)
        os << *step.s_next;
      else
        os << '-';
      os << '\n';
    }
  }
}

Dataset read_dataset(std::istream& is) {
  std::string line;
  auto next_line = [&](std::string_view what) {
    if (!std::getline(is, line)) throw DataError("dataset: missing " + std::string(what));
    return std::string_view(line);
  };
  auto header_value = [&](std::string_view key) {
    std::string_view l = next_line(key);
    if (l.substr(0, key.size()) != key || l.size() <= key.size() || l[key.size()] != ' ')
      throw DataError("dataset: expected header '" + std::string(key) + "'");
    return std::string(l.substr(key.size() + 1));
  };

  if (next_line("magic") != "# imitlab dataset v1") throw DataError("dataset: bad magic line");
  Dataset ds;
  const int m = parse_int(header_value("m"), "m");
  ds.horizon = parse_int(header_value("H"), "H");
  const std::string complete = header_value("complete");
  if (complete != "true" && complete != "false") throw DataError("dataset: bad 'complete' value");
  ds.complete = complete == "true";
  const std::string rate = header_value("subsample_rate");
  if (rate != "none") ds.subsample_rate = parse_int(rate, "subsample_rate");
  if (next_line("column header") != "traj_id,t,s,a,s_next")
    throw DataError("dataset: bad column header");
  if (m < 0) throw DataError("dataset: negative m");
  ds.trajectories.resize(as_size(m));

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::string_view rest(line);
    std::string_view fields[5];
    for (int f = 0; f < 5; ++f) {
      const auto comma = rest.find(',');
      if ((f < 4) == (comma == std::string_view::npos))
        throw DataError("dataset: record needs exactly 5 fields: '" + line + "'");
      fields[f] = rest.substr(0, comma);
      if (f < 4) rest.remove_prefix(comma + 1);
    }
    const int id = parse_int(fields[0], "traj_id");
    if (id < 0 || id >= m) throw DataError("dataset: traj_id out of range");
    Step step{parse_int(fields[1], "t"), parse_int(fields[2], "s"), parse_int(fields[3], "a"),
              std::nullopt};
    if (fields[4] != "-") step.s_next = parse_int(fields[4], "s_next");
    ds.trajectories[as_size(id)].steps.push_back(step);
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace imitlab
