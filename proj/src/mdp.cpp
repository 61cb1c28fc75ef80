#include "imitlab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "imitlab/error.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

std::string dims_string(const Dims& d) {
  std::ostringstream os;
  os << "(S=" << d.num_states << ", A=" << d.num_actions << ", H=" << d.horizon << ")";
  return os.str();
}

void check_positive_dims(const Dims& d) {
  if (d.num_states <= 0 || d.num_actions <= 0 || d.horizon <= 0)
    throw DimensionError("dimensions must be positive, got " + dims_string(d));
}

void check_distribution(std::span<const double> p, const std::string& what) {
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ValueError(what + ": negative or non-finite entry");
    total += x;
  }
  if (std::abs(total - 1.0) > kProbTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": entries sum to " << total;
    throw ValueError(os.str());
  }
}

void check_time(const Dims& d, int t) {
  if (t < 1 || t > d.horizon)
    throw ArgumentError("time index " + std::to_string(t) + " outside [1, " +
                        std::to_string(d.horizon) + "]");
}

void check_state_action(const Dims& d, int s, int a) {
  if (s < 0 || s >= d.num_states || a < 0 || a >= d.num_actions)
    throw ArgumentError("state/action index out of range");
}

}  // namespace

void check_same_dims(const Dims& expected, const Dims& actual, std::string_view what) {
  if (expected != actual)
    throw DimensionError(std::string(what) + ": expected " + dims_string(expected) + ", got " +
                         dims_string(actual));
}

// ---------------------------------------------------------------------------
// TabularMDP

TabularMDP::TabularMDP(int num_states, int num_actions, int horizon,
                       std::vector<double> transitions, std::vector<double> rewards,
                       std::vector<double> initial_dist, std::optional<double> discount)
    : dims_{num_states, num_actions, horizon},
      transitions_(std::move(transitions)),
      rewards_(std::move(rewards)),
      initial_(std::move(initial_dist)),
      discount_(discount) {
  check_positive_dims(dims_);
  const std::size_t S = as_size(num_states), A = as_size(num_actions), H = as_size(horizon);
  if (transitions_.size() != H * S * A * S)
    throw DimensionError("transitions: expected " + std::to_string(H * S * A * S) +
                         " entries, got " + std::to_string(transitions_.size()));
  if (rewards_.size() != S * A)
    throw DimensionError("rewards: expected " + std::to_string(S * A) + " entries");
  if (initial_.size() != S)
    throw DimensionError("initial_dist: expected " + std::to_string(S) + " entries");

  for (std::size_t row = 0; row < H * S * A; ++row)
    check_distribution(std::span<const double>(transitions_).subspan(row * S, S),
                       "transition row " + std::to_string(row));
  check_distribution(initial_, "initial_dist");
  for (double r : rewards_)
    if (!(r >= 0.0 && r <= 1.0)) throw ValueError("rewards must lie in [0, 1]");
  if (discount_ && !(*discount_ >= 0.0 && *discount_ < 1.0))
    throw ValueError("discount must lie in [0, 1)");
}

std::size_t TabularMDP::row_offset(int t, int s, int a) const {
  check_time(dims_, t);
  check_state_action(dims_, s, a);
  const std::size_t S = as_size(dims_.num_states), A = as_size(dims_.num_actions);
  return ((as_size(t - 1) * S + as_size(s)) * A + as_size(a)) * S;
}

double TabularMDP::transition(int t, int s, int a, int next) const {
  return transitions_[row_offset(t, s, a) + as_size(next)];
}

std::span<const double> TabularMDP::next_state_dist(int t, int s, int a) const {
  return std::span<const double>(transitions_).subspan(row_offset(t, s, a),
                                                       as_size(dims_.num_states));
}

TabularMDP TabularMDP::with_discount(std::optional<double> gamma) const {
  return TabularMDP(dims_.num_states, dims_.num_actions, dims_.horizon, transitions_, rewards_,
                    initial_, gamma);
}

bool TabularMDP::is_deterministic() const {
  return std::all_of(transitions_.begin(), transitions_.end(),
                     [](double p) { return p == 0.0 || p == 1.0; });
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(Dims dims, std::vector<double> probs, PolicyKind kind)
    : dims_(dims), probs_(std::move(probs)), kind_(kind) {
  check_positive_dims(dims_);
  const std::size_t S = as_size(dims.num_states), A = as_size(dims.num_actions),
                    H = as_size(dims.horizon);
  if (probs_.size() != H * S * A)
    throw DimensionError("policy: expected " + std::to_string(H * S * A) + " entries, got " +
                         std::to_string(probs_.size()));
  for (std::size_t row = 0; row < H * S; ++row)
    check_distribution(std::span<const double>(probs_).subspan(row * A, A),
                       "policy row " + std::to_string(row));
  if (kind_ == PolicyKind::stationary) {
    for (std::size_t i = S * A; i < probs_.size(); ++i)
      if (probs_[i] != probs_[i % (S * A)])
        throw ValueError("stationary policy has differing time slices");
  }
}

Policy Policy::uniform(Dims dims) {
  check_positive_dims(dims);
  const std::size_t n = as_size(dims.horizon) * as_size(dims.num_states) * as_size(dims.num_actions);
  return Policy(dims, std::vector<double>(n, 1.0 / dims.num_actions), PolicyKind::stationary);
}

Policy Policy::stationary(Dims dims, std::span<const double> probs_sa) {
  check_positive_dims(dims);
  const std::size_t SA = as_size(dims.num_states) * as_size(dims.num_actions);
  if (probs_sa.size() != SA) throw DimensionError("stationary policy: expected |S|x|A| entries");
  std::vector<double> probs;
  probs.reserve(SA * as_size(dims.horizon));
  for (int t = 0; t < dims.horizon; ++t) probs.insert(probs.end(), probs_sa.begin(), probs_sa.end());
  return Policy(dims, std::move(probs), PolicyKind::stationary);
}

Policy Policy::deterministic(Dims dims, std::span<const int> actions) {
  check_positive_dims(dims);
  const std::size_t HS = as_size(dims.horizon) * as_size(dims.num_states);
  if (actions.size() != HS) throw DimensionError("deterministic policy: expected H x |S| actions");
  std::vector<double> probs(HS * as_size(dims.num_actions), 0.0);
  for (std::size_t i = 0; i < HS; ++i) {
    if (actions[i] < 0 || actions[i] >= dims.num_actions)
      throw ArgumentError("deterministic policy: action out of range");
    probs[i * as_size(dims.num_actions) + as_size(actions[i])] = 1.0;
  }
  return Policy(dims, std::move(probs));
}

std::span<const double> Policy::row(int t, int s) const {
  check_time(dims_, t);
  if (s < 0 || s >= dims_.num_states) throw ArgumentError("policy row: state out of range");
  return std::span<const double>(probs_).subspan(offset(t, s), as_size(dims_.num_actions));
}

int Policy::greedy_action(int t, int s) const {
  const auto r = row(t, s);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

bool Policy::is_deterministic_at(int t, int s) const {
  const auto r = row(t, s);
  return std::any_of(r.begin(), r.end(), [](double p) { return p == 1.0; });
}

// ---------------------------------------------------------------------------
// OccupancyMeasure

OccupancyMeasure::OccupancyMeasure(Dims dims, std::vector<double> d)
    : dims_(dims), d_(std::move(d)) {
  check_positive_dims(dims_);
  if (d_.size() != as_size(dims.horizon) * as_size(dims.num_states) * as_size(dims.num_actions))
    throw DimensionError("occupancy: wrong number of entries");
}

double OccupancyMeasure::at(int t, int s, int a) const {
  return slice(t)[as_size(s) * as_size(dims_.num_actions) + as_size(a)];
}

double OccupancyMeasure::state(int t, int s) const {
  const auto sl = slice(t);
  double total = 0.0;
  for (int a = 0; a < dims_.num_actions; ++a)
    total += sl[as_size(s) * as_size(dims_.num_actions) + as_size(a)];
  return total;
}

std::span<const double> OccupancyMeasure::slice(int t) const {
  check_time(dims_, t);
  const std::size_t SA = as_size(dims_.num_states) * as_size(dims_.num_actions);
  return std::span<const double>(d_).subspan(as_size(t - 1) * SA, SA);
}

// ---------------------------------------------------------------------------
// ActionTable

ActionTable::ActionTable(Dims dims, TimeMode mode, double fill) : dims_(dims), mode_(mode) {
  check_positive_dims(dims_);
  const std::size_t slices = mode == TimeMode::per_step ? as_size(dims.horizon) : 1;
  values_.assign(slices * as_size(dims.num_states) * as_size(dims.num_actions), fill);
}

ActionTable::ActionTable(Dims dims, TimeMode mode, std::vector<double> values)
    : dims_(dims), mode_(mode), values_(std::move(values)) {
  check_positive_dims(dims_);
  const std::size_t slices = mode == TimeMode::per_step ? as_size(dims.horizon) : 1;
  if (values_.size() != slices * as_size(dims.num_states) * as_size(dims.num_actions))
    throw DimensionError("action table: wrong number of entries");
}

std::size_t ActionTable::index(int t, int s, int a) const {
  const std::size_t slice = mode_ == TimeMode::per_step ? as_size(t - 1) : 0;
  return (slice * as_size(dims_.num_states) + as_size(s)) * as_size(dims_.num_actions) +
         as_size(a);
}

std::span<const double> ActionTable::row(int t, int s) const {
  return std::span<const double>(values_).subspan(index(t, s, 0), as_size(dims_.num_actions));
}

std::span<double> ActionTable::row(int t, int s) {
  return std::span<double>(values_).subspan(index(t, s, 0), as_size(dims_.num_actions));
}

bool ActionTable::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

Policy softmax_policy(const LogitTable& logits) {
  const Dims& d = logits.dims();
  const std::size_t A = as_size(d.num_actions);
  std::vector<double> probs(as_size(d.horizon) * as_size(d.num_states) * A);
  for (int t = 1; t <= d.horizon; ++t) {
    for (int s = 0; s < d.num_states; ++s) {
      const auto z = logits.row(t, s);
      const double zmax = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      double* out = &probs[(as_size(t - 1) * as_size(d.num_states) + as_size(s)) * A];
      for (std::size_t a = 0; a < A; ++a) {
        out[a] = std::exp(z[a] - zmax);
        total += out[a];
      }
      for (std::size_t a = 0; a < A; ++a) out[a] /= total;
    }
  }
  return Policy(d, std::move(probs),
                logits.mode() == TimeMode::stationary ? PolicyKind::stationary
                                                      : PolicyKind::non_stationary);
}

// ---------------------------------------------------------------------------
// Evaluation

OccupancyMeasure compute_occupancy(const TabularMDP& mdp, const Policy& policy) {
  const Dims& d = mdp.dims();
  check_same_dims(d, policy.dims(), "compute_occupancy");
  const std::size_t S = as_size(d.num_states), A = as_size(d.num_actions);
  std::vector<double> occ(as_size(d.horizon) * S * A, 0.0);
  std::vector<double> state_mass(mdp.initial_dist().begin(), mdp.initial_dist().end());
  std::vector<double> next_mass(S);
  for (int t = 1; t <= d.horizon; ++t) {
    double* slice = &occ[as_size(t - 1) * S * A];
    for (int s = 0; s < d.num_states; ++s) {
      const auto pi = policy.row(t, s);
      for (std::size_t a = 0; a < A; ++a) slice[as_size(s) * A + a] = state_mass[as_size(s)] * pi[a];
    }
    if (t == d.horizon) break;
    std::fill(next_mass.begin(), next_mass.end(), 0.0);
    for (int s = 0; s < d.num_states; ++s) {
      for (int a = 0; a < d.num_actions; ++a) {
        const double w = slice[as_size(s) * A + as_size(a)];
        if (w == 0.0) continue;
        const auto p = mdp.next_state_dist(t, s, a);
        for (std::size_t n = 0; n < S; ++n) next_mass[n] += w * p[n];
      }
    }
    state_mass.swap(next_mass);
  }
  return OccupancyMeasure(d, std::move(occ));
}

double policy_value(const TabularMDP& mdp, const Policy& policy) {
  const OccupancyMeasure occ = compute_occupancy(mdp, policy);
  const Dims& d = mdp.dims();
  double value = 0.0;
  for (int t = 1; t <= d.horizon; ++t) {
    const auto sl = occ.slice(t);
    for (int s = 0; s < d.num_states; ++s)
      for (int a = 0; a < d.num_actions; ++a)
        value += sl[as_size(s) * as_size(d.num_actions) + as_size(a)] * mdp.reward(s, a);
  }
  return value;
}

std::vector<double> state_values(const TabularMDP& mdp, const Policy& policy) {
  const Dims& d = mdp.dims();
  check_same_dims(d, policy.dims(), "state_values");
  const std::size_t S = as_size(d.num_states);
  std::vector<double> v((as_size(d.horizon) + 1) * S, 0.0);
  for (int t = d.horizon; t >= 1; --t) {
    const double* next = &v[as_size(t) * S];
    for (int s = 0; s < d.num_states; ++s) {
      const auto pi = policy.row(t, s);
      double vs = 0.0;
      for (int a = 0; a < d.num_actions; ++a) {
        if (pi[as_size(a)] == 0.0) continue;
        double q = mdp.reward(s, a);
        const auto p = mdp.next_state_dist(t, s, a);
        for (std::size_t n = 0; n < S; ++n) q += p[n] * next[n];
        vs += pi[as_size(a)] * q;
      }
      v[as_size(t - 1) * S + as_size(s)] = vs;
    }
  }
  return v;
}

double backward_induction_value(const TabularMDP& mdp, const Policy& policy) {
  const std::vector<double> v = state_values(mdp, policy);
  double value = 0.0;
  for (int s = 0; s < mdp.num_states(); ++s) value += mdp.initial(s) * v[as_size(s)];
  return value;
}

Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, std::uint64_t seed) {
  check_same_dims(mdp.dims(), policy.dims(), "sample_trajectory");
  Rng rng(seed);
  Trajectory traj;
  traj.steps.reserve(as_size(mdp.horizon()));
  int s = rng.categorical(mdp.initial_dist());
  for (int t = 1; t <= mdp.horizon(); ++t) {
    const int a = rng.categorical(policy.row(t, s));
    const int next = rng.categorical(mdp.next_state_dist(t, s, a));
    traj.steps.push_back(Step{t, s, a, next});
    s = next;
  }
  return traj;
}

double bellman_nu(const TabularMDP& mdp, const Policy& policy, const NuTable& nu, int t, int s,
                  int a) {
  if (!mdp.discount()) throw ConfigError("bellman_nu: MDP has no discount set");
  return bellman_nu(mdp, policy, nu, t, s, a, *mdp.discount());
}

double bellman_nu(const TabularMDP& mdp, const Policy& policy, const NuTable& nu, int t, int s,
                  int a, double gamma) {
  const Dims& d = mdp.dims();
  check_same_dims(d, policy.dims(), "bellman_nu policy");
  check_same_dims(d, nu.dims(), "bellman_nu nu");
  check_time(d, t);
  check_state_action(d, s, a);
  if (t == d.horizon || gamma == 0.0) return 0.0;
  const auto p = mdp.next_state_dist(t, s, a);
  double total = 0.0;
  for (int n = 0; n < d.num_states; ++n) {
    if (p[as_size(n)] == 0.0) continue;
    const auto pi = policy.row(t + 1, n);
    const auto v = nu.row(t + 1, n);
    double expected = 0.0;
    for (int b = 0; b < d.num_actions; ++b) expected += pi[as_size(b)] * v[as_size(b)];
    total += p[as_size(n)] * expected;
  }
  return gamma * total;
}

// ---------------------------------------------------------------------------
// Serialization

std::string mdp_to_json(const TabularMDP& mdp) {
  nlohmann::ordered_json j;
  j["format"] = "imitlab.mdp.v1";
  j["num_states"] = mdp.num_states();
  j["num_actions"] = mdp.num_actions();
  j["horizon"] = mdp.horizon();
  j["discount"] = mdp.discount() ? nlohmann::ordered_json(*mdp.discount()) : nlohmann::ordered_json();
  j["initial_dist"] = std::vector<double>(mdp.initial_dist().begin(), mdp.initial_dist().end());
  j["rewards"] = mdp.rewards();
  j["transitions"] = mdp.transitions();
  return j.dump();
}

TabularMDP mdp_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("mdp json: ") + e.what());
  }
  try {
    std::optional<double> discount;
    if (j.contains("discount") && !j["discount"].is_null()) discount = j["discount"].get<double>();
    return TabularMDP(j.at("num_states").get<int>(), j.at("num_actions").get<int>(),
                      j.at("horizon").get<int>(), j.at("transitions").get<std::vector<double>>(),
                      j.at("rewards").get<std::vector<double>>(),
                      j.at("initial_dist").get<std::vector<double>>(), discount);
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("mdp json: ") + e.what());
  }
}

}  // namespace imitlab
