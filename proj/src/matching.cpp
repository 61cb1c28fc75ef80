#include "imitlab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "imitlab/bc.hpp"
#include "imitlab/error.hpp"
#include "imitlab/rng.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

}  // namespace

EmpiricalExpertOccupancy::EmpiricalExpertOccupancy(const Dataset& ds, Dims dims)
    : dims_(dims),
      d_(as_size(dims.horizon) * as_size(dims.num_states) * as_size(dims.num_actions), 0.0),
      nonempty_(as_size(dims.horizon), 0) {
  const Visitation v(ds, dims);
  const std::size_t S = as_size(dims.num_states), A = as_size(dims.num_actions);
  for (int t = 1; t <= dims.horizon; ++t) {
    const int n = v.pairs_at(t);
    if (n == 0) continue;
    nonempty_[as_size(t - 1)] = 1;
    for (int s : v.visited(t))
      for (int a = 0; a < dims.num_actions; ++a)
        d_[(as_size(t - 1) * S + as_size(s)) * A + as_size(a)] =
            static_cast<double>(v.count(t, s, a)) / n;
  }
}

double EmpiricalExpertOccupancy::at(int t, int s, int a) const {
  return d_[(as_size(t - 1) * as_size(dims_.num_states) + as_size(s)) * as_size(dims_.num_actions) +
            as_size(a)];
}

double EmpiricalExpertOccupancy::state(int t, int s) const {
  double total = 0.0;
  for (int a = 0; a < dims_.num_actions; ++a) total += at(t, s, a);
  return total;
}

bool EmpiricalExpertOccupancy::slice_nonempty(int t) const { return nonempty_.at(as_size(t - 1)) != 0; }

void check_uniform_constraint(const Policy& policy, const EmpiricalExpertOccupancy& dhat) {
  check_same_dims(dhat.dims(), policy.dims(), "l1 constraint");
  const Dims& d = dhat.dims();
  const double uniform = 1.0 / d.num_actions;
  for (int t = 1; t <= d.horizon; ++t)
    for (int s = 0; s < d.num_states; ++s) {
      if (dhat.visited(t, s)) continue;
      for (double p : policy.row(t, s))
        if (std::abs(p - uniform) > kProbTolerance)
          throw ConstraintError("policy is not uniform on unvisited (t=" + std::to_string(t) +
                                ", s=" + std::to_string(s) + ")");
    }
}

std::vector<double> step_losses(const TabularMDP& mdp, const Policy& policy,
                                const EmpiricalExpertOccupancy& dhat) {
  check_same_dims(mdp.dims(), dhat.dims(), "l1 dhat");
  check_uniform_constraint(policy, dhat);
  const OccupancyMeasure occ = compute_occupancy(mdp, policy);
  const Dims& d = mdp.dims();
  std::vector<double> out(as_size(d.horizon), 0.0);
  for (int t = 1; t <= d.horizon; ++t) {
    double total = 0.0;
    for (int s = 0; s < d.num_states; ++s)
      for (int a = 0; a < d.num_actions; ++a) total += std::abs(occ.at(t, s, a) - dhat.at(t, s, a));
    out[as_size(t - 1)] = total;
  }
  return out;
}

double l1_loss(const TabularMDP& mdp, const Policy& policy, const EmpiricalExpertOccupancy& dhat) {
  double total = 0.0;
  for (double x : step_losses(mdp, policy, dhat)) total += x;
  return total;
}

double cost_to_go(const TabularMDP& mdp, const Policy& policy, const EmpiricalExpertOccupancy& dhat,
                  int h) {
  if (h < 1 || h > mdp.horizon())
    throw ArgumentError("cost_to_go: h must lie in [1, " + std::to_string(mdp.horizon()) + "]");
  const auto losses = step_losses(mdp, policy, dhat);
  double total = 0.0;
  for (int t = mdp.horizon(); t >= h; --t) total += losses[as_size(t - 1)];
  return total;
}

std::string Certificate::report() const {
  std::ostringstream os;
  os.precision(17);
  os << "l1 uniqueness certificate\n"
     << "  dims: S=" << dims.num_states << " A=" << dims.num_actions << " H=" << dims.horizon << '\n'
     << "  visited (t,s) pairs: " << visited_pairs << '\n'
     << "  deterministic assignments checked: " << deterministic_checked << '\n'
     << "  stochastic policies checked: " << stochastic_checked << '\n'
     << "  bc loss: " << bc_loss << '\n'
     << "  runner-up loss: " << runner_up_loss << '\n'
     << "  min gap: " << min_gap << '\n'
     << "  min stochastic gap: " << min_stochastic_gap << '\n'
     << "  stochastic violations: " << stochastic_violations << '\n'
     << "  result: " << (passed() ? "PASS" : "FAIL") << '\n';
  return os.str();
}

Certificate certify_unique_optimum(const TabularMDP& mdp, const Dataset& ds, int samples,
                                   std::uint64_t seed) {
  if (ds.num_trajectories() != 1 || !ds.complete)
    throw ArgumentError("certifier needs exactly one complete expert trajectory");
  if (samples < 0) throw ArgumentError("certifier: samples must be >= 0");
  validate_dataset(ds);
  const Dims& d = mdp.dims();
  const EmpiricalExpertOccupancy dhat(ds, d);
  const Policy bc = bc_counting(ds, d, CountingMode::per_step);

  struct Cell {
    int t, s;
  };
  std::vector<Cell> cells;
  for (int t = 1; t <= d.horizon; ++t)
    for (int s = 0; s < d.num_states; ++s)
      if (dhat.visited(t, s)) cells.push_back({t, s});

  long total = 1;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (total > kCertifierLimit / d.num_actions) {
      total = kCertifierLimit + 1;
      break;
    }
    total *= d.num_actions;
  }
  if (total > kCertifierLimit)
    throw SizeLimitError("certifier: |A|^" + std::to_string(cells.size()) + " assignments exceed " +
                         std::to_string(kCertifierLimit));

  Certificate cert;
  cert.dims = d;
  cert.visited_pairs = static_cast<int>(cells.size());
  cert.bc_loss = l1_loss(mdp, bc, dhat);

  const std::size_t S = as_size(d.num_states), A = as_size(d.num_actions);
  const auto row_offset = [&](const Cell& c) { return (as_size(c.t - 1) * S + as_size(c.s)) * A; };
  std::vector<double> probs = bc.probs();
  std::vector<int> choice(cells.size(), 0);
  double runner_up = std::numeric_limits<double>::infinity();
  bool bc_seen = false;
  for (long k = 0; k < total; ++k) {
    bool is_bc = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double* row = &probs[row_offset(cells[i])];
      std::fill(row, row + A, 0.0);
      row[as_size(choice[i])] = 1.0;
      if (bc.prob(cells[i].t, cells[i].s, choice[i]) != 1.0) is_bc = false;
    }
    const double loss = l1_loss(mdp, Policy(d, probs), dhat);
    ++cert.deterministic_checked;
    if (is_bc)
      bc_seen = true;
    else
      runner_up = std::min(runner_up, loss);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (++choice[i] < d.num_actions) break;
      choice[i] = 0;
    }
  }
  cert.runner_up_loss = runner_up;
  cert.min_gap = runner_up - cert.bc_loss;
  cert.bc_strict_minimum = bc_seen && (cells.empty() || d.num_actions == 1 || cert.min_gap > 1e-12);
  if (!std::isfinite(runner_up)) cert.min_gap = std::numeric_limits<double>::infinity();

  Rng rng(derive_seed(seed, 0xce71));
  cert.min_stochastic_gap = std::numeric_limits<double>::infinity();
  probs = bc.probs();
  for (int n = 0; n < samples; ++n) {
    double tv = 0.0;
    for (const auto& cell : cells) {
      double* row = &probs[row_offset(cell)];
      double sum = 0.0;
      for (std::size_t a = 0; a < A; ++a) sum += (row[a] = -std::log(rng.uniform_open_low()));
      double cell_tv = 0.0;
      for (std::size_t a = 0; a < A; ++a) {
        row[a] /= sum;
        cell_tv += 0.5 * std::abs(row[a] - bc.prob(cell.t, cell.s, static_cast<int>(a)));
      }
      tv = std::max(tv, cell_tv);
    }
    const double gap = l1_loss(mdp, Policy(d, probs), dhat) - cert.bc_loss;
    ++cert.stochastic_checked;
    cert.min_stochastic_gap = std::min(cert.min_stochastic_gap, gap);
    if (tv > 1e-6 ? !(gap > 0.0) : gap < -1e-12) ++cert.stochastic_violations;
  }
  return cert;
}

}  // namespace imitlab
