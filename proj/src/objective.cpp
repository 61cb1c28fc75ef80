#include "imitlab/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imitlab/error.hpp"

namespace imitlab {

namespace {

std::size_t as_size(int x) { return static_cast<std::size_t>(x); }

class Evaluator {
 public:
  Evaluator(const ObjectiveTerms& terms, const NuTable& nu, const LogitTable& logits,
            bool with_grad)
      : terms_(terms), nu_(nu), logits_(logits), policy_(softmax_policy(logits)),
        with_grad_(with_grad) {
    if (with_grad) {
      grad_nu_.assign(nu.values().size(), 0.0);
      grad_logits_.assign(logits.values().size(), 0.0);
    }
  }

  /// E_{a ~ pi_t(.|s)} nu(t, s, a).
  double expect(int t, int s) const {
    const auto pi = policy_.row(t, s);
    const auto v = nu_.row(t, s);
    double e = 0.0;
    for (std::size_t b = 0; b < pi.size(); ++b) e += pi[b] * v[b];
    return e;
  }

  /// Adds scale * d(E_pi nu(t,s,.)) to the gradients.
  void expect_grad(int t, int s, double scale) {
    if (!with_grad_ || scale == 0.0) return;
    const auto pi = policy_.row(t, s);
    const auto v = nu_.row(t, s);
    const double e = expect(t, s);
    for (int b = 0; b < static_cast<int>(pi.size()); ++b) {
      const double p = pi[as_size(b)];
      grad_nu_[nu_.index(t, s, b)] += scale * p;
      grad_logits_[logits_.index(t, s, b)] += scale * p * (v[as_size(b)] - e);
    }
  }

  double bellman(const BellmanSample& x) const {
    if (x.t == horizon() || terms_.gamma == 0.0) return 0.0;
    if (x.source == BellmanSource::successor) {
      if (!x.s_next) throw DataError("Bellman term needs a successor state");
      return terms_.gamma * expect(x.t + 1, *x.s_next);
    }
    const auto p = transitions(x);
    double total = 0.0;
    for (int n = 0; n < static_cast<int>(p.size()); ++n)
      if (p[as_size(n)] != 0.0) total += p[as_size(n)] * expect(x.t + 1, n);
    return terms_.gamma * total;
  }

  void bellman_grad(const BellmanSample& x, double scale) {
    if (!with_grad_ || x.t == horizon() || terms_.gamma == 0.0 || scale == 0.0) return;
    if (x.source == BellmanSource::successor) {
      expect_grad(x.t + 1, *x.s_next, scale * terms_.gamma);
      return;
    }
    const auto p = transitions(x);
    for (int n = 0; n < static_cast<int>(p.size()); ++n)
      if (p[as_size(n)] != 0.0) expect_grad(x.t + 1, n, scale * terms_.gamma * p[as_size(n)]);
  }

  void nu_grad(const BellmanSample& x, double scale) {
    if (with_grad_) grad_nu_[nu_.index(x.t, x.s, x.a)] += scale;
  }

  double nu_at(const BellmanSample& x) const { return nu_.at(x.t, x.s, x.a); }

  LossGrad finish(double loss) {
    return LossGrad{loss, std::move(grad_nu_), std::move(grad_logits_)};
  }

 private:
  int horizon() const { return nu_.dims().horizon; }

  std::span<const double> transitions(const BellmanSample& x) const {
    if (!terms_.mdp) throw ConfigError("exact Bellman term needs an MDP");
    return terms_.mdp->next_state_dist(x.t, x.s, x.a);
  }

  const ObjectiveTerms& terms_;
  const NuTable& nu_;
  const LogitTable& logits_;
  Policy policy_;
  bool with_grad_;
  std::vector<double> grad_nu_;
  std::vector<double> grad_logits_;
};

void check_sample(const Dims& d, const BellmanSample& x) {
  if (x.t < 1 || x.t > d.horizon || x.s < 0 || x.s >= d.num_states || x.a < 0 ||
      x.a >= d.num_actions)
    throw DimensionError("objective: sample outside the table's index ranges");
  if (x.s_next && (*x.s_next < 0 || *x.s_next >= d.num_states))
    throw DimensionError("objective: successor state out of range");
}

}  // namespace

LossGrad evaluate_objective(const ObjectiveTerms& terms, const NuTable& nu,
                            const LogitTable& logits, bool with_grad) {
  check_same_dims(nu.dims(), logits.dims(), "objective logits");
  if (terms.mdp) check_same_dims(nu.dims(), terms.mdp->dims(), "objective mdp");
  if (!(terms.gamma >= 0.0 && terms.gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
  const Dims& d = nu.dims();
  for (const auto& term : terms.log_terms) check_sample(d, term.sample);
  for (const auto& term : terms.residual_terms) check_sample(d, term.sample);
  for (const auto& term : terms.expect_terms)
    check_sample(d, BellmanSample{term.t, term.s, 0, std::nullopt, BellmanSource::successor});

  Evaluator ev(terms, nu, logits, with_grad);
  double loss = 0.0;

  if (!terms.log_terms.empty()) {
    std::vector<double> z;
    z.reserve(terms.log_terms.size());
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& term : terms.log_terms) {
      if (!(term.weight > 0.0)) throw ArgumentError("objective: log-term weights must be positive");
      z.push_back(std::log(term.weight) + ev.nu_at(term.sample) - ev.bellman(term.sample));
      top = std::max(top, z.back());
    }
    double total = 0.0;
    for (double& x : z) total += (x = std::exp(x - top));
    loss += top + std::log(total);
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double q = z[k] / total;
      ev.nu_grad(terms.log_terms[k].sample, q);
      ev.bellman_grad(terms.log_terms[k].sample, -q);
    }
  }

  for (const auto& term : terms.expect_terms) {
    loss -= term.coef * ev.expect(term.t, term.s);
    ev.expect_grad(term.t, term.s, -term.coef);
  }

  for (const auto& term : terms.residual_terms) {
    loss -= term.coef * (ev.nu_at(term.sample) - ev.bellman(term.sample));
    ev.nu_grad(term.sample, -term.coef);
    ev.bellman_grad(term.sample, term.coef);
  }

  return ev.finish(loss);
}

}  // namespace imitlab
