#pragma once

// Generic tabular ValueDice-style objective
//
//   L(nu, pi) = log sum_k w_k exp(nu(t_k,s_k,a_k) - B_k)
//               - sum_j c_j E_{a~pi_t}[nu(t_j, s_j, a)]
//               - sum_r c_r (nu(t_r,s_r,a_r) - B_r)
//
// where B is the zero-reward Bellman term gamma * E[nu(t+1, s', a')] taken
// either at a recorded successor or exactly through the MDP transitions
// (B = 0 at t = H). Offline, gamma = 0 and mixed losses are all instances.

#include <optional>
#include <vector>

#include "imitlab/mdp.hpp"

namespace imitlab {

enum class BellmanSource { successor, exact };

struct BellmanSample {
  int t = 0;
  int s = 0;
  int a = 0;
  std::optional<int> s_next;
  BellmanSource source = BellmanSource::successor;
};

struct LogTerm {
  BellmanSample sample;
  double weight = 1.0;
};

struct ExpectTerm {
  int t = 0;
  int s = 0;
  double coef = 0.0;
};

struct ResidualTerm {
  BellmanSample sample;
  double coef = 0.0;
};

struct ObjectiveTerms {
  std::vector<LogTerm> log_terms;
  std::vector<ExpectTerm> expect_terms;
  std::vector<ResidualTerm> residual_terms;
  double gamma = 0.0;
  /// Needed only for BellmanSource::exact.
  const TabularMDP* mdp = nullptr;
};

struct LossGrad {
  double loss = 0.0;
  /// Same layouts as the nu and logit tables.
  std::vector<double> grad_nu;
  std::vector<double> grad_logits;
};

/// Evaluates the objective (and optionally its exact gradient) with a
/// max-shifted log-sum-exp.
LossGrad evaluate_objective(const ObjectiveTerms& terms, const NuTable& nu,
                            const LogitTable& logits, bool with_grad);

}  // namespace imitlab
