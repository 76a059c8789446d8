#pragma once

// Shared fixtures and independent oracles for the test suite. Oracles
// here deliberately avoid the library's computation paths: stationary
// distributions come from power iteration, CVaR values from direct scans
// of explicitly enumerated distributions.

#include "cvarmdp/cvarmdp.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace testutil {

using namespace cvarmdp;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : sampler_(seed) {}

  double uniform() {
    return static_cast<double>(sampler_.next() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int n) { return sampler_.uniform_int(n); }
  SeededPolicySampler& sampler() { return sampler_; }

 private:
  SeededPolicySampler sampler_;
};

// Fully ergodic random instance: every transition entry in [0.05, 1)
// before normalization, costs uniform on [-10, 10] (almost surely
// distinct, so atom merging is trivial).
inline MdpModel random_ergodic_model(Rng& rng, int n_states, int n_actions) {
  std::vector<Matrix> p(static_cast<std::size_t>(n_actions),
                        Matrix(n_states, n_states));
  for (int a = 0; a < n_actions; ++a) {
    for (int i = 0; i < n_states; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n_states; ++j) {
        const double w = rng.uniform(0.05, 1.0);
        p[static_cast<std::size_t>(a)](i, j) = w;
        sum += w;
      }
      p[static_cast<std::size_t>(a)].row(i) /= sum;
    }
  }
  Matrix cost(n_states, n_actions);
  for (int i = 0; i < n_states; ++i) {
    for (int a = 0; a < n_actions; ++a) cost(i, a) = rng.uniform(-10.0, 10.0);
  }
  return MdpModel(std::move(p), std::move(cost));
}

inline DeterministicPolicy random_policy(Rng& rng, const MdpModel& model) {
  return rng.sampler().random_policy(model.n_states(), model.n_actions());
}

// Chain whose rows all equal `pi` (an i.i.d. chain), one action,
// state-indexed costs.
inline MdpModel iid_chain_model(const Vector& pi, const Vector& costs) {
  const int s = static_cast<int>(pi.size());
  Matrix p(s, s);
  for (int i = 0; i < s; ++i) p.row(i) = pi.transpose();
  Matrix cost(s, 1);
  cost.col(0) = costs;
  return MdpModel({p}, std::move(cost));
}

inline MdpModel single_state_model(const std::vector<double>& action_costs) {
  const int na = static_cast<int>(action_costs.size());
  std::vector<Matrix> p(static_cast<std::size_t>(na), Matrix::Ones(1, 1));
  Matrix cost(1, na);
  for (int a = 0; a < na; ++a) cost(0, a) = action_costs[static_cast<std::size_t>(a)];
  return MdpModel(std::move(p), std::move(cost));
}

// Power iteration to tolerance; independent oracle for stationary
// distributions of ergodic chains.
inline Vector power_iteration_stationary(const TransitionMatrix& p,
                                         double tol = 1e-13,
                                         int max_iter = 2000000) {
  const int n = static_cast<int>(p.rows());
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / n);
  for (int k = 0; k < max_iter; ++k) {
    Eigen::RowVectorXd next = v * p;
    if ((next - v).cwiseAbs().maxCoeff() < tol) return next.transpose();
    v = next;
  }
  return v.transpose();
}

inline std::vector<DeterministicPolicy> enumerate_policies(int n_states,
                                                           int n_actions) {
  std::vector<DeterministicPolicy> out;
  DeterministicPolicy d;
  d.action.assign(static_cast<std::size_t>(n_states), 0);
  while (true) {
    out.push_back(d);
    int i = 0;
    while (i < n_states) {
      if (++d.action[static_cast<std::size_t>(i)] < n_actions) break;
      d.action[static_cast<std::size_t>(i)] = 0;
      ++i;
    }
    if (i == n_states) break;
  }
  return out;
}

// Oracle CVaR of an explicit discrete law: sort atoms, scan the CDF for
// the quantile, then apply the Rockafellar-Uryasev functional at it.
inline double oracle_cvar(std::vector<std::pair<double, double>> atoms,
                          double alpha) {
  std::sort(atoms.begin(), atoms.end());
  double cum = 0.0;
  double var = atoms.back().first;
  for (const auto& [v, p] : atoms) {
    cum += p;
    if (cum >= alpha - 1e-12) {
      var = v;
      break;
    }
  }
  double excess = 0.0;
  for (const auto& [v, p] : atoms) excess += p * std::max(v - var, 0.0);
  return var + excess / (1.0 - alpha);
}

// Oracle long-run CVaR of a deterministic policy via power iteration.
inline double oracle_policy_cvar(const MdpModel& model,
                                 const DeterministicPolicy& d, double alpha) {
  const Vector pi =
      power_iteration_stationary(induced_matrix(model, Policy{d}));
  std::vector<std::pair<double, double>> atoms;
  for (int i = 0; i < model.n_states(); ++i) {
    if (pi(i) > 0.0) atoms.emplace_back(model.cost(i, d(i)), pi(i));
  }
  return oracle_cvar(std::move(atoms), alpha);
}

}  // namespace testutil
