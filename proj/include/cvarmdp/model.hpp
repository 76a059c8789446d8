#pragma once

// Finite Markov decision process model and policy representations.
//
// An MdpModel is the tuple (S, A, p, c): dense 0-based state and action
// indices, a transition kernel p(j|i,a) stored as one S x S row-stochastic
// matrix per action, and a one-step cost table c(i,a).
//
// Policies come in three flavors: deterministic (one action per state),
// randomized (a row-stochastic S x A matrix), and a delta-mixture of two
// deterministic policies that plays the target policy with probability
// delta at every step and state.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace cvarmdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// S x S matrix with rows summing to one.
using TransitionMatrix = Matrix;

// Cost table over state-action pairs, laid out S x A.
using StateActionTable = Matrix;

inline constexpr double kStochasticTol = 1e-9;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class MdpModel {
 public:
  // transition[a] is the S x S matrix of p(j|i,a); cost is S x A.
  MdpModel(std::vector<Matrix> transition, Matrix cost)
      : transition_(std::move(transition)), cost_(std::move(cost)) {
    if (transition_.empty() || cost_.rows() == 0 || cost_.cols() == 0) {
      throw DimensionError("MdpModel: empty transition or cost table");
    }
    const auto s = cost_.rows();
    if (static_cast<Eigen::Index>(transition_.size()) != cost_.cols()) {
      throw DimensionError("MdpModel: cost columns must match action count");
    }
    for (const Matrix& p : transition_) {
      if (p.rows() != s || p.cols() != s) {
        throw DimensionError("MdpModel: transition matrices must be S x S");
      }
    }
  }

  int n_states() const { return static_cast<int>(cost_.rows()); }
  int n_actions() const { return static_cast<int>(cost_.cols()); }

  double transition(int i, int a, int j) const { return transition_[a](i, j); }
  const Matrix& transition_matrix(int a) const { return transition_[a]; }

  double cost(int i, int a) const { return cost_(i, a); }
  const StateActionTable& cost_table() const { return cost_; }

 private:
  std::vector<Matrix> transition_;
  Matrix cost_;
};

struct DeterministicPolicy {
  std::vector<int> action;  // action[i] in [0, A)

  int operator()(int i) const { return action[static_cast<std::size_t>(i)]; }
  int n_states() const { return static_cast<int>(action.size()); }

  friend bool operator==(const DeterministicPolicy&,
                         const DeterministicPolicy&) = default;
};

struct RandomizedPolicy {
  Matrix prob;  // S x A, rows sum to one

  int n_states() const { return static_cast<int>(prob.rows()); }
};

struct MixedPolicy {
  DeterministicPolicy base;
  DeterministicPolicy target;
  double delta = 0.0;  // probability of playing target, per step and state

  int n_states() const { return base.n_states(); }
};

using Policy = std::variant<DeterministicPolicy, RandomizedPolicy, MixedPolicy>;

inline int policy_states(const Policy& policy) {
  return std::visit([](const auto& p) { return p.n_states(); }, policy);
}

// Probability that `policy` plays action a at state i.
inline double action_probability(const Policy& policy, int i, int a) {
  struct Visitor {
    int i, a;
    double operator()(const DeterministicPolicy& d) const {
      return d(i) == a ? 1.0 : 0.0;
    }
    double operator()(const RandomizedPolicy& r) const { return r.prob(i, a); }
    double operator()(const MixedPolicy& m) const {
      double p = 0.0;
      if (m.base(i) == a) p += 1.0 - m.delta;
      if (m.target(i) == a) p += m.delta;
      return p;
    }
  };
  return std::visit(Visitor{i, a}, policy);
}

struct Violation {
  std::string message;
  int state = -1;
  int action = -1;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

// Checks row stochasticity of every p(.|i,a) and finiteness of costs.
// Violations are returned as data; nothing throws here.
inline ValidationReport validate_model(const MdpModel& model) {
  ValidationReport report;
  const int s = model.n_states();
  const int na = model.n_actions();
  for (int a = 0; a < na; ++a) {
    const Matrix& p = model.transition_matrix(a);
    for (int i = 0; i < s; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < s; ++j) {
        const double pij = p(i, j);
        if (!std::isfinite(pij) || pij < 0.0) {
          std::ostringstream msg;
          msg << "p(" << j << "|" << i << "," << a << ") = " << pij
              << " is negative or non-finite";
          report.violations.push_back({msg.str(), i, a});
        }
        row_sum += pij;
      }
      if (!(std::abs(row_sum - 1.0) <= kStochasticTol)) {
        std::ostringstream msg;
        msg << "transition row (state " << i << ", action " << a
            << ") sums to " << row_sum;
        report.violations.push_back({msg.str(), i, a});
      }
    }
  }
  for (int i = 0; i < s; ++i) {
    for (int a = 0; a < na; ++a) {
      if (!std::isfinite(model.cost(i, a))) {
        std::ostringstream msg;
        msg << "cost(" << i << "," << a << ") is non-finite";
        report.violations.push_back({msg.str(), i, a});
      }
    }
  }
  return report;
}

inline void check_policy_dimensions(const MdpModel& model,
                                    const Policy& policy) {
  if (policy_states(policy) != model.n_states()) {
    throw DimensionError("policy state count does not match model");
  }
  if (const auto* d = std::get_if<DeterministicPolicy>(&policy)) {
    for (int a : d->action) {
      if (a < 0 || a >= model.n_actions()) {
        throw DimensionError("policy action index out of range");
      }
    }
  } else if (const auto* r = std::get_if<RandomizedPolicy>(&policy)) {
    if (r->prob.cols() != model.n_actions()) {
      throw DimensionError("randomized policy action count mismatch");
    }
    for (Eigen::Index i = 0; i < r->prob.rows(); ++i) {
      if ((r->prob.row(i).array() < 0.0).any() ||
          std::abs(r->prob.row(i).sum() - 1.0) > kStochasticTol) {
        throw std::invalid_argument("randomized policy row " +
                                    std::to_string(i) +
                                    " is not a distribution");
      }
    }
  } else if (const auto* m = std::get_if<MixedPolicy>(&policy)) {
    if (!(m->delta >= 0.0 && m->delta <= 1.0)) {
      throw std::invalid_argument("mixed policy delta outside [0,1]");
    }
    for (const DeterministicPolicy* part : {&m->base, &m->target}) {
      if (part->n_states() != model.n_states()) {
        throw DimensionError("mixed policy state count mismatch");
      }
      for (int a : part->action) {
        if (a < 0 || a >= model.n_actions()) {
          throw DimensionError("mixed policy action index out of range");
        }
      }
    }
  }
}

// P^d(i,j) = sum_a d(i,a) p(j|i,a).
inline TransitionMatrix induced_matrix(const MdpModel& model,
                                       const Policy& policy) {
  check_policy_dimensions(model, policy);
  const int s = model.n_states();
  if (const auto* d = std::get_if<DeterministicPolicy>(&policy)) {
    TransitionMatrix out(s, s);
    for (int i = 0; i < s; ++i) {
      out.row(i) = model.transition_matrix((*d)(i)).row(i);
    }
    return out;
  }
  TransitionMatrix out = TransitionMatrix::Zero(s, s);
  for (int a = 0; a < model.n_actions(); ++a) {
    for (int i = 0; i < s; ++i) {
      const double w = action_probability(policy, i, a);
      if (w != 0.0) out.row(i) += w * model.transition_matrix(a).row(i);
    }
  }
  return out;
}

// d^delta(i,a) = (1-delta) 1[d(i)=a] + delta 1[d'(i)=a].
inline MixedPolicy mix_policies(const DeterministicPolicy& d,
                                const DeterministicPolicy& d_prime,
                                double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw std::invalid_argument("mix_policies: delta must lie in [0,1]");
  }
  if (d.n_states() != d_prime.n_states()) {
    throw DimensionError("mix_policies: state count mismatch");
  }
  return MixedPolicy{d, d_prime, delta};
}

// Expected one-step cost per state: out(i) = sum_a d(i,a) cost(i,a).
inline Vector induced_cost(const MdpModel& model, const Policy& policy,
                           const StateActionTable& cost_table) {
  check_policy_dimensions(model, policy);
  if (cost_table.rows() != model.n_states() ||
      cost_table.cols() != model.n_actions()) {
    throw DimensionError("induced_cost: cost table dimensions mismatch");
  }
  const int s = model.n_states();
  Vector out = Vector::Zero(s);
  if (const auto* d = std::get_if<DeterministicPolicy>(&policy)) {
    for (int i = 0; i < s; ++i) out(i) = cost_table(i, (*d)(i));
    return out;
  }
  for (int i = 0; i < s; ++i) {
    for (int a = 0; a < model.n_actions(); ++a) {
      const double w = action_probability(policy, i, a);
      if (w != 0.0) out(i) += w * cost_table(i, a);
    }
  }
  return out;
}

}  // namespace cvarmdp
