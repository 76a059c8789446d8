#pragma once

// CVaR machinery for the long-run (steady-state) criterion: the pseudo
// cost transform, the steady one-step loss distribution, VaR, CVaR, the
// pseudo-CVaR gap Delta, the candidate VaR set, the mixed-policy CVaR
// derivative, and full policy evaluation reports.
//
// The canonical CVaR here is the Rockafellar-Uryasev functional
//   min_y { y + E[(C - y)^+] / (1 - alpha) }
// evaluated at y = VaR. For discrete laws this can differ from the
// conditional expectation E[C | C >= VaR], which is reported separately
// as a diagnostic.

#include "cvarmdp/chain.hpp"
#include "cvarmdp/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace cvarmdp {

struct RiskParams {
  double alpha;       // CVaR probability level, in (0,1)
  double beta = 0.0;  // mean-CVaR weight, >= 0 (0 when unused)

  RiskParams(double alpha_, double beta_ = 0.0) : alpha(alpha_), beta(beta_) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("RiskParams: alpha must lie in (0,1)");
    }
    if (!(beta >= 0.0)) {
      throw std::invalid_argument("RiskParams: beta must be >= 0");
    }
  }
};

// Sorted atoms of a discrete loss law; equal values merged exactly,
// zero-probability atoms dropped.
struct DiscreteLossDistribution {
  struct Atom {
    double value;
    double probability;
  };
  std::vector<Atom> atoms;

  static DiscreteLossDistribution from_samples(
      const std::vector<std::pair<double, double>>& value_probability) {
    std::map<double, double> merged;
    for (const auto& [v, p] : value_probability) {
      if (p < 0.0) {
        throw std::invalid_argument("loss distribution: negative probability");
      }
      if (p > 0.0) merged[v] += p;
    }
    DiscreteLossDistribution dist;
    double total = 0.0;
    for (const auto& [v, p] : merged) {
      dist.atoms.push_back({v, p});
      total += p;
    }
    if (std::abs(total - 1.0) > kStochasticTol) {
      throw std::invalid_argument("loss distribution: probabilities sum to " +
                                  std::to_string(total));
    }
    return dist;
  }

  double mean() const {
    double m = 0.0;
    for (const auto& a : atoms) m += a.value * a.probability;
    return m;
  }

  double std_dev() const {
    const double m = mean();
    double v = 0.0;
    for (const auto& a : atoms) v += a.probability * (a.value - m) * (a.value - m);
    return std::sqrt(std::max(v, 0.0));
  }
};

// out(i,a) = y + [c(i,a) - y]^+ / (1 - alpha).
inline StateActionTable pseudo_cost(const StateActionTable& cost, double y,
                                    const RiskParams& params) {
  return (cost.array() - y).max(0.0) / (1.0 - params.alpha) + y;
}

// f_beta(y,i,a) = pseudo_cost(y,i,a) + beta c(i,a); beta = 0 reduces to
// the plain pseudo cost.
inline StateActionTable mean_cvar_cost(const StateActionTable& cost, double y,
                                       const RiskParams& params) {
  return pseudo_cost(cost, y, params) + params.beta * cost;
}

// Steady law of the one-step cost c(X_t, A_t): atoms are distinct cost
// values weighted by stationary state-action mass.
inline DiscreteLossDistribution steady_loss_distribution(
    const MdpModel& model, const StationaryDistribution& dist) {
  std::vector<std::pair<double, double>> samples;
  samples.reserve(static_cast<std::size_t>(model.n_states()) *
                  static_cast<std::size_t>(model.n_actions()));
  for (int i = 0; i < model.n_states(); ++i) {
    for (int a = 0; a < model.n_actions(); ++a) {
      const double p = dist.pi_state_action(i, a);
      if (p > 0.0) samples.emplace_back(model.cost(i, a), p);
    }
  }
  return DiscreteLossDistribution::from_samples(samples);
}

inline DiscreteLossDistribution steady_loss_distribution(const MdpModel& model,
                                                         const Policy& policy) {
  return steady_loss_distribution(model, stationary_distribution(model, policy));
}

// Smallest atom value whose cumulative probability reaches alpha
// (left-continuous scan; an exact tie at F(v) = alpha returns v).
inline double var_of(const DiscreteLossDistribution& dist,
                     const RiskParams& params) {
  if (dist.atoms.empty()) {
    throw std::invalid_argument("var_of: empty distribution");
  }
  double cumulative = 0.0;
  for (const auto& atom : dist.atoms) {
    cumulative += atom.probability;
    if (cumulative >= params.alpha - 1e-12) return atom.value;
  }
  return dist.atoms.back().value;
}

// E[C | C >= VaR], the conditional-expectation reading of CVaR; reported
// for comparison with the functional form.
inline double tail_conditional_expectation(const DiscreteLossDistribution& dist,
                                           double var) {
  double mass = 0.0, sum = 0.0;
  for (const auto& atom : dist.atoms) {
    if (atom.value >= var - 1e-12) {
      mass += atom.probability;
      sum += atom.probability * atom.value;
    }
  }
  return mass > 0.0 ? sum / mass : var;
}

inline double pseudo_cvar_of(const DiscreteLossDistribution& dist, double y,
                             const RiskParams& params) {
  double expected_excess = 0.0;
  for (const auto& atom : dist.atoms) {
    expected_excess += atom.probability * std::max(atom.value - y, 0.0);
  }
  return y + expected_excess / (1.0 - params.alpha);
}

// Pseudo CVaR at a fixed y: the long-run average of the pseudo cost,
// equivalently y + E[(C - y)^+] / (1 - alpha).
inline double pseudo_cvar(const MdpModel& model, const Policy& policy,
                          double y, const RiskParams& params) {
  return pseudo_cvar_of(steady_loss_distribution(model, policy), y, params);
}

struct VarCvar {
  double var;
  double cvar;
};

// CVaR^d = pseudo CVaR evaluated at y = VaR^d.
inline VarCvar long_run_cvar(const MdpModel& model, const Policy& policy,
                             const RiskParams& params) {
  const auto dist = steady_loss_distribution(model, policy);
  const double var = var_of(dist, params);
  return {var, pseudo_cvar_of(dist, var, params)};
}

// The candidate VaR set: sorted distinct cost values c(i,a). Every
// policy's VaR lies in this set.
inline std::vector<double> candidate_var_set(const MdpModel& model) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(model.n_states()) *
                 static_cast<std::size_t>(model.n_actions()));
  for (int i = 0; i < model.n_states(); ++i) {
    for (int a = 0; a < model.n_actions(); ++a) values.push_back(model.cost(i, a));
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

// Delta(d', d) = CVaR^{d'} - pseudoCVaR^{d'}(VaR^d), nonpositive by the
// minimizing property of VaR^{d'}.
inline double delta_cvar(const MdpModel& model, const Policy& d,
                         const Policy& d_prime, const RiskParams& params) {
  const auto dist_prime = steady_loss_distribution(model, d_prime);
  const double y = var_of(steady_loss_distribution(model, d), params);
  const double cvar_prime =
      pseudo_cvar_of(dist_prime, var_of(dist_prime, params), params);
  return cvar_prime - pseudo_cvar_of(dist_prime, y, params);
}

// Derivative of CVaR along the mixing direction d -> d' at delta = 0:
//   sum_i pi^d(i) [ sum_j (p(j|i,d'(i)) - p(j|i,d(i))) g^d(VaR^d, j)
//                   + ctilde(VaR^d,i,d'(i)) - ctilde(VaR^d,i,d(i)) ]
// with g the potentials of the pseudo cost at y = VaR^d.
inline double cvar_derivative(const MdpModel& model,
                              const DeterministicPolicy& d,
                              const DeterministicPolicy& d_prime,
                              const RiskParams& params) {
  check_policy_dimensions(model, Policy{d});
  check_policy_dimensions(model, Policy{d_prime});
  const TransitionMatrix p = induced_matrix(model, Policy{d});
  const Vector pi = stationary_state_distribution(p);
  StationaryDistribution dist;
  dist.pi = pi;
  dist.pi_state_action.setZero(model.n_states(), model.n_actions());
  for (int i = 0; i < model.n_states(); ++i) {
    dist.pi_state_action(i, d(i)) = pi(i);
  }
  const auto loss = steady_loss_distribution(model, dist);
  const double y = var_of(loss, params);
  const StateActionTable ct = pseudo_cost(model.cost_table(), y, params);
  const Vector cbar = induced_cost(model, Policy{d}, ct);
  const Potentials pot = potentials_for(p, pi, cbar);

  double derivative = 0.0;
  for (int i = 0; i < model.n_states(); ++i) {
    const auto& row_new = model.transition_matrix(d_prime(i)).row(i);
    const auto& row_old = model.transition_matrix(d(i)).row(i);
    const double transition_term = (row_new - row_old).dot(pot.g);
    derivative += pi(i) * (transition_term + ct(i, d_prime(i)) - ct(i, d(i)));
  }
  return derivative;
}

struct EvaluationReport {
  StationaryDistribution pi;
  double mean_cost;                 // eta^d(c)
  DiscreteLossDistribution loss_dist;
  double var;
  double cvar;                      // functional form at y = VaR
  double pseudo_cvar_at_var;        // equals cvar by construction
  double tail_expectation;          // E[C | C >= VaR] diagnostic
  double std_dev;                   // sigma of the steady one-step cost
  Potentials potentials;            // for the pseudo cost at y = VaR
};

inline EvaluationReport evaluate(const MdpModel& model, const Policy& policy,
                                 const RiskParams& params) {
  EvaluationReport report;
  const TransitionMatrix p = induced_matrix(model, policy);
  const Vector pi = stationary_state_distribution(p);
  report.pi.pi = pi;
  report.pi.pi_state_action.resize(model.n_states(), model.n_actions());
  for (int i = 0; i < model.n_states(); ++i) {
    for (int a = 0; a < model.n_actions(); ++a) {
      report.pi.pi_state_action(i, a) = pi(i) * action_probability(policy, i, a);
    }
  }
  report.mean_cost = average_cost(report.pi, model.cost_table());
  report.loss_dist = steady_loss_distribution(model, report.pi);
  report.var = var_of(report.loss_dist, params);
  report.cvar = pseudo_cvar_of(report.loss_dist, report.var, params);
  report.pseudo_cvar_at_var = report.cvar;
  report.tail_expectation =
      tail_conditional_expectation(report.loss_dist, report.var);
  report.std_dev = report.loss_dist.std_dev();
  const StateActionTable ct = pseudo_cost(model.cost_table(), report.var, params);
  report.potentials =
      potentials_for(p, pi, induced_cost(model, policy, ct));
  return report;
}

}  // namespace cvarmdp
