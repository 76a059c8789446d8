#pragma once

// Solvers: classical average-cost policy iteration (also the inner solver
// for the bilevel oracle and the maximizer), the policy-iteration-type
// local-optimum algorithm for long-run CVaR and mean-CVaR, the bilevel
// brute-force global oracle, the Bellman local-optimality checker,
// seeded multi-start, and the CVaR maximizer.
//
// Trace semantics: a trace records the strictly-decreasing objective
// milestones of a run, starting with the initial policy's evaluation.
// Policy updates that leave the objective unchanged (possible when the
// induced chain has transient states, where an action switch cannot move
// the stationary law) refine the most recent record in place instead of
// appending, so recorded objectives always decrease strictly and the
// last record is the converged policy. The `iterations` field counts
// evaluate-improve rounds actually executed, including the final round
// that discovers the fixed point.

#include "cvarmdp/chain.hpp"
#include "cvarmdp/model.hpp"
#include "cvarmdp/risk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cvarmdp {

struct NonConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ObjectiveKind { CVaR, MeanCVaR, AverageCost };
enum class OptimizeSense { Min, Max };

inline constexpr double kArgminTieTol = 1e-10;
inline constexpr double kDescentTol = 1e-12;
inline constexpr double kBellmanTol = 1e-9;

struct IterationRecord {
  int iteration;
  DeterministicPolicy policy;
  std::optional<double> var;  // absent for plain average-cost solves
  double objective;
};

struct SolveResult {
  DeterministicPolicy policy;
  std::vector<IterationRecord> trace;
  ObjectiveKind objective_kind = ObjectiveKind::CVaR;
  double beta = 0.0;
  double objective = 0.0;
  bool local_opt_certificate = false;
  int iterations = 0;
};

namespace detail {

// Bracket Q(i,a) = f(i,a) + sum_j p(j|i,a) g(j).
inline Matrix improvement_bracket(const MdpModel& model,
                                  const StateActionTable& f, const Vector& g) {
  Matrix q(model.n_states(), model.n_actions());
  for (int a = 0; a < model.n_actions(); ++a) {
    q.col(a) = f.col(a) + model.transition_matrix(a) * g;
  }
  return q;
}

// Greedy step over the bracket. Keeps the incumbent action whenever it
// attains the minimum within tolerance, otherwise takes the smallest
// minimizing action index; this stops equal-value oscillations.
inline DeterministicPolicy greedy_improve(const Matrix& q,
                                          const DeterministicPolicy& incumbent) {
  DeterministicPolicy next = incumbent;
  const int s = static_cast<int>(q.rows());
  for (int i = 0; i < s; ++i) {
    int best = 0;
    for (int a = 1; a < q.cols(); ++a) {
      if (q(i, a) < q(i, best)) best = a;
    }
    if (q(i, incumbent(i)) > q(i, best) + kArgminTieTol) {
      next.action[static_cast<std::size_t>(i)] = best;
    }
  }
  return next;
}

struct PolicyEvaluation {
  TransitionMatrix p;
  Vector pi;
  Vector state_cost;  // induced per-state cost under the evaluated table
  double average;     // pi . state_cost
  Vector g;           // potentials of the evaluated table
};

inline PolicyEvaluation evaluate_policy(const MdpModel& model,
                                        const DeterministicPolicy& d,
                                        const StateActionTable& table) {
  PolicyEvaluation ev;
  ev.p = induced_matrix(model, Policy{d});
  require_ergodic_unichain(chain_structure(ev.p), "policy evaluation");
  ev.pi = stationary_state_distribution(ev.p);
  ev.state_cost.resize(model.n_states());
  for (int i = 0; i < model.n_states(); ++i) {
    ev.state_cost(i) = table(i, d(i));
  }
  Potentials pot = potentials_for(ev.p, ev.pi, ev.state_cost);
  ev.average = pot.average;
  ev.g = std::move(pot.g);
  return ev;
}

// Classical average-cost policy iteration on a fixed cost table,
// minimizing. Returns the converged policy and its gain.
inline std::pair<DeterministicPolicy, double> average_policy_iteration(
    const MdpModel& model, const StateActionTable& table,
    DeterministicPolicy d, std::vector<IterationRecord>* trace,
    int* rounds_out) {
  const int cap = model.n_states() * model.n_actions();
  int rounds = 0;
  PolicyEvaluation ev = evaluate_policy(model, d, table);
  if (trace) trace->push_back({0, d, std::nullopt, ev.average});
  while (true) {
    ++rounds;
    DeterministicPolicy next =
        greedy_improve(improvement_bracket(model, table, ev.g), d);
    if (next == d) break;
    if (rounds > cap) {
      throw NonConvergenceError(
          "average-cost policy iteration exceeded " + std::to_string(cap) +
          " iterations; check tie-breaking tolerances");
    }
    d = std::move(next);
    ev = evaluate_policy(model, d, table);
    if (trace) {
      if (ev.average < trace->back().objective - kDescentTol) {
        trace->push_back({static_cast<int>(trace->size()), d, std::nullopt,
                          ev.average});
      } else {
        trace->back().policy = d;
        trace->back().objective = ev.average;
      }
    }
  }
  if (rounds_out) *rounds_out = rounds;
  return {std::move(d), ev.average};
}

inline DeterministicPolicy greedy_on_cost(const StateActionTable& table) {
  DeterministicPolicy d;
  d.action.resize(static_cast<std::size_t>(table.rows()));
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    Eigen::Index best;
    table.row(i).minCoeff(&best);
    d.action[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return d;
}

}  // namespace detail

// One policy-improvement step of the CVaR algorithm (the argmin over
// ctilde(y,i,a) + sum_j p(j|i,a) g(j)); g must be the potentials of the
// pseudo cost at y under d.
inline DeterministicPolicy policy_improvement(const MdpModel& model,
                                              const DeterministicPolicy& d,
                                              const Potentials& g, double y,
                                              const RiskParams& params) {
  check_policy_dimensions(model, Policy{d});
  const StateActionTable ct = pseudo_cost(model.cost_table(), y, params);
  return detail::greedy_improve(detail::improvement_bracket(model, ct, g.g), d);
}

// Classical average-cost policy iteration; Max is handled by negating
// the cost table. Satisfies the average-cost optimality equation at the
// fixed point (unichain sufficiency).
inline SolveResult solve_average_mdp(const MdpModel& model,
                                     const StateActionTable& cost_table,
                                     OptimizeSense sense) {
  if (cost_table.rows() != model.n_states() ||
      cost_table.cols() != model.n_actions()) {
    throw DimensionError("solve_average_mdp: cost table dimensions mismatch");
  }
  const StateActionTable table =
      sense == OptimizeSense::Min ? cost_table : StateActionTable(-cost_table);
  SolveResult result;
  result.objective_kind = ObjectiveKind::AverageCost;
  int rounds = 0;
  auto [policy, gain] = detail::average_policy_iteration(
      model, table, detail::greedy_on_cost(table), &result.trace, &rounds);
  result.policy = std::move(policy);
  result.objective = sense == OptimizeSense::Min ? gain : -gain;
  if (sense == OptimizeSense::Max) {
    for (auto& rec : result.trace) rec.objective = -rec.objective;
  }
  result.iterations = rounds;
  result.local_opt_certificate = true;
  return result;
}

struct LocalOptimality {
  bool is_local_opt = false;
  double worst_violation = 0.0;   // largest bracket improvement available
  double eq_residual = 0.0;       // optimality-equation residual
};

// Verifies the Bellman local optimality equations at y = VaR^d: d(i)
// attains the bracket argmin everywhere, and g(i) + objective equals the
// bracket minimum. beta > 0 checks the mean-CVaR variant.
inline LocalOptimality check_local_optimality(const MdpModel& model,
                                              const DeterministicPolicy& d,
                                              const RiskParams& params) {
  check_policy_dimensions(model, Policy{d});
  const TransitionMatrix p = induced_matrix(model, Policy{d});
  require_ergodic_unichain(chain_structure(p), "check_local_optimality");
  const Vector pi = stationary_state_distribution(p);
  StationaryDistribution dist;
  dist.pi = pi;
  dist.pi_state_action.setZero(model.n_states(), model.n_actions());
  for (int i = 0; i < model.n_states(); ++i) dist.pi_state_action(i, d(i)) = pi(i);
  const auto loss = steady_loss_distribution(model, dist);
  const double y = var_of(loss, params);
  const StateActionTable f = mean_cvar_cost(model.cost_table(), y, params);
  Vector fd(model.n_states());
  for (int i = 0; i < model.n_states(); ++i) fd(i) = f(i, d(i));
  const Potentials pot = potentials_for(p, pi, fd);
  const Matrix q = detail::improvement_bracket(model, f, pot.g);

  LocalOptimality out;
  for (int i = 0; i < model.n_states(); ++i) {
    const double row_min = q.row(i).minCoeff();
    out.worst_violation = std::max(out.worst_violation, q(i, d(i)) - row_min);
    out.eq_residual = std::max(
        out.eq_residual, std::abs(pot.g(i) + pot.average - row_min));
  }
  out.is_local_opt = out.worst_violation <= kBellmanTol && out.eq_residual <= 1e-8;
  return out;
}

namespace detail {

struct RiskEvaluation {
  double var;
  double objective;  // pseudo-CVaR + beta * eta, at the policy's own VaR
  StateActionTable f;
  Vector g;
};

inline RiskEvaluation evaluate_risk_policy(const MdpModel& model,
                                           const DeterministicPolicy& d,
                                           const RiskParams& params,
                                           double beta) {
  const TransitionMatrix p = induced_matrix(model, Policy{d});
  require_ergodic_unichain(chain_structure(p), "cvar solve");
  const Vector pi = stationary_state_distribution(p);
  StationaryDistribution dist;
  dist.pi = pi;
  dist.pi_state_action.setZero(model.n_states(), model.n_actions());
  for (int i = 0; i < model.n_states(); ++i) dist.pi_state_action(i, d(i)) = pi(i);
  const auto loss = steady_loss_distribution(model, dist);

  RiskEvaluation ev;
  ev.var = var_of(loss, params);
  ev.f = pseudo_cost(model.cost_table(), ev.var, params) +
         beta * model.cost_table();
  Vector fd(model.n_states());
  for (int i = 0; i < model.n_states(); ++i) fd(i) = ev.f(i, d(i));
  Potentials pot = potentials_for(p, pi, fd);
  ev.objective = pot.average;
  ev.g = std::move(pot.g);
  return ev;
}

inline SolveResult solve_risk(const MdpModel& model, const RiskParams& params,
                              DeterministicPolicy d, double beta,
                              ObjectiveKind kind) {
  check_policy_dimensions(model, Policy{d});
  const int cap = model.n_states() * model.n_actions() + 1;
  SolveResult result;
  result.objective_kind = kind;
  result.beta = beta;

  RiskEvaluation ev = evaluate_risk_policy(model, d, params, beta);
  result.trace.push_back({0, d, ev.var, ev.objective});
  int rounds = 0;
  while (true) {
    ++rounds;
    DeterministicPolicy next =
        greedy_improve(improvement_bracket(model, ev.f, ev.g), d);
    if (next == d) break;
    if (rounds > cap) {
      throw NonConvergenceError(
          "cvar policy iteration exceeded " + std::to_string(cap) +
          " iterations; check tie-breaking tolerances");
    }
    d = std::move(next);
    ev = evaluate_risk_policy(model, d, params, beta);
    IterationRecord& last = result.trace.back();
    if (ev.objective < last.objective - kDescentTol) {
      result.trace.push_back(
          {static_cast<int>(result.trace.size()), d, ev.var, ev.objective});
    } else {
      last.policy = d;
      last.var = ev.var;
      last.objective = ev.objective;
    }
  }
  result.policy = std::move(d);
  result.objective = ev.objective;
  result.iterations = rounds;
  result.local_opt_certificate =
      check_local_optimality(model, result.policy,
                             RiskParams(params.alpha, beta))
          .is_local_opt;
  return result;
}

}  // namespace detail

// The local-optimum algorithm for long-run CVaR: alternate policy
// evaluation (VaR and potentials of the pseudo cost at the current VaR)
// with the greedy improvement step until the policy is a fixed point.
inline SolveResult solve_cvar(const MdpModel& model, const RiskParams& params,
                              const DeterministicPolicy& initial) {
  return detail::solve_risk(model, params, initial, 0.0, ObjectiveKind::CVaR);
}

// Mean-CVaR variant: the same loop on f_beta = pseudo cost + beta * c,
// whose long-run average is pseudo-CVaR + beta * eta. beta = 0 reduces
// exactly to solve_cvar.
inline SolveResult solve_mean_cvar(const MdpModel& model,
                                   const RiskParams& params,
                                   const DeterministicPolicy& initial) {
  return detail::solve_risk(model, params, initial, params.beta,
                            params.beta == 0.0 ? ObjectiveKind::CVaR
                                               : ObjectiveKind::MeanCVaR);
}

struct GlobalSolveResult {
  struct Entry {
    double y;
    DeterministicPolicy policy;  // inner optimal policy at this y
    double value;                // min_d pseudoCVaR^d(y)
  };
  DeterministicPolicy best_policy;
  double best_cvar = std::numeric_limits<double>::quiet_NaN();
  double argmin_y = std::numeric_limits<double>::quiet_NaN();
  std::vector<Entry> table;
};

// Ground-truth global optimum via the bilevel reduction: for every
// candidate y in the cost value set, solve the standard MDP with the
// pseudo cost at y; the best inner value over y is CVaR*. Inner solves
// are warm-started from the previous candidate's optimum.
inline GlobalSolveResult solve_global_bruteforce(const MdpModel& model,
                                                 const RiskParams& params) {
  GlobalSolveResult result;
  const std::vector<double> candidates = candidate_var_set(model);
  DeterministicPolicy warm;
  for (double y : candidates) {
    const StateActionTable ct = pseudo_cost(model.cost_table(), y, params);
    if (warm.action.empty()) warm = detail::greedy_on_cost(ct);
    auto [policy, value] =
        detail::average_policy_iteration(model, ct, warm, nullptr, nullptr);
    warm = policy;
    result.table.push_back({y, policy, value});
    if (!(value >= result.best_cvar)) {  // NaN-safe first assignment
      result.best_cvar = value;
      result.best_policy = std::move(policy);
      result.argmin_y = y;
    }
  }
  return result;
}

struct MultiStartResult {
  SolveResult best;
  struct LocalOptimum {
    DeterministicPolicy policy;
    double value;
  };
  std::vector<LocalOptimum> distinct_local_optima;  // deduped by policy
  struct StartOutcome {
    int start_index;
    std::optional<double> objective;  // empty when the solve failed
    std::string error;
  };
  std::vector<StartOutcome> outcomes;
};

// Deterministic, platform-independent generator (splitmix64) so multi
// start results are reproducible bit for bit from the seed alone.
class SeededPolicySampler {
 public:
  explicit SeededPolicySampler(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  int uniform_int(int n) {
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return static_cast<int>(r % span);
  }

  DeterministicPolicy random_policy(int n_states, int n_actions) {
    DeterministicPolicy d;
    d.action.resize(static_cast<std::size_t>(n_states));
    for (int i = 0; i < n_states; ++i) {
      d.action[static_cast<std::size_t>(i)] = uniform_int(n_actions);
    }
    return d;
  }

 private:
  std::uint64_t state_;
};

// Runs the CVaR (or mean-CVaR when params.beta > 0) solver from n_starts
// policies drawn uniformly per state, rejection-sampled onto the solver's
// precondition (the induced chain must have a single aperiodic recurrent
// class). Failed starts are recorded without aborting the batch; results
// are merged in draw order.
inline MultiStartResult multi_start(const MdpModel& model,
                                    const RiskParams& params, int n_starts,
                                    std::uint64_t seed) {
  if (n_starts < 1) throw std::invalid_argument("multi_start: n_starts < 1");
  SeededPolicySampler sampler(seed);
  std::vector<DeterministicPolicy> initials;
  initials.reserve(static_cast<std::size_t>(n_starts));
  int rejections = 0;
  while (static_cast<int>(initials.size()) < n_starts) {
    DeterministicPolicy candidate =
        sampler.random_policy(model.n_states(), model.n_actions());
    const auto cs = chain_structure(induced_matrix(model, Policy{candidate}));
    if (cs.ergodic_unichain()) {
      initials.push_back(std::move(candidate));
    } else if (++rejections > 1000 * n_starts) {
      throw NotErgodicError(
          "multi_start: could not sample initial policies with valid chains");
    }
  }

  MultiStartResult result;
  bool have_best = false;
  for (int k = 0; k < n_starts; ++k) {
    MultiStartResult::StartOutcome outcome;
    outcome.start_index = k;
    try {
      SolveResult run = solve_mean_cvar(model, params, initials[k]);
      outcome.objective = run.objective;
      const bool seen =
          std::any_of(result.distinct_local_optima.begin(),
                      result.distinct_local_optima.end(),
                      [&](const auto& o) { return o.policy == run.policy; });
      if (!seen) {
        result.distinct_local_optima.push_back({run.policy, run.objective});
      }
      if (!have_best || run.objective < result.best.objective) {
        result.best = std::move(run);
        have_best = true;
      }
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    result.outcomes.push_back(std::move(outcome));
  }
  if (!have_best) {
    throw NonConvergenceError("multi_start: every start failed");
  }
  return result;
}

struct MaxSolveResult {
  double max_cvar = 0.0;
  double outer_y = 0.0;
  DeterministicPolicy inner_policy;
  struct TracePoint {
    double y;
    double value;  // h(y) = max_d pseudoCVaR^d(y)
  };
  std::vector<TracePoint> search_trace;
};

// CVaR maximization through the minimax interchange: minimize over
// y in [c_min, c_max] the convex piecewise-linear h(y) = max_d
// pseudoCVaR^d(y). h is evaluated on the candidate set, then the bracket
// around the grid argmin is refined by golden-section search, because
// the minimizer can sit at a crossing of two inner policies' curves
// between grid points.
inline MaxSolveResult maximize_cvar(const MdpModel& model,
                                    const RiskParams& params, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("maximize_cvar: tol <= 0");
  const std::vector<double> candidates = candidate_var_set(model);
  MaxSolveResult result;
  DeterministicPolicy warm;

  const auto h = [&](double y) {
    const StateActionTable negated = -pseudo_cost(model.cost_table(), y, params);
    if (warm.action.empty()) warm = detail::greedy_on_cost(negated);
    auto [policy, value] =
        detail::average_policy_iteration(model, negated, warm, nullptr, nullptr);
    warm = policy;
    result.search_trace.push_back({y, -value});
    return std::pair<double, DeterministicPolicy>{-value, std::move(policy)};
  };

  double best_value = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  std::vector<DeterministicPolicy> grid_policies;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    auto [value, policy] = h(candidates[k]);
    grid_policies.push_back(std::move(policy));
    if (value < best_value) {
      best_value = value;
      best_index = k;
    }
  }
  result.max_cvar = best_value;
  result.outer_y = candidates[best_index];
  result.inner_policy = grid_policies[best_index];

  const double span = candidates.back() - candidates.front();
  if (span > 0.0) {
    double lo = candidates[best_index > 0 ? best_index - 1 : 0];
    double hi = candidates[std::min(best_index + 1, candidates.size() - 1)];
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - golden * (b - a);
    double x2 = a + golden * (b - a);
    auto [f1, p1] = h(x1);
    auto [f2, p2] = h(x2);
    while (b - a > tol * span) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        p2 = p1;
        x1 = b - golden * (b - a);
        std::tie(f1, p1) = h(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        p1 = p2;
        x2 = a + golden * (b - a);
        std::tie(f2, p2) = h(x2);
      }
    }
    if (f1 < result.max_cvar) {
      result.max_cvar = f1;
      result.outer_y = x1;
      result.inner_policy = p1;
    }
    if (f2 < result.max_cvar) {
      result.max_cvar = f2;
      result.outer_y = x2;
      result.inner_policy = p2;
    }
  }
  return result;
}

}  // namespace cvarmdp
