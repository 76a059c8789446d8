#pragma once

// Steady-state analysis of policy-induced Markov chains: ergodicity
// structure, stationary distributions, long-run average cost, Poisson
// equation potentials, and transient distributions.
//
// The solvers accept any chain with a unique aperiodic recurrent class
// (transient states are allowed and receive stationary mass zero); chains
// with several recurrent classes or a periodic recurrent class are
// rejected with NotErgodicError.

#include "cvarmdp/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvarmdp {

struct NotErgodicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularSystemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ErgodicityReport {
  bool irreducible = false;
  bool aperiodic = false;
  int period = 1;  // 1 whenever aperiodic
};

namespace detail {

// Strongly connected components of the positive-entry digraph of P,
// in reverse topological order (Tarjan). component[i] identifies i's SCC.
struct SccResult {
  std::vector<int> component;
  int n_components = 0;
};

inline SccResult strongly_connected_components(const TransitionMatrix& p) {
  const int n = static_cast<int>(p.rows());
  SccResult res;
  res.component.assign(n, -1);
  std::vector<int> index(n, -1), lowlink(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  int next_index = 0;

  struct Frame {
    int v;
    int j;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> frames{{root, 0}};
    index[root] = lowlink[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.j < n) {
        const int w = f.j++;
        if (p(f.v, w) <= 0.0) continue;
        if (index[w] == -1) {
          index[w] = lowlink[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          lowlink[f.v] = std::min(lowlink[f.v], index[w]);
        }
      } else {
        const int v = f.v;
        if (lowlink[v] == index[v]) {
          while (true) {
            const int w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            res.component[w] = res.n_components;
            if (w == v) break;
          }
          ++res.n_components;
        }
        frames.pop_back();
        if (!frames.empty()) {
          lowlink[frames.back().v] =
              std::min(lowlink[frames.back().v], lowlink[v]);
        }
      }
    }
  }
  return res;
}

// Period of one SCC: gcd of (dist[u] + 1 - dist[v]) over its internal
// edges, via BFS from an arbitrary member. Returns 0 for a cycle-free
// singleton component.
inline int component_period(const TransitionMatrix& p,
                            const std::vector<int>& component, int comp) {
  const int n = static_cast<int>(p.rows());
  int root = -1;
  for (int i = 0; i < n; ++i) {
    if (component[i] == comp) {
      root = i;
      break;
    }
  }
  std::vector<int> dist(n, -1);
  std::vector<int> queue{root};
  dist[root] = 0;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const int u = queue[q];
    for (int v = 0; v < n; ++v) {
      if (p(u, v) <= 0.0 || component[v] != comp) continue;
      if (dist[v] == -1) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  int g = 0;
  for (int u : queue) {
    for (int v = 0; v < n; ++v) {
      if (p(u, v) <= 0.0 || component[v] != comp) continue;
      g = std::gcd(g, std::abs(dist[u] + 1 - dist[v]));
    }
  }
  return g;
}

}  // namespace detail

// Structural decomposition used by the steady-state solvers. A recurrent
// class is a closed SCC; everything else is transient.
struct ChainStructure {
  std::vector<int> component;             // SCC id per state
  std::vector<int> recurrent_classes;     // SCC ids that are closed
  std::vector<int> recurrent_period;      // period per recurrent class
  std::vector<bool> transient;            // per state

  bool unichain() const { return recurrent_classes.size() == 1; }
  bool ergodic_unichain() const {
    return unichain() && recurrent_period[0] == 1;
  }
};

inline ChainStructure chain_structure(const TransitionMatrix& p) {
  const int n = static_cast<int>(p.rows());
  auto scc = detail::strongly_connected_components(p);
  std::vector<bool> closed(scc.n_components, true);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (p(i, j) > 0.0 && scc.component[j] != scc.component[i]) {
        closed[scc.component[i]] = false;
      }
    }
  }
  ChainStructure cs;
  cs.component = std::move(scc.component);
  cs.transient.assign(n, true);
  for (int c = 0; c < scc.n_components; ++c) {
    if (!closed[c]) continue;
    cs.recurrent_classes.push_back(c);
    cs.recurrent_period.push_back(detail::component_period(p, cs.component, c));
  }
  for (int i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < cs.recurrent_classes.size(); ++k) {
      if (cs.component[i] == cs.recurrent_classes[k]) cs.transient[i] = false;
    }
  }
  return cs;
}

// Irreducibility is strong connectivity of the positive-entry digraph;
// the period is the cycle-length gcd. For a reducible matrix the report
// carries the largest period over recurrent classes.
inline ErgodicityReport check_ergodicity(const TransitionMatrix& p) {
  auto cs = chain_structure(p);
  ErgodicityReport report;
  const int n_components =
      1 + *std::max_element(cs.component.begin(), cs.component.end());
  report.irreducible = (n_components == 1);
  int period = 1;
  if (report.irreducible) {
    period = detail::component_period(p, cs.component, cs.component[0]);
  } else {
    for (int pr : cs.recurrent_period) period = std::max(period, pr);
  }
  report.period = std::max(period, 1);
  report.aperiodic = (report.period == 1);
  return report;
}

inline void require_ergodic_unichain(const ChainStructure& cs,
                                     const std::string& where) {
  if (!cs.unichain()) {
    throw NotErgodicError(where + ": chain has " +
                          std::to_string(cs.recurrent_classes.size()) +
                          " recurrent classes (need exactly one)");
  }
  if (cs.recurrent_period[0] != 1) {
    throw NotErgodicError(where + ": recurrent class has period " +
                          std::to_string(cs.recurrent_period[0]));
  }
}

struct StationaryDistribution {
  Vector pi;              // per-state marginal pi(i)
  Matrix pi_state_action; // S x A, pi(i) * d(i,a); empty until a policy is known
};

// Unique pi with pi P = pi, sum pi = 1, solved as a dense linear system
// with one balance equation replaced by the normalization row.
inline Vector stationary_state_distribution(const TransitionMatrix& p) {
  require_ergodic_unichain(chain_structure(p), "stationary_distribution");
  const int n = static_cast<int>(p.rows());
  Matrix a = p.transpose() - Matrix::Identity(n, n);
  a.row(0).setOnes();
  Vector b = Vector::Zero(n);
  b(0) = 1.0;
  Vector pi = a.partialPivLu().solve(b);
  for (int i = 0; i < n; ++i) {
    if (pi(i) < 0.0) {
      if (pi(i) < -1e-9) {
        throw SingularSystemError(
            "stationary_distribution: solve produced negative mass " +
            std::to_string(pi(i)));
      }
      pi(i) = 0.0;
    }
  }
  const double total = pi.sum();
  if (!(total > 0.0) || !pi.allFinite()) {
    throw SingularSystemError("stationary_distribution: singular balance system");
  }
  pi /= total;
  const double residual = (pi.transpose() * p - pi.transpose()).cwiseAbs().maxCoeff();
  if (residual > 1e-8) {
    throw SingularSystemError("stationary_distribution: residual " +
                              std::to_string(residual));
  }
  return pi;
}

inline StationaryDistribution stationary_distribution(const MdpModel& model,
                                                      const Policy& policy) {
  StationaryDistribution dist;
  dist.pi = stationary_state_distribution(induced_matrix(model, policy));
  dist.pi_state_action.resize(model.n_states(), model.n_actions());
  for (int i = 0; i < model.n_states(); ++i) {
    for (int a = 0; a < model.n_actions(); ++a) {
      dist.pi_state_action(i, a) = dist.pi(i) * action_probability(policy, i, a);
    }
  }
  return dist;
}

// eta = sum_{i,a} pi(i,a) c(i,a).
inline double average_cost(const StationaryDistribution& dist,
                           const StateActionTable& cost_table) {
  if (dist.pi_state_action.rows() != cost_table.rows() ||
      dist.pi_state_action.cols() != cost_table.cols()) {
    throw DimensionError("average_cost: dimensions mismatch");
  }
  return (dist.pi_state_action.array() * cost_table.array()).sum();
}

inline double average_cost(const Vector& pi, const Vector& state_cost) {
  if (pi.size() != state_cost.size()) {
    throw DimensionError("average_cost: dimensions mismatch");
  }
  return pi.dot(state_cost);
}

struct Potentials {
  Vector g;       // normalized so that pi . g = 0
  double average; // long-run average of the underlying cost
};

// Solves the Poisson equation (I - P) g = cbar - eta 1 with pi.g = 0 via
// the nonsingular system (I - P + 1 pi^T) g = cbar - eta 1. The solution
// is defined up to an additive constant; this normalization fixes it.
inline Potentials potentials_for(const TransitionMatrix& p, const Vector& pi,
                                 const Vector& state_cost) {
  const int n = static_cast<int>(p.rows());
  const double eta = pi.dot(state_cost);
  Matrix a = Matrix::Identity(n, n) - p;
  a.noalias() += Vector::Ones(n) * pi.transpose();
  const Vector rhs = state_cost.array() - eta;
  Vector g = a.partialPivLu().solve(rhs);
  if (!g.allFinite()) {
    throw SingularSystemError("potentials: singular Poisson system");
  }
  const double residual = (g - rhs - p * g).cwiseAbs().maxCoeff();
  if (residual > 1e-8) {
    throw SingularSystemError("potentials: Poisson residual " +
                              std::to_string(residual));
  }
  return Potentials{std::move(g), eta};
}

inline Potentials potentials(const MdpModel& model, const Policy& policy,
                             const StateActionTable& cost_table) {
  const TransitionMatrix p = induced_matrix(model, policy);
  const Vector pi = stationary_state_distribution(p);
  const Vector cbar = induced_cost(model, policy, cost_table);
  return potentials_for(p, pi, cbar);
}

// Exact t-step push-forward nu (P^d)^t.
inline Vector transient_distribution(const MdpModel& model,
                                     const Policy& policy, const Vector& nu,
                                     int t) {
  if (nu.size() != model.n_states()) {
    throw DimensionError("transient_distribution: nu size mismatch");
  }
  if ((nu.array() < -kStochasticTol).any() ||
      std::abs(nu.sum() - 1.0) > kStochasticTol) {
    throw std::invalid_argument(
        "transient_distribution: nu is not a probability vector");
  }
  if (t < 0) throw std::invalid_argument("transient_distribution: t < 0");
  const TransitionMatrix p = induced_matrix(model, policy);
  Eigen::RowVectorXd row = nu.transpose();
  for (int step = 0; step < t; ++step) row = row * p;
  return row.transpose();
}

}  // namespace cvarmdp
