#pragma once

// Portfolio-management scenario: a two-asset market (one risky asset
// under Markov-switching conditions, one risk-free asset) where the
// action picks the next period's risky-asset weight and rebalancing pays
// a proportional transaction cost.
//
// The one-period realized loss is
//   c = -[ r_risky(e) * w - b |w - u| + r_f (1 - w) ] * wealth_scale
// where e is the current market condition, w the weight chosen one
// period ago (now in force), and u the weight before that (so |w - u| is
// the rebalance just paid for). Because the loss depends on the previous
// weight, the MDP state is the triple (e, w, u); the action chooses the
// next weight. This keeps the one-step cost a function of the state
// alone, so the generic state-action machinery applies to the realized
// loss law rather than to its conditional expectation.

#include "cvarmdp/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvarmdp {

struct PortfolioConfig {
  Matrix market_transition;          // E x E, row stochastic
  std::vector<double> risky_returns; // per-period rate by market condition
  double risk_free_rate = 0.0;       // per-period rate
  double transaction_cost_rate = 0.0;
  std::vector<double> action_grid;   // risky-asset weights, strictly increasing
  double wealth_scale = 1e4;
  double alpha = 0.66;
};

inline void validate_config(const PortfolioConfig& config) {
  const Eigen::Index e = config.market_transition.rows();
  if (e == 0 || config.market_transition.cols() != e) {
    throw std::invalid_argument("portfolio: market matrix must be square");
  }
  if (static_cast<Eigen::Index>(config.risky_returns.size()) != e) {
    throw std::invalid_argument("portfolio: risky_returns size mismatch");
  }
  for (Eigen::Index i = 0; i < e; ++i) {
    if (std::abs(config.market_transition.row(i).sum() - 1.0) > kStochasticTol ||
        (config.market_transition.row(i).array() < 0.0).any()) {
      throw std::invalid_argument("portfolio: market row " + std::to_string(i) +
                                  " is not a distribution");
    }
  }
  if (config.action_grid.empty()) {
    throw std::invalid_argument("portfolio: empty action grid");
  }
  for (std::size_t k = 0; k < config.action_grid.size(); ++k) {
    const double w = config.action_grid[k];
    if (w < 0.0 || w > 1.0 || (k > 0 && w <= config.action_grid[k - 1])) {
      throw std::invalid_argument(
          "portfolio: action grid must be strictly increasing within [0,1]");
    }
  }
  if (config.transaction_cost_rate < 0.0) {
    throw std::invalid_argument("portfolio: negative transaction cost");
  }
  if (!(config.wealth_scale > 0.0)) {
    throw std::invalid_argument("portfolio: wealth_scale must be positive");
  }
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw std::invalid_argument("portfolio: alpha must lie in (0,1)");
  }
}

// The market of the experiments: ten conditions, daily risk-free return
// 0.01%, transaction cost 0.45%, six admissible risky weights, CVaR
// level 0.66, wealth reset to 10^4 every period.
inline PortfolioConfig default_config() {
  PortfolioConfig config;
  config.market_transition.resize(10, 10);
  config.market_transition <<
      0.20, 0.13, 0.19, 0.09, 0.12, 0.06, 0.12, 0.04, 0.04, 0.01,
      0.18, 0.15, 0.15, 0.09, 0.08, 0.15, 0.06, 0.07, 0.04, 0.03,
      0.13, 0.09, 0.12, 0.22, 0.14, 0.14, 0.04, 0.03, 0.07, 0.02,
      0.11, 0.10, 0.13, 0.12, 0.11, 0.15, 0.07, 0.08, 0.07, 0.06,
      0.07, 0.14, 0.15, 0.10, 0.13, 0.11, 0.11, 0.05, 0.07, 0.07,
      0.07, 0.09, 0.08, 0.06, 0.06, 0.18, 0.14, 0.14, 0.07, 0.11,
      0.08, 0.05, 0.13, 0.16, 0.11, 0.10, 0.11, 0.07, 0.09, 0.10,
      0.09, 0.06, 0.08, 0.16, 0.10, 0.07, 0.11, 0.13, 0.08, 0.12,
      0.07, 0.09, 0.07, 0.08, 0.13, 0.08, 0.12, 0.09, 0.13, 0.14,
      0.01, 0.15, 0.11, 0.08, 0.04, 0.15, 0.10, 0.11, 0.03, 0.22;
  config.risky_returns = {0.09, 0.08,  0.06,   0.05,  0.04,
                          0.03, 0.02, -0.001, -0.002, -0.05};
  config.risk_free_rate = 0.0001;
  config.transaction_cost_rate = 0.0045;
  config.action_grid = {0.1, 0.25, 0.4, 0.55, 0.7, 0.85};
  config.wealth_scale = 1e4;
  config.alpha = 0.66;
  return config;
}

struct StateLabel {
  int market_condition;  // e in [0, E)
  int weight_index;      // current weight, index into action_grid
  int prev_weight_index; // weight one period earlier
};

// Bijection between (e, w, u) labels and dense state indices.
class PortfolioLabeling {
 public:
  PortfolioLabeling(int n_markets, int n_weights)
      : n_markets_(n_markets), n_weights_(n_weights) {}

  int n_states() const { return n_markets_ * n_weights_ * n_weights_; }
  int n_markets() const { return n_markets_; }
  int n_weights() const { return n_weights_; }

  int state_index(int e, int wi, int ui) const {
    return (e * n_weights_ + wi) * n_weights_ + ui;
  }

  StateLabel label_of(int state) const {
    const int ui = state % n_weights_;
    const int wi = (state / n_weights_) % n_weights_;
    const int e = state / (n_weights_ * n_weights_);
    return {e, wi, ui};
  }

 private:
  int n_markets_;
  int n_weights_;
};

struct PortfolioMdp {
  MdpModel model;
  PortfolioLabeling labeling;
  PortfolioConfig config;
};

// Costs are rounded to ten decimal places so values intended to be equal
// merge exactly in the loss distribution.
inline double portfolio_cost(const PortfolioConfig& config, int e, int wi,
                             int ui) {
  const double w = config.action_grid[static_cast<std::size_t>(wi)];
  const double u = config.action_grid[static_cast<std::size_t>(ui)];
  const double reward =
      config.risky_returns[static_cast<std::size_t>(e)] * w -
      config.transaction_cost_rate * std::abs(w - u) +
      config.risk_free_rate * (1.0 - w);
  return std::round(-reward * config.wealth_scale * 1e10) / 1e10;
}

inline PortfolioMdp build_mdp(const PortfolioConfig& config) {
  validate_config(config);
  const int ne = static_cast<int>(config.market_transition.rows());
  const int nw = static_cast<int>(config.action_grid.size());
  PortfolioLabeling labeling(ne, nw);
  const int s = labeling.n_states();

  std::vector<Matrix> transition(static_cast<std::size_t>(nw),
                                 Matrix::Zero(s, s));
  Matrix cost(s, nw);
  for (int e = 0; e < ne; ++e) {
    for (int wi = 0; wi < nw; ++wi) {
      for (int ui = 0; ui < nw; ++ui) {
        const int i = labeling.state_index(e, wi, ui);
        const double c = portfolio_cost(config, e, wi, ui);
        for (int a = 0; a < nw; ++a) {
          cost(i, a) = c;
          for (int e2 = 0; e2 < ne; ++e2) {
            transition[static_cast<std::size_t>(a)](
                i, labeling.state_index(e2, a, wi)) =
                config.market_transition(e, e2);
          }
        }
      }
    }
  }
  return PortfolioMdp{MdpModel(std::move(transition), std::move(cost)),
                      labeling, config};
}

// Chosen weight per (market condition, current weight), matching the
// policy-matrix layout of the experiments. The previous-weight component
// is projected out along the u = w slice; converged policies do not
// depend on it (the improvement bracket is blind to u).
inline Matrix describe_policy(const DeterministicPolicy& policy,
                              const PortfolioLabeling& labeling,
                              const PortfolioConfig& config) {
  if (policy.n_states() != labeling.n_states()) {
    throw DimensionError("describe_policy: policy must cover every state");
  }
  Matrix table(labeling.n_markets(), labeling.n_weights());
  for (int e = 0; e < labeling.n_markets(); ++e) {
    for (int wi = 0; wi < labeling.n_weights(); ++wi) {
      const int a = policy(labeling.state_index(e, wi, wi));
      table(e, wi) = config.action_grid[static_cast<std::size_t>(a)];
    }
  }
  return table;
}

}  // namespace cvarmdp
