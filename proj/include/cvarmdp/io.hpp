#pragma once

// File formats: JSON documents for models, portfolio configurations,
// policies, and result reports; CSV for iteration traces and tables.
//
// Model document:
//   {
//     "n_states": S, "n_actions": A,
//     "transition": [S*A rows of S probabilities],   // row index = i*A + a
//     "cost": [S rows of A reals]
//   }
// Policy files are plain text, one action index per state.
//
// All floating-point output uses shortest round-trip formatting, so
// documents and CSVs are byte-stable across runs and load back losslessly.

#include "cvarmdp/model.hpp"
#include "cvarmdp/portfolio.hpp"
#include "cvarmdp/risk.hpp"
#include "cvarmdp/solve.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cvarmdp {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io {

using nlohmann::json;

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  std::string best = buf;
  for (int prec = 1; prec < 17; ++prec) {
    char candidate[32];
    std::snprintf(candidate, sizeof(candidate), "%.*g", prec, x);
    double back = 0.0;
    std::sscanf(candidate, "%lf", &back);
    if (back == x && std::string_view(candidate).size() < best.size()) {
      best = candidate;
    }
  }
  return best;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw IoError("parse error in " + path + ": " + e.what());
  }
  return doc;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << body;
}

inline json model_to_json(const MdpModel& model) {
  json doc;
  doc["n_states"] = model.n_states();
  doc["n_actions"] = model.n_actions();
  json transition = json::array();
  for (int i = 0; i < model.n_states(); ++i) {
    for (int a = 0; a < model.n_actions(); ++a) {
      json row = json::array();
      for (int j = 0; j < model.n_states(); ++j) {
        row.push_back(model.transition(i, a, j));
      }
      transition.push_back(std::move(row));
    }
  }
  doc["transition"] = std::move(transition);
  json cost = json::array();
  for (int i = 0; i < model.n_states(); ++i) {
    json row = json::array();
    for (int a = 0; a < model.n_actions(); ++a) row.push_back(model.cost(i, a));
    cost.push_back(std::move(row));
  }
  doc["cost"] = std::move(cost);
  return doc;
}

inline MdpModel model_from_json(const json& doc) {
  try {
    const int s = doc.at("n_states").get<int>();
    const int na = doc.at("n_actions").get<int>();
    if (s < 1 || na < 1) throw IoError("model: n_states and n_actions must be >= 1");
    const auto& transition = doc.at("transition");
    const auto& cost = doc.at("cost");
    if (static_cast<int>(transition.size()) != s * na) {
      throw IoError("model: expected " + std::to_string(s * na) +
                    " transition rows, got " + std::to_string(transition.size()));
    }
    if (static_cast<int>(cost.size()) != s) {
      throw IoError("model: expected " + std::to_string(s) + " cost rows");
    }
    std::vector<Matrix> p(static_cast<std::size_t>(na), Matrix::Zero(s, s));
    for (int i = 0; i < s; ++i) {
      for (int a = 0; a < na; ++a) {
        const auto& row = transition.at(static_cast<std::size_t>(i * na + a));
        if (static_cast<int>(row.size()) != s) {
          throw IoError("model: transition row (i=" + std::to_string(i) +
                        ",a=" + std::to_string(a) + ") has wrong length");
        }
        for (int j = 0; j < s; ++j) {
          p[static_cast<std::size_t>(a)](i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
        }
      }
    }
    Matrix c(s, na);
    for (int i = 0; i < s; ++i) {
      const auto& row = cost.at(static_cast<std::size_t>(i));
      if (static_cast<int>(row.size()) != na) {
        throw IoError("model: cost row " + std::to_string(i) + " has wrong length");
      }
      for (int a = 0; a < na; ++a) c(i, a) = row.at(static_cast<std::size_t>(a)).get<double>();
    }
    return MdpModel(std::move(p), std::move(c));
  } catch (const json::exception& e) {
    throw IoError(std::string("model document: ") + e.what());
  }
}

inline MdpModel load_model(const std::string& path) {
  return model_from_json(read_json_file(path));
}

inline json config_to_json(const PortfolioConfig& config) {
  json doc;
  json market = json::array();
  for (Eigen::Index i = 0; i < config.market_transition.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < config.market_transition.cols(); ++j) {
      row.push_back(config.market_transition(i, j));
    }
    market.push_back(std::move(row));
  }
  doc["market_transition"] = std::move(market);
  doc["risky_returns"] = config.risky_returns;
  doc["risk_free_rate"] = config.risk_free_rate;
  doc["transaction_cost_rate"] = config.transaction_cost_rate;
  doc["action_grid"] = config.action_grid;
  doc["wealth_scale"] = config.wealth_scale;
  doc["alpha"] = config.alpha;
  return doc;
}

inline PortfolioConfig config_from_json(const json& doc) {
  try {
    PortfolioConfig config;
    const auto& market = doc.at("market_transition");
    const int e = static_cast<int>(market.size());
    config.market_transition.resize(e, e);
    for (int i = 0; i < e; ++i) {
      const auto& row = market.at(static_cast<std::size_t>(i));
      if (static_cast<int>(row.size()) != e) {
        throw IoError("portfolio config: market matrix is not square");
      }
      for (int j = 0; j < e; ++j) {
        config.market_transition(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
      }
    }
    config.risky_returns = doc.at("risky_returns").get<std::vector<double>>();
    config.risk_free_rate = doc.at("risk_free_rate").get<double>();
    config.transaction_cost_rate = doc.at("transaction_cost_rate").get<double>();
    config.action_grid = doc.at("action_grid").get<std::vector<double>>();
    config.wealth_scale = doc.value("wealth_scale", 1e4);
    config.alpha = doc.value("alpha", 0.66);
    return config;
  } catch (const json::exception& e) {
    throw IoError(std::string("portfolio config document: ") + e.what());
  }
}

inline PortfolioConfig load_config(const std::string& path) {
  return config_from_json(read_json_file(path));
}

inline std::string policy_to_text(const DeterministicPolicy& policy) {
  std::ostringstream out;
  for (int a : policy.action) out << a << "\n";
  return out.str();
}

inline DeterministicPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open policy file: " + path);
  DeterministicPolicy policy;
  int a;
  while (in >> a) policy.action.push_back(a);
  if (!in.eof()) throw IoError("policy file has non-integer content: " + path);
  if (policy.action.empty()) throw IoError("policy file is empty: " + path);
  return policy;
}

inline json report_to_json(const EvaluationReport& report) {
  json doc;
  doc["mean_cost"] = report.mean_cost;
  doc["std_dev"] = report.std_dev;
  doc["var"] = report.var;
  doc["cvar"] = report.cvar;
  doc["pseudo_cvar_at_var"] = report.pseudo_cvar_at_var;
  doc["tail_conditional_expectation"] = report.tail_expectation;
  doc["stationary"] = std::vector<double>(
      report.pi.pi.data(), report.pi.pi.data() + report.pi.pi.size());
  doc["potentials"] = std::vector<double>(
      report.potentials.g.data(),
      report.potentials.g.data() + report.potentials.g.size());
  json atoms = json::array();
  for (const auto& atom : report.loss_dist.atoms) {
    atoms.push_back({{"value", atom.value}, {"probability", atom.probability}});
  }
  doc["loss_distribution"] = std::move(atoms);
  return doc;
}

inline std::string trace_to_csv(const std::vector<IterationRecord>& trace) {
  std::ostringstream out;
  out << "iteration,objective,var\n";
  for (const auto& rec : trace) {
    out << rec.iteration << "," << format_double(rec.objective) << ",";
    if (rec.var) out << format_double(*rec.var);
    out << "\n";
  }
  return out.str();
}

inline std::string global_table_to_csv(const GlobalSolveResult& result) {
  std::ostringstream out;
  out << "y,pseudo_cvar,policy\n";
  for (const auto& entry : result.table) {
    out << format_double(entry.y) << "," << format_double(entry.value) << ",";
    for (std::size_t i = 0; i < entry.policy.action.size(); ++i) {
      if (i) out << ";";
      out << entry.policy.action[i];
    }
    out << "\n";
  }
  return out.str();
}

inline std::string search_trace_to_csv(const MaxSolveResult& result) {
  std::ostringstream out;
  out << "y,h\n";
  for (const auto& point : result.search_trace) {
    out << format_double(point.y) << "," << format_double(point.value) << "\n";
  }
  return out.str();
}

inline std::string policy_matrix_to_csv(const Matrix& table) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      if (j) out << ",";
      out << format_double(table(i, j));
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace io
}  // namespace cvarmdp
