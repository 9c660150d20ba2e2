#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mjslqr/adaptive.hpp"
#include "mjslqr/errors.hpp"
#include "mjslqr/lqr.hpp"
#include "mjslqr/model.hpp"
#include "mjslqr/sysid.hpp"

namespace mjslqr {

using json = nlohmann::json;

/// Row-major nested array [[row 0], [row 1], ...]. An r x 0 matrix becomes r empty rows.
inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Accepts a nested row-major array or a flat row-major array of rows * cols numbers.
inline MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected an array");
  MatrixXd m(rows, cols);
  const bool nested = !j.empty() && j.front().is_array();
  if (nested) {
    if (j.size() != static_cast<std::size_t>(rows))
      throw ConfigError(field + ": expected " + std::to_string(rows) + " rows");
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = j[static_cast<std::size_t>(r)];
      if (!row.is_array() || row.size() != static_cast<std::size_t>(cols))
        throw ConfigError(field + ": row " + std::to_string(r) + " must have " + std::to_string(cols) + " entries");
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
  }
  if (j.size() != static_cast<std::size_t>(rows * cols))
    throw ConfigError(field + ": expected " + std::to_string(rows * cols) + " entries");
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r * cols + c)].get<double>();
  return m;
}

inline json matrix_list_to_json(const MatrixList& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(matrix_to_json(m));
  return out;
}

inline MatrixList matrix_list_from_json(const json& j, int count, Eigen::Index rows, Eigen::Index cols,
                                        const std::string& field) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(count))
    throw ConfigError(field + ": expected " + std::to_string(count) + " matrices");
  MatrixList out;
  for (int i = 0; i < count; ++i)
    out.push_back(matrix_from_json(j[static_cast<std::size_t>(i)], rows, cols, field + "[" + std::to_string(i) + "]"));
  return out;
}

inline json model_to_json(const MjsModel& model) {
  return json{{"n", model.n()},
              {"p", model.p()},
              {"s", model.s()},
              {"A", matrix_list_to_json(model.A())},
              {"B", matrix_list_to_json(model.B())},
              {"T", matrix_to_json(model.chain().transition())}};
}

inline int require_int_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) throw ConfigError(std::string("model: missing integer field '") + key + "'");
  return j.at(key).get<int>();
}

inline MjsModel model_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model: expected a JSON object");
  const int n = require_int_field(j, "n");
  const int p = require_int_field(j, "p");
  const int s = require_int_field(j, "s");
  if (n < 1 || p < 0 || s < 1) throw ConfigError("model: need n >= 1, p >= 0, s >= 1");
  for (const char* key : {"A", "B", "T"})
    if (!j.contains(key)) throw ConfigError(std::string("model: missing field '") + key + "'");
  auto a = matrix_list_from_json(j.at("A"), s, n, n, "A");
  auto b = matrix_list_from_json(j.at("B"), s, n, p, "B");
  auto t = matrix_from_json(j.at("T"), s, s, "T");
  return MjsModel(std::move(a), std::move(b), MarkovChain(std::move(t)));
}

inline json cost_to_json(const CostSpec& cost) {
  return json{{"Q", matrix_list_to_json(cost.Q())}, {"R", matrix_list_to_json(cost.R())}};
}

/// Q and R are optional and default to identity.
inline CostSpec cost_from_json(const json& j, const MjsModel& model) {
  const auto s = model.s();
  MatrixList q = j.contains("Q") ? matrix_list_from_json(j.at("Q"), s, model.n(), model.n(), "Q")
                                 : CostSpec::identity(model).Q();
  MatrixList r = j.contains("R") ? matrix_list_from_json(j.at("R"), s, model.p(), model.p(), "R")
                                 : CostSpec::identity(model).R();
  return CostSpec(std::move(q), std::move(r));
}

inline json controller_to_json(const ModeController& k) { return matrix_list_to_json(k.K); }

inline json sysid_to_json(const SysidResult& r) {
  const Eigen::Index n = r.A_hat.empty() ? 0 : r.A_hat.front().rows();
  const Eigen::Index p = r.B_hat.empty() ? 0 : r.B_hat.front().cols();
  return json{{"n", n},
              {"p", p},
              {"s", r.T_hat.num_modes()},
              {"A", matrix_list_to_json(r.A_hat)},
              {"B", matrix_list_to_json(r.B_hat)},
              {"T", matrix_to_json(r.T_hat.transition())},
              {"samples_per_mode", r.samples_per_mode},
              {"flagged_modes", r.flagged_modes}};
}

inline json run_record_to_json(const AdaptiveRunRecord& record) {
  json epochs = json::array();
  for (const auto& e : record.epochs) {
    json block{{"epoch", e.epoch},
               {"T_i", e.length},
               {"sigma_z", e.sigma_z},
               {"err_A", e.errors.err_A},
               {"err_B", e.errors.err_B},
               {"err_T", e.errors.err_T},
               {"epoch_cost", e.cost},
               {"cdare_failed", e.cdare_failed},
               {"estimation_degenerate", e.estimation_degenerate}};
    if (!e.failure.empty()) block["failure"] = e.failure;
    epochs.push_back(std::move(block));
  }
  json regret = json::array();
  for (const auto& [t, r] : record.regret_samples) regret.push_back(json::array({t, r}));
  return json{{"J_star", record.j_star},
              {"initial_controller_mss", record.initial_controller_mss},
              {"initial_rho", record.initial_rho},
              {"epochs", std::move(epochs)},
              {"regret", std::move(regret)}};
}

/// Parse a JSON document; syntax errors name the byte offset.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const std::string& path) { return parse_json_text(read_text_file(path), path); }

}  // namespace mjslqr
