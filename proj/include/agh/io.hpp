#pragma once

// CSV formats:
//   data       header of item names, then one row of 0/1 per subject
//   estimates  parameter,estimate,se   (17 significant digits)
// and the model spec file for fitting ("q = ..", "mask = echelon | none | rows").

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/config.hpp"
#include "agh/errors.hpp"
#include "agh/estimator.hpp"
#include "agh/model.hpp"

namespace agh {

/// Shortest round-tripping text is not required; 17 significant digits is.
inline std::string format_g17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_g17(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

struct LabelledData {
  std::vector<std::string> items;
  Dataset data;
};

inline LabelledData parse_data_csv(const std::string& text, const std::string& origin = "data") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError(origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> items = split(line, ',');
  const auto p = static_cast<Eigen::Index>(items.size());
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (static_cast<Eigen::Index>(cells.size()) != p)
      throw InputError(origin + ": row " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(p));
    std::vector<double> row;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j] != "0" && cells[j] != "1")
        throw InputError(origin + ": row " + std::to_string(lineno) + ", column " +
                         std::to_string(j + 1) + " (" + items[j] + "): expected 0 or 1, got '" +
                         cells[j] + "'");
      row.push_back(cells[j] == "1" ? 1.0 : 0.0);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(origin + ": no data rows");
  RowMatrix y(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t l = 0; l < rows.size(); ++l)
    for (Eigen::Index j = 0; j < p; ++j) y(static_cast<Eigen::Index>(l), j) = rows[l][j];
  return {std::move(items), Dataset(std::move(y))};
}

inline LabelledData load_data_csv(const std::string& path) {
  return parse_data_csv(read_file(path), path);
}

inline std::string data_to_csv(const Dataset& data, const std::vector<std::string>& items = {}) {
  std::ostringstream out;
  for (int j = 0; j < data.p(); ++j) {
    if (j) out << ',';
    out << (items.empty() ? "item" + std::to_string(j + 1) : items[j]);
  }
  out << '\n';
  for (std::size_t l = 0; l < data.n(); ++l) {
    for (int j = 0; j < data.p(); ++j) {
      if (j) out << ',';
      out << (data.y()(static_cast<Eigen::Index>(l), j) != 0.0 ? '1' : '0');
    }
    out << '\n';
  }
  return out.str();
}

/// Builds a ModelSpec for p items from a spec config:
///   q = 2
///   mask = echelon          (default) | none (intercept-only) | 1,0;1,1;...
inline ModelSpec spec_from_config(const KeyValueConfig& cfg, int p) {
  if (cfg.has("p") && cfg.integer("p") != p)
    cfg.fail("p", "spec declares p = " + cfg.str("p") + " but the data has " +
                      std::to_string(p) + " items");
  const std::string mask = cfg.has("mask") ? cfg.str("mask") : std::string("echelon");
  if (mask == "none") return ModelSpec::intercept_only(p);
  const long long q = cfg.integer("q");
  if (q < 1 || q > p) cfg.fail("q", "must lie in [1, p]");
  if (mask == "echelon") return ModelSpec::echelon(p, static_cast<int>(q));
  const Eigen::MatrixXd m = cfg.matrix("mask");
  if (m.rows() != p || m.cols() != q)
    cfg.fail("mask", "is " + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) +
                         " but data/spec need " + std::to_string(p) + " x " + std::to_string(q));
  Mask b(p, q);
  for (int j = 0; j < p; ++j)
    for (int d = 0; d < q; ++d) b(j, d) = m(j, d) != 0.0;
  try {
    return ModelSpec(p, static_cast<int>(q), std::move(b));
  } catch (const InvalidArgument& e) {
    cfg.fail("mask", e.what());
  }
}

struct EstimateRow {
  std::string parameter;
  double estimate;
  double se;
};

inline std::string estimates_to_csv(const FitResult& r) {
  std::ostringstream out;
  out << "parameter,estimate,se\n";
  const auto names = Theta::parameter_names(r.theta_hat.spec());
  const Eigen::VectorXd x = r.theta_hat.flatten();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out << names[static_cast<std::size_t>(i)] << ',' << format_g17(x[i]) << ','
        << format_g17(r.std_errors[i]) << '\n';
  return out.str();
}

inline std::vector<EstimateRow> parse_estimates_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "parameter,estimate,se")
    throw InputError("estimates: missing header 'parameter,estimate,se'");
  std::vector<EstimateRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 3) throw InputError("estimates: malformed row '" + line + "'");
    try {
      rows.push_back({c[0], parse_g17(c[1]), parse_g17(c[2])});
    } catch (const std::exception&) {
      throw InputError("estimates: malformed number in row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace agh
