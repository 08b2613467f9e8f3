#pragma once

// "key = value" text files: one entry per line, '#' starts a comment, lists
// are comma separated, matrices are rows separated by ';'.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agh/errors.hpp"

namespace agh {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "config") {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw InputError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      std::transform(key.begin(), key.end(), key.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (key.empty()) throw InputError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key))
        throw InputError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) { return parse(read_file(path), path); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [key, _] : values_) k.push_back(key);
    return k;
  }

  std::string str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(key, "missing required field");
    return it->second;
  }

  double real(const std::string& key) const { return to_real(key, str(key)); }

  long long integer(const std::string& key) const { return to_integer(key, str(key)); }

  std::uint64_t u64(const std::string& key) const {
    const std::string v = str(key);
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(key, "expected an unsigned integer");
    return out;
  }

  std::vector<std::string> list(const std::string& key) const {
    auto items = split(str(key), ',');
    if (items.empty() || std::any_of(items.begin(), items.end(), [](auto& s) { return s.empty(); }))
      fail(key, "expected a non-empty comma separated list");
    return items;
  }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : list(key)) out.push_back(to_real(key, s));
    return out;
  }

  std::vector<long long> integer_list(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& s : list(key)) out.push_back(to_integer(key, s));
    return out;
  }

  /// Rows separated by ';', entries by ','.
  Eigen::MatrixXd matrix(const std::string& key) const {
    const auto rows = split(str(key), ';');
    std::vector<std::vector<double>> vals;
    for (const auto& r : rows) {
      if (r.empty()) continue;
      std::vector<double> row;
      for (const auto& s : split(r, ',')) row.push_back(to_real(key, s));
      vals.push_back(std::move(row));
    }
    if (vals.empty()) fail(key, "expected a matrix");
    const std::size_t cols = vals.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(vals.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (vals[i].size() != cols) fail(key, "rows have different lengths");
      for (std::size_t j = 0; j < cols; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vals[i][j];
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw InputError(origin_ + ": field '" + key + "': " + msg);
  }

 private:
  double to_real(const std::string& key, const std::string& s) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + s + "'");
    }
  }

  long long to_integer(const std::string& key, const std::string& s) const {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || ptr != s.data() + s.size())
      fail(key, "expected an integer, got '" + s + "'");
    return out;
  }

  std::string origin_;
  std::map<std::string, std::string> values_;
};

}  // namespace agh
