#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipham/ensemble.hpp"
#include "dissipham/integrate.hpp"
#include "dissipham/model.hpp"
#include "dissipham/substitute.hpp"
#include "dissipham/verify.hpp"

namespace dissipham {

/// Scenario file problem; message carries file:line and the field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, const std::string& what_msg)
      : std::runtime_error(where + ": " + what_msg) {}
};

/// Everything one run needs: system, initial condition, horizon,
/// integrator settings, optional ensemble domain, check selection.
struct ScenarioConfig {
  std::string name;
  int n = 0;
  Mat damping, stiffness;
  bool physical = true;
  InitialCondition initial;
  double t_end = 0.0;
  IntegratorOptions integrator;
  SegmentationOptions segmentation;
  CheckOptions checks;
  std::vector<std::string> check_selection;  // empty = all
  std::optional<DomainSpec> domain;
  std::string out_dir = "out";

  DampedSystem system() const { return DampedSystem(damping, stiffness, physical); }
};

namespace detail {

struct ConfigItem {
  std::string value;
  int line = 0;
  mutable bool used = false;
};

class ConfigTree {
 public:
  ConfigTree(std::istream& in, std::string source) : source_(std::move(source)) {
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']') fail(lineno, trimmed, "unterminated section header");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        if (section.empty()) fail(lineno, trimmed, "empty section name");
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) fail(lineno, trimmed, "expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) fail(lineno, trimmed, "empty key");
      if (section.empty()) fail(lineno, trimmed, "key outside any [section]");
      const std::string path = section + "." + key;
      if (items_.count(path)) fail(lineno, path, "duplicate key");
      items_[path] = ConfigItem{value, lineno, false};
    }
  }

  bool has(const std::string& path) const { return items_.count(path) > 0; }

  const ConfigItem& require(const std::string& path) const {
    auto it = items_.find(path);
    if (it == items_.end()) {
      throw ConfigError(source_, "missing required key [" + path + "]");
    }
    it->second.used = true;
    return it->second;
  }

  const ConfigItem* optional(const std::string& path) const {
    auto it = items_.find(path);
    if (it == items_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  double number(const std::string& path) const { return to_number(require(path), path); }

  double number_or(const std::string& path, double fallback) const {
    const ConfigItem* item = optional(path);
    return item ? to_number(*item, path) : fallback;
  }

  int integer(const std::string& path) const {
    const double v = number(path);
    if (v != static_cast<long>(v)) {
      throw ConfigError(at(require(path).line, path), "expected an integer");
    }
    return static_cast<int>(v);
  }

  bool boolean_or(const std::string& path, bool fallback) const {
    const ConfigItem* item = optional(path);
    if (!item) return fallback;
    if (item->value == "true") return true;
    if (item->value == "false") return false;
    throw ConfigError(at(item->line, path), "expected true or false");
  }

  std::vector<double> array(const std::string& path) const {
    const ConfigItem& item = require(path);
    return to_array(item, path);
  }

  std::vector<std::string> name_list(const std::string& path) const {
    const ConfigItem& item = require(path);
    std::vector<std::string> out;
    std::stringstream ss(item.value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    if (out.empty()) throw ConfigError(at(item.line, path), "expected a comma-separated list");
    return out;
  }

  std::string text(const std::string& path) const { return require(path).value; }

  void fail_on_unused() const {
    for (const auto& [path, item] : items_) {
      if (!item.used) {
        throw ConfigError(at(item.line, path), "unknown key");
      }
    }
  }

  std::string at(int line, const std::string& path) const {
    return source_ + ":" + std::to_string(line) + ": [" + path + "]";
  }

 private:
  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  void fail(int line, const std::string& path, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": [" + path + "]", msg);
  }

  double to_number(const ConfigItem& item, const std::string& path) const {
    const char* begin = item.value.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
      throw ConfigError(at(item.line, path), "expected a number, got '" + item.value + "'");
    }
    return v;
  }

  std::vector<double> to_array(const ConfigItem& item, const std::string& path) const {
    const std::string& v = item.value;
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
      throw ConfigError(at(item.line, path), "expected [v1, v2, ...]");
    }
    std::vector<double> out;
    std::stringstream ss(v.substr(1, v.size() - 2));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) throw ConfigError(at(item.line, path), "empty array element");
      const char* begin = tok.c_str();
      char* end = nullptr;
      const double x = std::strtod(begin, &end);
      if (end == begin || *end != '\0') {
        throw ConfigError(at(item.line, path), "bad array element '" + tok + "'");
      }
      out.push_back(x);
    }
    return out;
  }

  std::string source_;
  std::map<std::string, ConfigItem> items_;
};

inline Mat matrix_from(const ConfigTree& tree, const std::string& path, int n) {
  const std::vector<double> flat = tree.array(path);
  if (static_cast<int>(flat.size()) != n * n) {
    throw ConfigError(tree.at(tree.require(path).line, path),
                      "expected " + std::to_string(n * n) + " row-major values for a " +
                          std::to_string(n) + "x" + std::to_string(n) + " matrix, got " +
                          std::to_string(flat.size()));
  }
  Mat m(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) m(r, c) = flat[static_cast<size_t>(r * n + c)];
  }
  return m;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(std::istream& in, const std::string& source,
                                     const std::string& name) {
  detail::ConfigTree tree(in, source);
  ScenarioConfig cfg;
  cfg.name = name;

  cfg.n = tree.integer("system.n");
  if (cfg.n < 1) throw ConfigError(source, "[system.n] must be a positive integer");
  cfg.damping = detail::matrix_from(tree, "system.C", cfg.n);
  cfg.stiffness = detail::matrix_from(tree, "system.K", cfg.n);
  cfg.physical = tree.boolean_or("system.physical", true);

  const std::vector<double> a = tree.array("initial.a");
  if (static_cast<int>(a.size()) != 2 * cfg.n) {
    throw ConfigError(tree.at(tree.require("initial.a").line, "initial.a"),
                      "expected " + std::to_string(2 * cfg.n) + " values (q0 then qdot0), got " +
                          std::to_string(a.size()));
  }
  Vec av(2 * cfg.n);
  for (int i = 0; i < 2 * cfg.n; ++i) av(i) = a[static_cast<size_t>(i)];
  cfg.initial = InitialCondition(av);

  cfg.t_end = tree.number("time.t_end");
  if (cfg.t_end <= 0) throw ConfigError(source, "[time.t_end] must be positive");

  cfg.integrator.rtol = tree.number_or("integrator.rtol", 1e-10);
  cfg.integrator.atol = tree.number_or("integrator.atol", 1e-12);
  cfg.integrator.max_step = tree.number_or("integrator.max_step", 0.0);

  cfg.segmentation.table_dt = tree.number_or("substitute.table_dt", 0.0);
  if (tree.has("substitute.graded_levels")) {
    cfg.segmentation.graded_levels = tree.integer("substitute.graded_levels");
  }

  cfg.checks.verlet_h = tree.number_or("checks.verlet_h", cfg.checks.verlet_h);
  for (const std::string& nm : standard_check_names()) {
    if (tree.has("checks." + nm)) {
      cfg.checks.override_tolerance(nm, tree.number("checks." + nm));
    }
  }
  if (tree.has("checks.run")) {
    auto names = tree.name_list("checks.run");
    if (!(names.size() == 1 && names[0] == "all")) {
      for (const auto& nm : names) {
        const auto& known = standard_check_names();
        if (std::find(known.begin(), known.end(), nm) == known.end()) {
          throw ConfigError(tree.at(tree.require("checks.run").line, "checks.run"),
                            "unknown check '" + nm + "'");
        }
      }
      cfg.check_selection = names;
    }
  }

  // Domain block (optional): q1..qn and v1..vn axes enable the ensemble.
  bool any_axis = false;
  for (int i = 1; i <= cfg.n && !any_axis; ++i) {
    any_axis = tree.has("domain.q" + std::to_string(i));
  }
  if (any_axis) {
    DomainSpec spec;
    spec.axes.resize(static_cast<size_t>(2 * cfg.n));
    for (int i = 0; i < 2 * cfg.n; ++i) {
      const std::string axis =
          (i < cfg.n ? "q" + std::to_string(i + 1) : "v" + std::to_string(i - cfg.n + 1));
      const std::string path = "domain." + axis;
      const std::vector<double> iv = tree.array(path);
      if (iv.size() != 2) {
        throw ConfigError(tree.at(tree.require(path).line, path), "expected [lo, hi]");
      }
      DomainSpec::Axis ax;
      ax.lo = iv[0];
      ax.hi = iv[1];
      ax.nodes = tree.integer(path + "_nodes");
      spec.axes[static_cast<size_t>(i)] = ax;
    }
    cfg.domain = spec;
  }

  if (const auto* item = tree.optional("output.dir")) cfg.out_dir = item->value;

  tree.fail_on_unused();
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open scenario file");
  std::string name = path;
  if (auto pos = name.find_last_of("/\\"); pos != std::string::npos) name = name.substr(pos + 1);
  if (auto pos = name.rfind(".cfg"); pos != std::string::npos) name = name.substr(0, pos);
  return parse_scenario(in, path, name);
}

}  // namespace dissipham
