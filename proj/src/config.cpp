#include "slowfast/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slowfast/errors.hpp"

namespace slowfast {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// section -> key -> required? (true = required, false = optional)
const std::map<std::string, std::map<std::string, bool>>& schema_common() {
  static const std::map<std::string, std::map<std::string, bool>> s = {
      {"experiment",
       {{"kind", true}, {"master_seed", true}, {"out_dir", true}}},
      {"system",
       {{"builtin", false}, {"sigma", false}, {"eps", false}, {"n", false},
        {"m", false}, {"A", false}, {"B", false}, {"f", false}, {"g", false}}},
  };
  return s;
}

const std::map<std::string, std::map<std::string, bool>>& schema_kinds() {
  static const std::map<std::string, std::map<std::string, bool>> s = {
      {"simulate",
       {{"x0", true}, {"y0", true}, {"T", true}, {"dt_slow", true},
        {"save_every", false}}},
      {"manifold_gap",
       {{"x", true}, {"eps_list", true}, {"n_realizations", true},
        {"tol", false}, {"slice_x_min", false}, {"slice_x_max", false},
        {"slice_x_count", false}, {"slice_realizations", false}}},
      {"average_sweep",
       {{"x0", true}, {"T", true}, {"eps_list", true}, {"n_replicas", true},
        {"dt_slow_in_eps", false}}},
      {"intermediate_sweep",
       {{"x0", true}, {"T", true}, {"eps_list", true}, {"n_pairs", true},
        {"dt_slow_in_eps", false}, {"dt_intermediate", false}}},
      {"sigma_table",
       {{"x_min", true}, {"x_max", true}, {"x_count", true}, {"T_corr", true},
        {"T_total", true}}},
      {"validate_toy", {{"budget", false}}},
      {"martingale_check",
       {{"x0", true}, {"T", true}, {"n_replicas", true}, {"qv_replicas", false},
        {"hbar_inner", false}}},
  };
  return s;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigParse("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str(), path);
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text,
                                              const std::string& origin) {
  ExperimentConfig cfg;
  cfg.raw_text_ = text;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigParse(origin + ":" + std::to_string(lineno) +
                          ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigParse(origin + ":" + std::to_string(lineno) + ": empty section");
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigParse(origin + ":" + std::to_string(lineno) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigParse(origin + ":" + std::to_string(lineno) +
                        ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigParse(origin + ":" + std::to_string(lineno) + ": empty key or value");
    if (cfg.sections_[section].count(key))
      throw ConfigParse(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
    cfg.sections_[section][key] = value;
    cfg.key_lines_[section][key] = lineno;
  }

  cfg.kind_ = cfg.get_string("experiment", "kind");
  cfg.master_seed_ = static_cast<std::uint64_t>(cfg.get_int("experiment", "master_seed"));
  cfg.out_dir_ = cfg.get_string("experiment", "out_dir");
  cfg.validate_schema();
  return cfg;
}

void ExperimentConfig::validate_schema() const {
  const auto& kinds = schema_kinds();
  const auto kind_it = kinds.find(kind_);
  if (kind_it == kinds.end()) {
    std::string names;
    for (const auto& [k, v] : kinds) names += (names.empty() ? "" : ", ") + k;
    throw ConfigParse("unknown experiment kind '" + kind_ + "' (expected one of " +
                      names + ")");
  }
  // Unknown keys are rejected (strict parsing).
  for (const auto& [section, keys] : sections_) {
    const std::map<std::string, bool>* allowed = nullptr;
    if (auto it = schema_common().find(section); it != schema_common().end())
      allowed = &it->second;
    else if (section == kind_)
      allowed = &kind_it->second;
    if (!allowed)
      throw ConfigParse("unknown section [" + section + "] for kind " + kind_);
    for (const auto& [key, value] : keys) {
      (void)value;
      if (!allowed->count(key)) {
        const int line = key_lines_.at(section).at(key);
        throw ConfigParse("line " + std::to_string(line) + ": unknown key '" + key +
                          "' in [" + section + "]");
      }
    }
  }
  // Required keys must be present.
  auto require_all = [&](const std::string& section,
                         const std::map<std::string, bool>& keys) {
    for (const auto& [key, required] : keys) {
      if (!required) continue;
      if (!has(section, key))
        throw ConfigParse("missing required key '" + key + "' in [" + section + "]");
    }
  };
  require_all("experiment", schema_common().at("experiment"));
  if (sections_.count(kind_) == 0 && !kind_it->second.empty()) {
    for (const auto& [key, required] : kind_it->second)
      if (required)
        throw ConfigParse("missing required section [" + kind_ + "]");
  }
  if (sections_.count(kind_)) require_all(kind_, kind_it->second);

  // eps_list strictly decreasing when present.
  if (has(kind_, "eps_list")) {
    const auto eps = get_vector(kind_, "eps_list");
    for (std::size_t i = 1; i < eps.size(); ++i)
      if (!(eps[i] < eps[i - 1]))
        throw ConfigParse("eps_list must be strictly decreasing");
  }
}

bool ExperimentConfig::has(const std::string& section, const std::string& key) const {
  const auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

std::string ExperimentConfig::get_string(const std::string& section,
                                         const std::string& key) const {
  const auto it = sections_.find(section);
  if (it == sections_.end() || !it->second.count(key))
    throw ConfigParse("missing key '" + key + "' in [" + section + "]");
  return it->second.at(key);
}

std::string ExperimentConfig::get_string_or(const std::string& section,
                                            const std::string& key,
                                            const std::string& fallback) const {
  return has(section, key) ? get_string(section, key) : fallback;
}

double ExperimentConfig::get_double(const std::string& section,
                                    const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigParse("key '" + key + "' in [" + section + "]: not a number: " + v);
  }
}

double ExperimentConfig::get_double_or(const std::string& section,
                                       const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long ExperimentConfig::get_int(const std::string& section,
                               const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigParse("key '" + key + "' in [" + section + "]: not an integer: " + v);
  }
}

long ExperimentConfig::get_int_or(const std::string& section, const std::string& key,
                                  long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

std::vector<double> ExperimentConfig::get_vector(const std::string& section,
                                                 const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    const auto j = nlohmann::json::parse(v);
    if (!j.is_array()) throw std::invalid_argument("not an array");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(e.get<double>());
    return out;
  } catch (const std::exception& e) {
    throw ConfigParse("key '" + key + "' in [" + section + "]: bad array: " + e.what());
  }
}

std::vector<std::vector<double>> ExperimentConfig::get_matrix(
    const std::string& section, const std::string& key) const {
  const std::string v = get_string(section, key);
  try {
    const auto j = nlohmann::json::parse(v);
    std::vector<std::vector<double>> out;
    for (const auto& row : j) {
      std::vector<double> r;
      for (const auto& e : row) r.push_back(e.get<double>());
      out.push_back(r);
    }
    return out;
  } catch (const std::exception& e) {
    throw ConfigParse("key '" + key + "' in [" + section + "]: bad matrix: " + e.what());
  }
}

}  // namespace slowfast
