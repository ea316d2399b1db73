#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace slowfast {

inline constexpr const char* kVersionString = "slowfast-reduce 0.1.0";

// Flat sectioned config: "[section]" headers, "key = value" entries, '#'
// comments. Strict: unknown sections or keys are rejected with the line
// number, as are missing required keys.
class ExperimentConfig {
 public:
  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_text(const std::string& text,
                                     const std::string& origin = "<string>");

  const std::string& kind() const { return kind_; }
  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& out_dir() const { return out_dir_; }
  const std::string& raw_text() const { return raw_text_; }

  bool has(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key,
                       double fallback) const;
  long get_int(const std::string& section, const std::string& key) const;
  long get_int_or(const std::string& section, const std::string& key,
                  long fallback) const;
  std::string get_string(const std::string& section, const std::string& key) const;
  std::string get_string_or(const std::string& section, const std::string& key,
                            const std::string& fallback) const;
  std::vector<double> get_vector(const std::string& section,
                                 const std::string& key) const;
  std::vector<std::vector<double>> get_matrix(const std::string& section,
                                              const std::string& key) const;

 private:
  void validate_schema() const;

  std::string kind_;
  std::uint64_t master_seed_ = 0;
  std::string out_dir_;
  std::string raw_text_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::map<std::string, std::map<std::string, int>> key_lines_;
};

// Executes the configured experiment; returns 0 on success, 2 when a
// validation item fails, 1 on error. Output files plus a manifest are written
// under out_dir; every byte is a function of (config, seed).
int run_experiment(const ExperimentConfig& config);
int run_experiment_file(const std::string& config_path);

}  // namespace slowfast
