#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "econ/orchestrator/orchestrator.hpp"

namespace econ {

// Error raised for one config entry; key() names the entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  EconConfig econ;
  // "mock" or "http".
  std::string backend = "mock";
  std::string model;
  // Question file; empty selects the built-in arithmetic set.
  std::string questions;
  std::size_t clusters = 3;
  // Parsed and range-checked; the networks use no dropout.
  double dropout = 0.0;
  bool cumulative_tokens = true;

  RunConfig();
};

// Grammar (see README):
//
//   # comment
//   [section]
//   key = value
//
// Keys are unique across sections. A key placed under the wrong section, an
// unknown key or section, and an out-of-range value all raise ConfigError.
// Keys before the first section header may come from any section. Absent
// keys keep their defaults.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

// Every key in schema order, grouped by section; parse_config(save_config(c))
// reproduces c.
std::string save_config(const RunConfig& cfg);

// Names and values of every key, in schema order.
std::vector<std::pair<std::string, std::string>> config_fields(const RunConfig& cfg);
bool same_fields(const RunConfig& a, const RunConfig& b);

// Sets one key from its text form (same checks as parse_config).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Question file: one "question<TAB>reference" per line; blank lines and
// lines starting with '#' are skipped. Throws std::invalid_argument for a
// line without a tab or a file with no questions.
std::vector<Question> parse_questions(std::istream& in);
std::vector<Question> load_questions(const std::string& path);
// Small arithmetic set used when no file is configured.
std::vector<Question> builtin_questions();

}  // namespace econ
