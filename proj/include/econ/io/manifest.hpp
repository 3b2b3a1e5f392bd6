#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace econ {

// Version string compiled into the binaries.
const char* code_version();

// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(const std::string& data);

// What a run needs to be repeated: the command, its arguments, the full
// saved config and the seed. `outputs` and `wall_seconds` are informational.
struct Manifest {
  std::string command;
  std::string version;
  std::uint64_t seed = 0;
  std::string config;
  std::string config_hash;
  nlohmann::json args = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  double wall_seconds = 0.0;
};

// Fills version and config_hash from the other fields.
Manifest make_manifest(std::string command, const std::string& config_text, std::uint64_t seed,
                       nlohmann::json args);

nlohmann::json to_json(const Manifest& m);
// Throws std::invalid_argument when a field is missing or the config hash
// does not match the stored config.
Manifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

}  // namespace econ
