#include "econ/io/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>

#ifndef ECON_VERSION
#define ECON_VERSION "0.0.0"
#endif

namespace econ {

const char* code_version() { return ECON_VERSION; }

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", digest[k]);
    hex += buf;
  }
  return hex;
}

Manifest make_manifest(std::string command, const std::string& config_text, std::uint64_t seed,
                       nlohmann::json args) {
  Manifest m;
  m.command = std::move(command);
  m.version = code_version();
  m.seed = seed;
  m.config = config_text;
  m.config_hash = sha256_hex(config_text);
  m.args = args.is_null() ? nlohmann::json::object() : std::move(args);
  return m;
}

nlohmann::json to_json(const Manifest& m) {
  return {{"command", m.command}, {"version", m.version},   {"seed", m.seed},       {"config", m.config},
          {"config_hash", m.config_hash}, {"args", m.args}, {"outputs", m.outputs}, {"wall_seconds", m.wall_seconds}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.args = j.value("args", nlohmann::json::object());
    m.outputs = j.value("outputs", nlohmann::json::object());
    m.wall_seconds = j.value("wall_seconds", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest: ") + e.what());
  }
  if (sha256_hex(m.config) != m.config_hash) throw std::invalid_argument("manifest config hash does not match");
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << to_json(m).dump(2) << '\n';
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace econ
