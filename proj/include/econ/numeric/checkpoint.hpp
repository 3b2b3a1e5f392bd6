#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "econ/numeric/param_store.hpp"

namespace econ {

inline constexpr const char* kCheckpointTag = "econ-ckpt-v1";

// Text container, one block per store section:
//
//   econ-ckpt-v1
//   store <section> <step>
//   param <name> <rank> <dim>...
//   <values as hex floats, one line>
//   end
//
// Hex floats make the round trip bit-exact.
void write_checkpoint(std::ostream& os, const std::map<std::string, const ParamStore*>& sections);
std::map<std::string, ParamStore> read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, const ParamStore*>& sections);
std::map<std::string, ParamStore> load_checkpoint(const std::filesystem::path& path);

// Copies values of every parameter present in both stores into `dst`; shapes
// must match.
void restore_values(const ParamStore& src, ParamStore& dst);

}  // namespace econ
