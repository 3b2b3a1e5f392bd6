#include "econ/numeric/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace econ {

void write_checkpoint(std::ostream& os, const std::map<std::string, const ParamStore*>& sections) {
  os << kCheckpointTag << '\n';
  char buf[64];
  for (const auto& [section, store] : sections) {
    os << "store " << section << ' ' << store->step_count() << '\n';
    for (const auto& [name, p] : *store) {
      os << "param " << name << ' ' << p.value.rank();
      for (std::size_t d : p.value.shape()) os << ' ' << d;
      os << '\n';
      bool first = true;
      for (double x : p.value.data()) {
        std::snprintf(buf, sizeof buf, "%a", x);
        if (!first) os << ' ';
        os << buf;
        first = false;
      }
      os << '\n';
    }
    os << "end\n";
  }
}

std::map<std::string, ParamStore> read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointTag) {
    throw std::runtime_error("checkpoint: missing '" + std::string(kCheckpointTag) + "' header");
  }
  std::map<std::string, ParamStore> out;
  ParamStore* current = nullptr;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string kind;
    head >> kind;
    if (kind == "store") {
      std::string section;
      std::uint64_t step = 0;
      if (!(head >> section >> step)) throw std::runtime_error("checkpoint: bad store line '" + line + "'");
      current = &out[section];
      current->set_step_count(step);
    } else if (kind == "param") {
      if (current == nullptr) throw std::runtime_error("checkpoint: param outside a store block");
      std::string name;
      std::size_t rank = 0;
      if (!(head >> name >> rank)) throw std::runtime_error("checkpoint: bad param line '" + line + "'");
      std::vector<std::size_t> shape(rank);
      for (auto& d : shape) {
        if (!(head >> d)) throw std::runtime_error("checkpoint: bad shape for '" + name + "'");
      }
      std::string values;
      if (!std::getline(is, values)) throw std::runtime_error("checkpoint: missing values for '" + name + "'");
      std::istringstream vs(values);
      std::vector<double> data;
      std::string tok;
      while (vs >> tok) data.push_back(std::strtod(tok.c_str(), nullptr));
      current->add(name, Tensor(std::move(shape), std::move(data)));
    } else if (kind == "end") {
      current = nullptr;
    } else {
      throw std::runtime_error("checkpoint: unexpected line '" + line + "'");
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, const ParamStore*>& sections) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path.string());
  write_checkpoint(os, sections);
}

std::map<std::string, ParamStore> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path.string());
  return read_checkpoint(is);
}

void restore_values(const ParamStore& src, ParamStore& dst) {
  for (auto& [name, p] : dst) {
    if (!src.contains(name)) continue;
    const Tensor& v = src.value(name);
    if (!v.same_shape(p.value)) {
      throw ShapeError("restore_values: shape mismatch for '" + name + "'");
    }
    p.value = v;
  }
  dst.set_step_count(src.step_count());
}

}  // namespace econ
