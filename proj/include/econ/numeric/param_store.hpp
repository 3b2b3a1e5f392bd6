#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "econ/numeric/tensor.hpp"

namespace econ {

struct Param {
  Tensor value;
  Tensor grad;
  // Adam first and second moments.
  Tensor m;
  Tensor v;
};

// Named parameters with same-shaped gradient and moment slots. Iteration
// order is the lexicographic order of names, which keeps checksums,
// checkpoints and optimizer traversal deterministic.
class ParamStore {
 public:
  using Map = std::map<std::string, Param>;

  void add(const std::string& name, Tensor init);
  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void add_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                   std::mt19937_64& rng);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }
  const Tensor& grad(const std::string& name) const { return at(name).grad; }

  void zero_grad();
  bool grads_all_zero() const;
  std::size_t parameter_count() const;
  std::vector<std::string> names() const;

  std::uint64_t step_count() const { return step_; }
  void set_step_count(std::uint64_t step) { step_ = step; }

  // FNV-1a over names and value bits. Equal checksums mean bit-identical
  // parameter values.
  std::uint64_t checksum() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  Map params_;
  std::uint64_t step_ = 0;
};

// target <- tau * source + (1 - tau) * target for every parameter of
// `target`. tau must lie in (0, 1].
void soft_update(const ParamStore& source, ParamStore& target, double tau);

// Copies the values of the named parameters of `source` into a fresh store.
ParamStore clone_subset(const ParamStore& source, const std::vector<std::string>& names);

}  // namespace econ
