#include "econ/numeric/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace econ {

void ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractViolation("duplicate parameter '" + name + "'");
  Param p;
  p.grad = Tensor(init.shape());
  p.m = Tensor(init.shape());
  p.v = Tensor(init.shape());
  p.value = std::move(init);
  params_.emplace(name, std::move(p));
}

void ParamStore::add_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                             std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::matrix(rows, cols);
  for (double& x : t.data()) x = dist(rng);
  add(name, std::move(t));
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

bool ParamStore::grads_all_zero() const {
  for (const auto& [name, p] : params_) {
    for (double g : p.grad.data()) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, p] : params_) {
    mix(name.data(), name.size());
    for (double x : p.value.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      mix(&bits, sizeof bits);
    }
  }
  return h;
}

void soft_update(const ParamStore& source, ParamStore& target, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  for (auto& [name, p] : target) {
    const Tensor& src = source.value(name);
    if (!src.same_shape(p.value)) {
      throw ShapeError("soft_update: shape mismatch for '" + name + "': " + src.shape_string() +
                       " vs " + p.value.shape_string());
    }
    auto dst = p.value.data();
    auto s = src.data();
    if (tau == 1.0) {
      std::copy(s.begin(), s.end(), dst.begin());
      continue;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * s[i] + (1.0 - tau) * dst[i];
  }
}

ParamStore clone_subset(const ParamStore& source, const std::vector<std::string>& names) {
  ParamStore out;
  for (const auto& n : names) out.add(n, source.value(n));
  return out;
}

}  // namespace econ
