#include "econ/numeric/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace econ {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer: beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("optimizer: weight decay must be >= 0");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "adamw"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam" || name == "Adam") return OptimizerKind::kAdam;
  if (name == "adamw" || name == "AdamW") return OptimizerKind::kAdamW;
  throw std::invalid_argument("unknown optimizer '" + name + "' (allowed: adam, adamw)");
}

void adam_step(ParamStore& store, const OptimizerConfig& cfg) {
  cfg.validate();
  for (const auto& [name, p] : store) {
    if (!p.grad.all_finite()) throw std::domain_error("adam_step: non-finite gradient in '" + name + "'");
  }
  const std::uint64_t t = store.step_count() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : store) {
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = p.m.data();
    auto v = p.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (cfg.kind == OptimizerKind::kAdamW) w[i] -= cfg.learning_rate * cfg.weight_decay * w[i];
      w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  store.zero_grad();
  store.set_step_count(t);
}

}  // namespace econ
