#pragma once

#include <string>

#include "econ/numeric/param_store.hpp"

namespace econ {

enum class OptimizerKind { kAdam, kAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Decoupled decay, only applied by the AdamW variant.
  double weight_decay = 0.01;

  void validate() const;
};

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// One bias-corrected Adam/AdamW update over every parameter in the store,
// then zeroes the gradients and bumps the step count. A non-finite gradient
// throws std::domain_error naming the parameter before anything is touched.
void adam_step(ParamStore& store, const OptimizerConfig& cfg);

}  // namespace econ
