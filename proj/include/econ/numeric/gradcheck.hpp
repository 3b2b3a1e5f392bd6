#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tape.hpp"

namespace econ {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  // Denominator floor used for this run, see resolution_floor().
  double floor = 1e-6;
};

// Relative error used by every gradient check: |a - n| / max(|a|, |n|, floor).
// The floor keeps coordinates whose true gradient is zero from reporting
// round-off as a large relative error.
double gradient_rel_error(double analytic, double numeric, double floor = 1e-6);

// Smallest gradient magnitude a central difference with step h can resolve
// on a loss of this size: 1e5 * eps * max(1, |loss|) / h, never below 1e-6.
// Rounding in the two loss evaluations alone contributes about
// eps * |loss| / h of absolute error, so coordinates whose gradient is below
// this floor are compared in absolute terms against it.
double resolution_floor(double loss, double h);

// Builds the loss on a fresh tape. It must read parameters from the store
// passed to finite_diff_check with Grad::kTrack.
using TapeLoss = std::function<Var(Tape&)>;

// Compares backward() gradients against central differences with step h for
// every coordinate of every parameter in `params` (or a seeded sample of at
// most `max_coords_per_param` coordinates per parameter when nonzero).
// Parameter values are restored on return. h must lie in [1e-7, 1e-3].
GradCheckReport finite_diff_check(const TapeLoss& loss, ParamStore& params, double h = 1e-5,
                                  std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

// Same comparison for a plain function of a flat vector and a caller-provided
// analytic gradient.
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                                  std::span<const double> x, std::span<const double> analytic,
                                  double h = 1e-5);

}  // namespace econ
