#include "econ/numeric/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "econ/numeric/tensor.hpp"

namespace econ {

double sigmoid(double x) {
  if (!std::isfinite(x)) throw std::domain_error("sigmoid: non-finite input");
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v, double scale) {
  if (v.empty()) throw std::domain_error("softmax: empty vector");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::domain_error("softmax: scale must be > 0");
  double hi = -INFINITY;
  for (double x : v) {
    if (!std::isfinite(x)) throw std::domain_error("softmax: non-finite entry");
    hi = std::max(hi, x);
  }
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(scale * (v[i] - hi));
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("dot: length " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double l2_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ShapeError("l2_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return std::sqrt(s);
}

CosineResult cosine_sim(std::span<const double> u, std::span<const double> v) {
  const double uv = dot(u, v);
  const double nu = l2_norm(u);
  const double nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) return {0.0, true};
  return {std::clamp(uv / (nu * nv), -1.0, 1.0), false};
}

}  // namespace econ
