#pragma once

#include <span>
#include <vector>

namespace econ {

// 1 / (1 + exp(-x)); stable over the whole double range. Throws
// std::domain_error on non-finite input.
double sigmoid(double x);

// softmax(scale * v), max-subtracted. Throws std::domain_error on an empty or
// non-finite vector or a non-positive scale.
std::vector<double> softmax(std::span<const double> v, double scale = 1.0);

struct CosineResult {
  double value = 0.0;
  // Set when either input has zero norm; value is then 0.
  bool degenerate = false;
};

CosineResult cosine_sim(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> u, std::span<const double> v);

}  // namespace econ
