#include "econ/numeric/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace econ {
namespace {

void check_step(double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw std::invalid_argument("finite_diff_check: h must lie in [1e-7, 1e-3]");
}

void record(GradCheckReport& rep, const std::string& name, std::size_t idx, double a, double n) {
  const double err = gradient_rel_error(a, n, rep.floor);
  ++rep.checked;
  if (rep.checked == 1 || err > rep.max_rel_error) {
    rep.max_rel_error = err;
    rep.worst_param = name;
    rep.worst_index = idx;
    rep.worst_analytic = a;
    rep.worst_numeric = n;
  }
}

double central_difference(double& coord, double h, const std::function<double()>& eval) {
  const double orig = coord;
  coord = orig + h;
  const double up = eval();
  coord = orig - h;
  const double down = eval();
  coord = orig;
  return (up - down) / (2.0 * h);
}

}  // namespace

double resolution_floor(double loss, double h) {
  const double roundoff = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss)) / h;
  return std::max(1e-6, 1e5 * roundoff);
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_diff_check(const TapeLoss& loss, ParamStore& params, double h,
                                  std::size_t max_coords_per_param, std::uint64_t seed) {
  check_step(h);
  params.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&loss]() {
    Tape tape;
    return tape.scalar(loss(tape));
  };

  std::mt19937_64 rng(seed);
  GradCheckReport rep;
  rep.floor = resolution_floor(eval(), h);
  for (auto& [name, p] : params) {
    const Tensor analytic = p.grad;
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t idx : coords) {
      record(rep, name, idx, analytic[idx], central_difference(p.value[idx], h, eval));
    }
  }
  params.zero_grad();
  return rep;
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                                  std::span<const double> x, std::span<const double> analytic, double h) {
  check_step(h);
  if (x.size() != analytic.size()) throw ShapeError("finite_diff_check: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  GradCheckReport rep;
  rep.floor = resolution_floor(fn(probe), h);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    record(rep, "x", i, analytic[i], central_difference(probe[i], h, [&] { return fn(probe); }));
  }
  return rep;
}

}  // namespace econ
