#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tensor.hpp"

namespace econ {

// Whether a bound parameter participates in gradient accumulation.
enum class Grad { kTrack, kFreeze };

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

// Reverse-mode gradient tape over a fixed op vocabulary. Every op produces a
// rank-2 tensor; row vectors are 1 x n. Binary elementwise ops broadcast the
// second operand when it has a single row and/or a single column.
//
// Parameters bound with Grad::kTrack receive their gradients in the owning
// ParamStore's grad slots when backward() runs; frozen parameters and
// constants never receive gradient.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  Var param(ParamStore& store, const std::string& name, Grad mode = Grad::kTrack);
  Var param(const ParamStore& store, const std::string& name);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var square(Var a);
  // Row-wise softmax of scale * a.
  Var softmax_rows(Var a, double scale = 1.0);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var transpose(Var a);
  // Sum of all entries, 1 x 1.
  Var sum(Var a);
  // Column means over rows, 1 x cols.
  Var mean_rows(Var a);
  // Cosine similarity of two row vectors, 1 x 1. A zero-norm operand yields 0
  // with zero gradient and bumps degenerate_cosines().
  Var cosine(Var a, Var b);

  const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.value;
  }
  double scalar(Var v) const;
  // Gradient of the last backward() target w.r.t. v; empty if v took no part.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Propagates d(loss)/d(.) through the tape and accumulates into the grad
  // slots of every tracked parameter. loss must be a finite 1 x 1 value.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::size_t degenerate_cosines() const { return degenerate_cosines_; }

 private:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  struct Node {
    Tensor value;
    // Rank-2 parameters are read in place from their store instead of
    // being copied; the store must outlive the tape unchanged.
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  Var push(Tensor value, bool requires_grad, BackwardFn fn, const char* op);
  Var push_param(const Tensor& value, bool requires_grad);
  Tensor& grad_slot(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> tracked_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> frozen_;
  std::size_t degenerate_cosines_ = 0;
};

}  // namespace econ
