#include "econ/numeric/tape.hpp"

#include "econ/numeric/math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace econ {
namespace {

Tensor zeros_like(const Tensor& t) { return Tensor::matrix(t.rows(), t.cols()); }

// Checks that b broadcasts onto a: each of b's dims equals a's or is 1.
void check_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok) {
    throw ShapeError(std::string(op) + ": operand " + b.shape_string() + " does not broadcast onto " +
                     a.shape_string());
  }
}

// Sum-reduces a full-shape gradient down to b's broadcast shape.
Tensor reduce_to(const Tensor& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out(rows == 1 ? 0 : r, cols == 1 ? 0 : c) += g(r, c);
    }
  }
  return out;
}

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  const std::size_t r = t.rows();
  const std::size_t c = t.cols();
  std::vector<double> data(t.data().begin(), t.data().end());
  return Tensor({r, c}, std::move(data));
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn, const char* op) {
  if (!value.all_finite()) {
    throw std::domain_error(std::string("tape: non-finite value produced by ") + op);
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::push_param(const Tensor& value, bool requires_grad) {
  if (value.rank() != 2) return push(as_matrix(value), requires_grad, [](Tape&, const Tensor&) {}, "param");
  Node n;
  n.ref = &value;
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = [](Tape&, const Tensor&) {};
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = zeros_like(n.ref ? *n.ref : n.value);
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  Tensor& slot = grad_slot(id);
  auto d = slot.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

double Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw ContractViolation("tape: value " + t.shape_string() + " is not a scalar");
  return t[0];
}

Var Tape::constant(Tensor value) { return push(as_matrix(std::move(value)), false, nullptr, "constant"); }

Var Tape::param(ParamStore& store, const std::string& name, Grad mode) {
  if (mode == Grad::kFreeze) return param(static_cast<const ParamStore&>(store), name);
  const auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = tracked_.find(key); it != tracked_.end()) return Var{it->second};
  Var v = push_param(store.value(name), true);
  nodes_[v.id].store = &store;
  nodes_[v.id].param_name = name;
  tracked_.emplace(key, v.id);
  return v;
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  const auto key = std::make_pair(&store, name);
  if (auto it = frozen_.find(key); it != frozen_.end()) return Var{it->second};
  Var v = push_param(store.value(name), false);
  frozen_.emplace(key, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + A.shape_string() + " x " + B.shape_string());
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::matrix(m, n);
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* pc = C.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return push(std::move(C), needs(a) || needs(b),
              [a, b](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                const Tensor& B = t.value(b);
                const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
                const double* pa = A.data().data();
                const double* pb = B.data().data();
                const double* pg = g.data().data();
                if (t.needs(a)) {
                  Tensor dA = Tensor::matrix(m, k);
                  double* pd = dA.data().data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double* gi = pg + i * n;
                      const double* bp = pb + p * n;
                      double s = 0.0;
                      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
                      pd[i * k + p] = s;
                    }
                  t.accumulate(a.id, dA);
                }
                if (t.needs(b)) {
                  Tensor dB = Tensor::matrix(k, n);
                  double* pd = dB.data().data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double aip = pa[i * k + p];
                      if (aip == 0.0) continue;
                      const double* gi = pg + i * n;
                      double* dp = pd + p * n;
                      for (std::size_t j = 0; j < n; ++j) dp[j] += aip * gi[j];
                    }
                  t.accumulate(b.id, dB);
                }
              },
              "matmul");
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_broadcast(A, B, "add");
  Tensor C = A;
  for (std::size_t r = 0; r < C.rows(); ++r)
    for (std::size_t c = 0; c < C.cols(); ++c)
      C(r, c) += B(B.rows() == 1 ? 0 : r, B.cols() == 1 ? 0 : c);
  return push(std::move(C), needs(a) || needs(b),
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a.id, g);
                if (t.needs(b)) {
                  const Tensor& B = t.value(b);
                  t.accumulate(b.id, reduce_to(g, B.rows(), B.cols()));
                }
              },
              "add");
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_broadcast(A, B, "sub");
  Tensor C = A;
  for (std::size_t r = 0; r < C.rows(); ++r)
    for (std::size_t c = 0; c < C.cols(); ++c)
      C(r, c) -= B(B.rows() == 1 ? 0 : r, B.cols() == 1 ? 0 : c);
  return push(std::move(C), needs(a) || needs(b),
              [a, b](Tape& t, const Tensor& g) {
                t.accumulate(a.id, g);
                if (t.needs(b)) {
                  const Tensor& B = t.value(b);
                  Tensor neg = reduce_to(g, B.rows(), B.cols());
                  for (double& x : neg.data()) x = -x;
                  t.accumulate(b.id, neg);
                }
              },
              "sub");
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_broadcast(A, B, "mul");
  Tensor C = A;
  for (std::size_t r = 0; r < C.rows(); ++r)
    for (std::size_t c = 0; c < C.cols(); ++c)
      C(r, c) *= B(B.rows() == 1 ? 0 : r, B.cols() == 1 ? 0 : c);
  return push(std::move(C), needs(a) || needs(b),
              [a, b](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                const Tensor& B = t.value(b);
                auto bidx = [&B](std::size_t r, std::size_t c) {
                  return B(B.rows() == 1 ? 0 : r, B.cols() == 1 ? 0 : c);
                };
                if (t.needs(a)) {
                  Tensor dA = zeros_like(A);
                  for (std::size_t r = 0; r < A.rows(); ++r)
                    for (std::size_t c = 0; c < A.cols(); ++c) dA(r, c) = g(r, c) * bidx(r, c);
                  t.accumulate(a.id, dA);
                }
                if (t.needs(b)) {
                  Tensor full = zeros_like(A);
                  for (std::size_t r = 0; r < A.rows(); ++r)
                    for (std::size_t c = 0; c < A.cols(); ++c) full(r, c) = g(r, c) * A(r, c);
                  t.accumulate(b.id, reduce_to(full, B.rows(), B.cols()));
                }
              },
              "mul");
}

Var Tape::scale(Var a, double s) {
  Tensor C = value(a);
  for (double& x : C.data()) x *= s;
  return push(std::move(C), needs(a),
              [a, s](Tape& t, const Tensor& g) {
                Tensor d = g;
                for (double& x : d.data()) x *= s;
                t.accumulate(a.id, d);
              },
              "scale");
}

Var Tape::add_scalar(Var a, double s) {
  Tensor C = value(a);
  for (double& x : C.data()) x += s;
  return push(std::move(C), needs(a), [a](Tape& t, const Tensor& g) { t.accumulate(a.id, g); },
              "add_scalar");
}

Var Tape::sigmoid(Var a) {
  Tensor C = value(a);
  for (double& x : C.data()) x = ::econ::sigmoid(x);
  return push(std::move(C), needs(a),
              [a](Tape& t, const Tensor& g) {
                Tensor d = t.value(a);
                for (std::size_t i = 0; i < d.size(); ++i) {
                  const double s = ::econ::sigmoid(d[i]);
                  d[i] = g[i] * s * (1.0 - s);
                }
                t.accumulate(a.id, d);
              },
              "sigmoid");
}

Var Tape::relu(Var a) {
  Tensor C = value(a);
  for (double& x : C.data()) x = x > 0.0 ? x : 0.0;
  return push(std::move(C), needs(a),
              [a](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i)
                  if (!(A[i] > 0.0)) d[i] = 0.0;
                t.accumulate(a.id, d);
              },
              "relu");
}

Var Tape::square(Var a) {
  Tensor C = value(a);
  for (double& x : C.data()) x *= x;
  return push(std::move(C), needs(a),
              [a](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 2.0 * A[i];
                t.accumulate(a.id, d);
              },
              "square");
}

Var Tape::softmax_rows(Var a, double scale) {
  if (!(scale > 0.0)) throw std::domain_error("softmax_rows: scale must be > 0");
  const Tensor& A = value(a);
  if (A.cols() == 0) throw std::domain_error("softmax_rows: empty rows");
  Tensor S = A;
  for (std::size_t r = 0; r < S.rows(); ++r) {
    double hi = -INFINITY;
    for (std::size_t c = 0; c < S.cols(); ++c) hi = std::max(hi, S(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < S.cols(); ++c) {
      S(r, c) = std::exp(scale * (S(r, c) - hi));
      total += S(r, c);
    }
    for (std::size_t c = 0; c < S.cols(); ++c) S(r, c) /= total;
  }
  const std::size_t out_id = nodes_.size();
  return push(std::move(S), needs(a),
              [a, scale, out_id](Tape& t, const Tensor& g) {
                const Tensor& S = t.value(Var{out_id});
                Tensor d = zeros_like(S);
                for (std::size_t r = 0; r < S.rows(); ++r) {
                  double gs = 0.0;
                  for (std::size_t c = 0; c < S.cols(); ++c) gs += g(r, c) * S(r, c);
                  for (std::size_t c = 0; c < S.cols(); ++c) d(r, c) = scale * S(r, c) * (g(r, c) - gs);
                }
                t.accumulate(a.id, d);
              },
              "softmax_rows");
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) {
      throw ShapeError("concat_cols: operand " + value(p).shape_string() + " has " +
                       std::to_string(value(p).rows()) + " rows, expected " + std::to_string(rows));
    }
    cols += value(p).cols();
    req = req || needs(p);
  }
  Tensor C = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& P = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < P.cols(); ++c) C(r, off + c) = P(r, c);
    off += P.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(C), req,
              [ps](Tape& t, const Tensor& g) {
                std::size_t off = 0;
                for (Var p : ps) {
                  const std::size_t pc = t.value(p).cols();
                  if (t.needs(p)) {
                    Tensor d = Tensor::matrix(g.rows(), pc);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < pc; ++c) d(r, c) = g(r, off + c);
                    t.accumulate(p.id, d);
                  }
                  off += pc;
                }
              },
              "concat_cols");
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool req = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) {
      throw ShapeError("concat_rows: operand " + value(p).shape_string() + " has " +
                       std::to_string(value(p).cols()) + " cols, expected " + std::to_string(cols));
    }
    rows += value(p).rows();
    req = req || needs(p);
  }
  Tensor C = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& P = value(p);
    std::copy(P.data().begin(), P.data().end(), C.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
    off += P.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(C), req,
              [ps, cols](Tape& t, const Tensor& g) {
                std::size_t off = 0;
                for (Var p : ps) {
                  const std::size_t pr = t.value(p).rows();
                  if (t.needs(p)) {
                    Tensor d = Tensor::matrix(pr, cols);
                    const auto src = g.data().subspan(off * cols, pr * cols);
                    std::copy(src.begin(), src.end(), d.data().begin());
                    t.accumulate(p.id, d);
                  }
                  off += pr;
                }
              },
              "concat_rows");
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = value(a);
  if (begin >= end || end > A.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + A.shape_string());
  }
  Tensor C = Tensor::matrix(A.rows(), end - begin);
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) C(r, c - begin) = A(r, c);
  return push(std::move(C), needs(a),
              [a, begin, end](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                Tensor d = zeros_like(A);
                for (std::size_t r = 0; r < A.rows(); ++r)
                  for (std::size_t c = begin; c < end; ++c) d(r, c) = g(r, c - begin);
                t.accumulate(a.id, d);
              },
              "slice_cols");
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& A = value(a);
  if (begin >= end || end > A.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + A.shape_string());
  }
  Tensor C = Tensor::matrix(end - begin, A.cols());
  for (std::size_t r = begin; r < end; ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) C(r - begin, c) = A(r, c);
  return push(std::move(C), needs(a),
              [a, begin, end](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                Tensor d = zeros_like(A);
                for (std::size_t r = begin; r < end; ++r)
                  for (std::size_t c = 0; c < A.cols(); ++c) d(r, c) = g(r - begin, c);
                t.accumulate(a.id, d);
              },
              "slice_rows");
}

Var Tape::transpose(Var a) {
  const Tensor& A = value(a);
  Tensor C = Tensor::matrix(A.cols(), A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) C(c, r) = A(r, c);
  return push(std::move(C), needs(a),
              [a](Tape& t, const Tensor& g) {
                Tensor d = Tensor::matrix(g.cols(), g.rows());
                for (std::size_t r = 0; r < g.rows(); ++r)
                  for (std::size_t c = 0; c < g.cols(); ++c) d(c, r) = g(r, c);
                t.accumulate(a.id, d);
              },
              "transpose");
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double x : value(a).data()) s += x;
  return push(Tensor::scalar(s), needs(a),
              [a](Tape& t, const Tensor& g) {
                Tensor d = zeros_like(t.value(a));
                d.fill(g[0]);
                t.accumulate(a.id, d);
              },
              "sum");
}

Var Tape::mean_rows(Var a) {
  const Tensor& A = value(a);
  if (A.rows() == 0) throw ShapeError("mean_rows: no rows");
  Tensor C = Tensor::matrix(1, A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) C(0, c) += A(r, c);
  const double inv = 1.0 / static_cast<double>(A.rows());
  for (double& x : C.data()) x *= inv;
  return push(std::move(C), needs(a),
              [a, inv](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                Tensor d = zeros_like(A);
                for (std::size_t r = 0; r < A.rows(); ++r)
                  for (std::size_t c = 0; c < A.cols(); ++c) d(r, c) = g(0, c) * inv;
                t.accumulate(a.id, d);
              },
              "mean_rows");
}

Var Tape::cosine(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rows() != 1 || B.rows() != 1 || A.cols() != B.cols()) {
    throw ShapeError("cosine: operands " + A.shape_string() + " and " + B.shape_string() +
                     " must be equal-length row vectors");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    ab += A[i] * B[i];
    aa += A[i] * A[i];
    bb += B[i] * B[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    ++degenerate_cosines_;
    return push(Tensor::scalar(0.0), false, nullptr, "cosine");
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double cval = ab / (na * nb);
  return push(Tensor::scalar(cval), needs(a) || needs(b),
              [a, b, na, nb, cval](Tape& t, const Tensor& g) {
                const Tensor& A = t.value(a);
                const Tensor& B = t.value(b);
                const double go = g[0];
                if (t.needs(a)) {
                  Tensor d = zeros_like(A);
                  for (std::size_t i = 0; i < A.size(); ++i)
                    d[i] = go * (B[i] / (na * nb) - cval * A[i] / (na * na));
                  t.accumulate(a.id, d);
                }
                if (t.needs(b)) {
                  Tensor d = zeros_like(B);
                  for (std::size_t i = 0; i < B.size(); ++i)
                    d[i] = go * (A[i] / (na * nb) - cval * B[i] / (nb * nb));
                  t.accumulate(b.id, d);
                }
              },
              "cosine");
}

void Tape::backward(Var loss) {
  const Tensor& L = value(loss);
  if (L.size() != 1) {
    throw ContractViolation("backward: loss must be scalar, got " + L.shape_string());
  }
  if (!std::isfinite(L[0])) throw std::domain_error("backward: loss is not finite");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      const Tensor g = n.grad;
      n.backward(*this, g);
    }
  }
  for (auto& n : nodes_) {
    if (n.store == nullptr || n.grad.empty()) continue;
    Tensor& slot = n.store->grad(n.param_name);
    auto d = slot.data();
    auto s = n.grad.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

}  // namespace econ
