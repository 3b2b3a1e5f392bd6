#include "econ/numeric/attention.hpp"

#include <cmath>
#include <vector>

namespace econ {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("multi_head_attention: " + what);
}

}  // namespace

void init_attention(ParamStore& store, const std::string& prefix, std::size_t in_dim, std::size_t model_dim,
                    std::mt19937_64& rng) {
  store.add_uniform(prefix + ".wq", in_dim, model_dim, in_dim, rng);
  store.add_uniform(prefix + ".wk", in_dim, model_dim, in_dim, rng);
  store.add_uniform(prefix + ".wv", in_dim, model_dim, in_dim, rng);
  store.add_uniform(prefix + ".wo", model_dim, model_dim, model_dim, rng);
}

AttentionWeights bind_attention(Tape& tape, ParamStore& store, const std::string& prefix, Grad mode) {
  return {tape.param(store, prefix + ".wq", mode), tape.param(store, prefix + ".wk", mode),
          tape.param(store, prefix + ".wv", mode), tape.param(store, prefix + ".wo", mode)};
}

AttentionWeights bind_attention(Tape& tape, const ParamStore& store, const std::string& prefix) {
  return {tape.param(store, prefix + ".wq"), tape.param(store, prefix + ".wk"), tape.param(store, prefix + ".wv"),
          tape.param(store, prefix + ".wo")};
}

Var multi_head_attention(Tape& tape, Var queries, Var keys, Var values, const AttentionWeights& w,
                         std::size_t heads) {
  const Tensor& q_in = tape.value(queries);
  const Tensor& k_in = tape.value(keys);
  const Tensor& v_in = tape.value(values);
  const Tensor& wq = tape.value(w.wq);
  const Tensor& wk = tape.value(w.wk);
  const Tensor& wv = tape.value(w.wv);
  const Tensor& wo = tape.value(w.wo);

  require(heads > 0, "heads must be positive");
  require(q_in.cols() == wq.rows(), "queries " + q_in.shape_string() + " do not match W^Q " + wq.shape_string());
  require(k_in.cols() == wk.rows(), "keys " + k_in.shape_string() + " do not match W^K " + wk.shape_string());
  require(v_in.cols() == wv.rows(), "values " + v_in.shape_string() + " do not match W^V " + wv.shape_string());
  require(k_in.rows() == v_in.rows(),
          "keys " + k_in.shape_string() + " and values " + v_in.shape_string() + " differ in length");
  require(k_in.rows() > 0, "keys are empty");
  const std::size_t model = wq.cols();
  require(wk.cols() == model && wv.cols() == model, "W^K/W^V width differs from W^Q " + wq.shape_string());
  require(wo.rows() == model, "W^O " + wo.shape_string() + " does not take model dim " + std::to_string(model));
  require(model % heads == 0,
          "model dim " + std::to_string(model) + " not divisible by " + std::to_string(heads) + " heads");

  const std::size_t dk = model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = tape.matmul(queries, w.wq);
  Var k = tape.matmul(keys, w.wk);
  Var v = tape.matmul(values, w.wv);

  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dk, e = b + dk;
    Var qh = heads == 1 ? q : tape.slice_cols(q, b, e);
    Var kh = heads == 1 ? k : tape.slice_cols(k, b, e);
    Var vh = heads == 1 ? v : tape.slice_cols(v, b, e);
    Var scores = tape.matmul(qh, tape.transpose(kh));
    Var weights = tape.softmax_rows(scores, scale);
    outs.push_back(tape.matmul(weights, vh));
  }
  Var concat = heads == 1 ? outs[0] : tape.concat_cols(outs);
  return tape.matmul(concat, w.wo);
}

}  // namespace econ
