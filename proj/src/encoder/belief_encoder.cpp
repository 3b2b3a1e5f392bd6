#include "econ/encoder/belief_encoder.hpp"

#include <stdexcept>
#include <string>

#include "econ/numeric/attention.hpp"

namespace econ {

void EncoderConfig::validate() const {
  if (belief_dim == 0 || model_dim == 0 || ff_dim == 0) throw std::invalid_argument("encoder: dimensions must be positive");
  if (heads == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("encoder: " + std::to_string(heads) + " heads do not divide model dim " +
                                std::to_string(model_dim));
  }
  if (blocks == 0) throw std::invalid_argument("encoder: at least one block required");
}

BeliefEncoder::BeliefEncoder(const EncoderConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t k = 0; k < cfg_.blocks; ++k) {
    const std::string p = "block" + std::to_string(k);
    const std::size_t in = k == 0 ? cfg_.belief_dim : cfg_.model_dim;
    init_attention(params_, p + ".att", in, cfg_.model_dim, rng);
    params_.add_uniform(p + ".ff.W1", cfg_.model_dim, cfg_.ff_dim, cfg_.model_dim, rng);
    params_.add_uniform(p + ".ff.b1", 1, cfg_.ff_dim, cfg_.model_dim, rng);
    params_.add_uniform(p + ".ff.W2", cfg_.ff_dim, cfg_.model_dim, cfg_.ff_dim, rng);
    params_.add_uniform(p + ".ff.b2", 1, cfg_.model_dim, cfg_.ff_dim, rng);
  }
}

Var BeliefEncoder::encode_impl(Tape& tape, Var beliefs, Grad mode) const {
  const Tensor& b = tape.value(beliefs);
  if (b.rows() == 0) throw std::invalid_argument("encode_group: no beliefs");
  if (b.cols() != cfg_.belief_dim) {
    throw ShapeError("encode_group: beliefs " + b.shape_string() + " do not have width " +
                     std::to_string(cfg_.belief_dim));
  }
  auto bind = [&](const std::string& name) {
    if (mode == Grad::kTrack) return tape.param(const_cast<ParamStore&>(params_), name, Grad::kTrack);
    return tape.param(params_, name);
  };
  Var x = beliefs;
  for (std::size_t k = 0; k < cfg_.blocks; ++k) {
    const std::string p = "block" + std::to_string(k);
    AttentionWeights w{bind(p + ".att.wq"), bind(p + ".att.wk"), bind(p + ".att.wv"), bind(p + ".att.wo")};
    Var att = multi_head_attention(tape, x, x, x, w, cfg_.heads);
    // The first block changes width, so it has no attention residual.
    x = k == 0 ? att : tape.add(x, att);
    Var h = tape.relu(tape.add(tape.matmul(x, bind(p + ".ff.W1")), bind(p + ".ff.b1")));
    x = tape.add(x, tape.add(tape.matmul(h, bind(p + ".ff.W2")), bind(p + ".ff.b2")));
  }
  return tape.mean_rows(x);
}

Var BeliefEncoder::encode(Tape& tape, Var beliefs, Grad mode) { return encode_impl(tape, beliefs, mode); }

Var BeliefEncoder::encode(Tape& tape, Var beliefs) const { return encode_impl(tape, beliefs, Grad::kFreeze); }

std::vector<double> BeliefEncoder::encode_group(std::span<const std::vector<double>> beliefs) const {
  if (beliefs.empty()) throw std::invalid_argument("encode_group: no beliefs");
  Tape tape;
  return tape.value(encode(tape, tape.constant(stack_rows(beliefs)))).values();
}

Tensor stack_rows(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  Tensor m = Tensor::matrix(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ShapeError("stack_rows: ragged rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

double encoder_loss(double total_td, std::span<const double> local_tds, double lambda_e) {
  if (total_td < 0.0) throw ContractViolation("encoder_loss: negative total TD loss");
  if (lambda_e < 0.0) throw ContractViolation("encoder_loss: negative lambda_e");
  double sum = 0.0;
  for (double l : local_tds) {
    if (l < 0.0) throw ContractViolation("encoder_loss: negative local TD loss");
    sum += l;
  }
  return total_td + lambda_e * sum;
}

}  // namespace econ
