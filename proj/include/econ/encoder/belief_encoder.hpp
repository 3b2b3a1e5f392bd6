#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tape.hpp"

namespace econ {

struct EncoderConfig {
  std::size_t belief_dim = 128;
  std::size_t model_dim = 256;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_dim = 1024;

  void validate() const;
};

// Shared encoder f_e: `blocks` layers of multi-head self-attention over the
// N belief slots, each followed by a ReLU feed-forward layer with a residual
// connection, then mean-pooled over slots into one group vector E.
//
// Parameters per block k: "block<k>.att.{wq,wk,wv,wo}", "block<k>.ff.{W1,b1,W2,b2}".
class BeliefEncoder {
 public:
  BeliefEncoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  const EncoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // beliefs: N x d_b. Returns 1 x model_dim.
  Var encode(Tape& tape, Var beliefs, Grad mode);
  Var encode(Tape& tape, Var beliefs) const;

  std::vector<double> encode_group(std::span<const std::vector<double>> beliefs) const;

 private:
  Var encode_impl(Tape& tape, Var beliefs, Grad mode) const;

  EncoderConfig cfg_;
  ParamStore params_;
};

// Stacks equal-length vectors as the rows of a matrix.
Tensor stack_rows(std::span<const std::vector<double>> rows);

// L_e = total_td + lambda_e * sum(local_tds). Negative inputs violate the
// contract.
double encoder_loss(double total_td, std::span<const double> local_tds, double lambda_e);

}  // namespace econ
