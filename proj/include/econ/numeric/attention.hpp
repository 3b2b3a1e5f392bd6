#pragma once

#include <random>
#include <string>

#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tape.hpp"

namespace econ {

// Projection weights of one multi-head attention block. The per-head
// matrices W_h^Q, W_h^K, W_h^V are stored side by side as column blocks of a
// single (in x model) matrix: head h owns columns [h*dk, (h+1)*dk).
struct AttentionWeights {
  Var wq;
  Var wk;
  Var wv;
  Var wo;
};

// Registers "<prefix>.wq", ".wk", ".wv" (in x model) and ".wo" (model x model).
void init_attention(ParamStore& store, const std::string& prefix, std::size_t in_dim, std::size_t model_dim,
                    std::mt19937_64& rng);

AttentionWeights bind_attention(Tape& tape, ParamStore& store, const std::string& prefix, Grad mode);
AttentionWeights bind_attention(Tape& tape, const ParamStore& store, const std::string& prefix);

// Concat(head_1..head_H) W^O with head_h = softmax(Q_h K_h^T / sqrt(dk)) V_h,
// Q = queries wq, K = keys wk, V = values wv. Rows are tokens; the result is
// (num queries x model dim).
Var multi_head_attention(Tape& tape, Var queries, Var keys, Var values, const AttentionWeights& w,
                         std::size_t heads);

}  // namespace econ
