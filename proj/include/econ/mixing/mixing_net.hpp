#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "econ/belief/belief_net.hpp"
#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tape.hpp"

namespace econ {

struct MixingConfig {
  std::size_t agents = 3;
  std::size_t heads = 4;
  // Width of the self-attended embedding vectors w_i.
  std::size_t attn_dim = 64;
  // Width of the group representation E.
  std::size_t group_dim = 256;
  // Width of F_i; must match the text-embedding width for the SD loss.
  std::size_t feature_dim = 256;
  // Width of the Q-path hidden layer.
  std::size_t hidden = 256;
  // Ablation switch: when false F_i is built from w_i alone.
  bool concat_group = true;

  void validate() const;
};

// Centralized mixing network.
//
//   w    = MHA(e_1..e_N)                           "att.{wq,wk,wv,wo}"
//   F_i  = ReLU([w_i; E] fuse.W + fuse.b)
//   a    = softmax_i(F_i . gate.u)
//   h    = ReLU((N a * Q) qpath.W1 + Fbar hyper.V1 + qpath.c1)
//   Qtot = h qpath.W2 + Fbar hyper.V2 + qpath.c2
//
// with Fbar the mean of F_i. qpath.W1 and qpath.W2 are kept non-negative
// and the gates a_i do not depend on Q, so Qtot is non-decreasing in every
// Q_i.
class MixingNet {
 public:
  MixingNet(const MixingConfig& cfg, std::mt19937_64& rng);

  const MixingConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  ParamStore& target() { return target_; }
  const ParamStore& target() const { return target_; }

  // embeddings: N x 2 -> N x attn_dim.
  Var self_attend(Tape& tape, Var embeddings, Grad mode);
  // w: N x attn_dim, group: 1 x group_dim -> N x feature_dim.
  Var fuse(Tape& tape, Var w, Var group, Grad mode);
  // local_qs: 1 x N, features: N x feature_dim -> 1 x 1.
  Var q_tot(Tape& tape, Var local_qs, Var features, Grad mode);

  struct Forward {
    Var features;
    Var q_tot;
  };
  Forward forward(Tape& tape, Var local_qs, Var embeddings, Var group, Grad mode);
  // Same network under the target parameters; never tracked.
  Forward forward_target(Tape& tape, Var local_qs, Var embeddings, Var group) const;

  double q_tot_value(std::span<const double> local_qs, std::span<const PromptEmbedding> embeddings,
                     std::span<const double> group) const;
  std::vector<std::vector<double>> features_value(std::span<const PromptEmbedding> embeddings,
                                                  std::span<const double> group) const;

  // The Q-independent part of the network for one state, so Qtot can be
  // evaluated cheaply for many local Q vectors.
  struct Context {
    std::vector<double> scaled_gates;  // N * a_i
    std::vector<double> bias1;         // Fbar V1 + c1
    double bias2 = 0.0;                // Fbar V2 + c2
  };
  Context context(std::span<const PromptEmbedding> embeddings, std::span<const double> group) const;
  double q_tot_from(const Context& ctx, std::span<const double> local_qs) const;

  void soft_update_target(double tau);

  static bool is_q_path_weight(const std::string& name);

 private:
  Var bind(Tape& tape, const ParamStore& store, const std::string& name, Grad mode) const;
  Var attend_impl(Tape& tape, const ParamStore& store, Var embeddings, Grad mode) const;
  Var fuse_impl(Tape& tape, const ParamStore& store, Var w, Var group, Grad mode) const;
  Var q_tot_impl(Tape& tape, const ParamStore& store, Var local_qs, Var features, Grad mode) const;
  Forward forward_impl(Tape& tape, const ParamStore& store, Var local_qs, Var embeddings, Var group,
                       Grad mode) const;

  MixingConfig cfg_;
  ParamStore params_;
  ParamStore target_;
};

// Clamps every Q-path weight to max(0, w); returns the number of entries
// changed.
std::size_t project_nonnegative(ParamStore& params);

struct MonotonicityReport {
  double min_derivative = 0.0;
  std::size_t samples = 0;
  std::size_t violations = 0;
  bool passed() const { return violations == 0; }
};

// Forward-difference estimate of dQtot/dQ_i for every agent at n_samples
// random states (Q_i in [-2, 2], embeddings in the action box, E in
// [-1, 1]). A derivative below -tolerance counts as a violation.
MonotonicityReport check_monotonicity(const MixingNet& net, const ActionBounds& bounds, std::size_t n_samples,
                                      std::mt19937_64& rng, double delta = 1e-3, double tolerance = 1e-8);

// lambda_b * sum_i (1 - cos(F_i, C))^2. A zero C makes every cosine 0.
double sd_loss(std::span<const std::vector<double>> features, std::span<const double> final_output,
               double lambda_b);
Var sd_loss(Tape& tape, Var features, std::span<const double> final_output, double lambda_b);

// One joint step from the replay buffer, already reduced to what the
// mixing loss reads.
struct MixingSample {
  std::vector<double> local_q;
  std::vector<PromptEmbedding> embeddings;
  std::vector<double> group;
  double r_tot = 0.0;
  // Per-agent grid maxima of the target local Q heads and their arguments.
  std::vector<double> next_max_q;
  std::vector<PromptEmbedding> next_embeddings;
  std::vector<double> next_group;
  std::vector<double> final_output;
  bool terminal = false;
};

struct MixingLossConfig {
  double gamma = 0.99;
  double lambda_m = 0.1;
  double lambda_b = 0.1;
};

struct MixingLoss {
  Var total;
  Var td;
  Var sd;
  Var consistency;
};

// Batch means of the three terms of L_mix. `groups`, when non-empty, holds
// one tape variable per sample replacing sample.group (this is how the
// encoder receives gradient from L_TD^tot).
MixingLoss mixing_loss(Tape& tape, MixingNet& net, std::span<const MixingSample> batch,
                       const MixingLossConfig& cfg, Grad mode, std::span<const Var> groups = {});

// Bootstrap targets r_tot + gamma * Qtot'(next) (r_tot alone when terminal).
std::vector<double> mixing_targets(const MixingNet& net, std::span<const MixingSample> batch, double gamma);

}  // namespace econ
