#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "econ/numeric/param_store.hpp"
#include "econ/numeric/tape.hpp"

namespace econ {

// The agent's action: decoding temperature and repetition penalty.
struct PromptEmbedding {
  double temperature = 1.0;
  double repetition_penalty = 0.5;

  bool operator==(const PromptEmbedding&) const = default;
};

struct ActionBounds {
  double t_min = 0.1;
  double t_max = 2.0;
  double p_min = 0.1;
  double p_max = 0.9;

  void validate() const;
  bool contains(const PromptEmbedding& e) const;
};

// Local observation [e_t, e_s, b_prior].
struct Observation {
  std::vector<double> task;
  std::vector<double> strategy;
  std::vector<double> prior_belief;

  std::vector<double> flat() const;
  bool operator==(const Observation&) const = default;
};

struct TrajectoryStep {
  PromptEmbedding action;
  Observation observation;

  bool operator==(const TrajectoryStep&) const = default;
};

// Sliding window of the most recent (action, observation) pairs, oldest
// first. Pushing past the window evicts the oldest pair.
class Trajectory {
 public:
  explicit Trajectory(std::size_t window = 8);

  void push(TrajectoryStep step);
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  std::size_t window() const { return window_; }
  const std::deque<TrajectoryStep>& steps() const { return steps_; }

  bool operator==(const Trajectory&) const = default;

 private:
  std::size_t window_;
  std::deque<TrajectoryStep> steps_;
};

struct Transition {
  Trajectory trajectory;
  Observation observation;
  PromptEmbedding action;
  double reward = 0.0;
  Trajectory next_trajectory;
  Observation next_observation;
  bool terminal = false;
};

struct BeliefNetConfig {
  // Width of the task and strategy encodings inside an observation.
  std::size_t embed_dim = 256;
  std::size_t belief_dim = 128;
  // Trajectory summary width and belief MLP hidden width.
  std::size_t hidden_dim = 256;
  // Hidden width of the local Q head.
  std::size_t q_hidden = 256;
  std::size_t window = 8;
  // Resolution K of the K x K action grid used for the bootstrap max.
  std::size_t grid = 5;
  ActionBounds bounds;

  void validate() const;
  std::size_t observation_dim() const { return 2 * embed_dim + belief_dim; }
  std::size_t pair_dim() const { return 2 + observation_dim(); }
};

struct GridMax {
  double value = 0.0;
  PromptEmbedding argmax;
};

// Per-agent belief network B_i. Live parameters:
//
//   traj.W, traj.b, traj.pos    trajectory encoder
//   mlp.W1, mlp.b1, mlp.W2, mlp.b2
//   head.W_T, head.b_T, head.W_p, head.b_p
//   q.W1, q.b1, q.W2, q.b2      local Q head phi_i
//
// The target store holds a soft-updated copy of the q.* parameters.
class BeliefNet {
 public:
  BeliefNet(const BeliefNetConfig& cfg, std::mt19937_64& rng);

  const BeliefNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  ParamStore& target() { return target_; }
  const ParamStore& target() const { return target_; }

  // Graph builders. `mode` selects whether live parameters are tracked.
  Var encode_trajectory(Tape& tape, const Trajectory& traj, Grad mode);
  Var belief(Tape& tape, const Trajectory& traj, const Observation& obs, Grad mode);
  // 1 x 2 row [T, p] from a 1 x d_b belief.
  Var embed(Tape& tape, Var belief, Grad mode);
  // Q(b, e) for each row of `embeddings` (rows x 2), sharing one belief.
  Var q_head(Tape& tape, Var belief, Var embeddings, Grad mode);
  Var q_head_target(Tape& tape, Var belief, Var embeddings) const;

  // Parameter-pure conveniences.
  std::vector<double> encode_trajectory(const Trajectory& traj) const;
  std::vector<double> compute_belief(const Trajectory& traj, const Observation& obs) const;
  PromptEmbedding embed_prompt(std::span<const double> belief) const;
  double local_q(std::span<const double> belief, const PromptEmbedding& e) const;
  // Max of the target Q head over the K x K action grid.
  GridMax max_target_q(std::span<const double> belief) const;

  // Mean squared TD residual over the batch. The current Q is evaluated at
  // the embedding the live heads produce for the stored state, so the
  // heads and the belief path share the gradient; the bootstrap uses the
  // target Q head and never receives gradient.
  Var td_loss(Tape& tape, std::span<const Transition> batch, double gamma);
  // r + gamma * max_target_q(b') per transition (r alone when terminal).
  // The belief b' is read from the live network but treated as a constant.
  std::vector<double> td_targets(std::span<const Transition> batch, double gamma) const;
  // Same loss against precomputed targets.
  Var td_loss(Tape& tape, std::span<const Transition> batch, std::span<const double> targets);
  // Builds the loss, runs backward and returns its value.
  double td_loss_backward(std::span<const Transition> batch, double gamma);
  double td_loss_value(std::span<const Transition> batch, double gamma) const;

  void soft_update_target(double tau);

  static std::vector<std::string> q_head_names();

 private:
  // Binds a live parameter; kTrack is only ever passed from non-const
  // entry points.
  Var bind(Tape& tape, const std::string& name, Grad mode) const;
  Var encode_impl(Tape& tape, const Trajectory& traj, Grad mode) const;
  Var belief_impl(Tape& tape, const Trajectory& traj, const Observation& obs, Grad mode) const;
  Var embed_impl(Tape& tape, Var belief, Grad mode) const;
  Var q_impl(Tape& tape, const ParamStore& store, Var belief, Var embeddings, Grad mode) const;
  Var td_impl(Tape& tape, std::span<const Transition> batch, std::span<const double> targets, Grad mode) const;

  BeliefNetConfig cfg_;
  ParamStore params_;
  ParamStore target_;
};

// Bound map from a pre-activation to [lo, hi] through a sigmoid.
double bounded(double pre_activation, double lo, double hi);

// Rows [T, p], one per embedding.
Tensor embedding_rows(std::span<const PromptEmbedding> embeddings);

// K x K uniform grid over the action box, row-major in (T, p).
std::vector<PromptEmbedding> action_grid(const ActionBounds& bounds, std::size_t k);

// -sum_i sum_k q_ik log q_ik with q_i = softmax(b_i).
double belief_entropy(std::span<const std::vector<double>> beliefs);

}  // namespace econ
