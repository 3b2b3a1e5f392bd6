#include "econ/belief/belief_net.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "econ/numeric/math.hpp"

namespace econ {
namespace {

Tensor row_of(std::span<const double> v) { return Tensor::row(std::vector<double>(v.begin(), v.end())); }

}  // namespace

void ActionBounds::validate() const {
  if (!(t_min < t_max)) throw std::invalid_argument("action bounds: t_min must be below t_max");
  if (!(p_min < p_max)) throw std::invalid_argument("action bounds: p_min must be below p_max");
}

bool ActionBounds::contains(const PromptEmbedding& e) const {
  return e.temperature >= t_min && e.temperature <= t_max && e.repetition_penalty >= p_min &&
         e.repetition_penalty <= p_max;
}

std::vector<double> Observation::flat() const {
  std::vector<double> out;
  out.reserve(task.size() + strategy.size() + prior_belief.size());
  out.insert(out.end(), task.begin(), task.end());
  out.insert(out.end(), strategy.begin(), strategy.end());
  out.insert(out.end(), prior_belief.begin(), prior_belief.end());
  return out;
}

Trajectory::Trajectory(std::size_t window) : window_(window) {
  if (window == 0) throw std::invalid_argument("trajectory window must be at least 1");
}

void Trajectory::push(TrajectoryStep step) {
  steps_.push_back(std::move(step));
  while (steps_.size() > window_) steps_.pop_front();
}

void BeliefNetConfig::validate() const {
  if (embed_dim == 0 || belief_dim == 0 || hidden_dim == 0 || q_hidden == 0) {
    throw std::invalid_argument("belief net: dimensions must be positive");
  }
  if (window == 0) throw std::invalid_argument("belief net: window must be at least 1");
  if (grid < 2) throw std::invalid_argument("belief net: grid K must be at least 2");
  bounds.validate();
}

BeliefNet::BeliefNet(const BeliefNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t pair = cfg_.pair_dim();
  const std::size_t h = cfg_.hidden_dim;
  const std::size_t mlp_in = h + cfg_.observation_dim();
  const std::size_t q_in = cfg_.belief_dim + 2;

  params_.add_uniform("traj.W", pair, h, pair, rng);
  params_.add_uniform("traj.b", 1, h, pair, rng);
  params_.add("traj.pos", Tensor::matrix(1, cfg_.window, 1.0));
  params_.add_uniform("mlp.W1", mlp_in, h, mlp_in, rng);
  params_.add_uniform("mlp.b1", 1, h, mlp_in, rng);
  params_.add_uniform("mlp.W2", h, cfg_.belief_dim, h, rng);
  params_.add_uniform("mlp.b2", 1, cfg_.belief_dim, h, rng);
  params_.add_uniform("head.W_T", cfg_.belief_dim, 1, cfg_.belief_dim, rng);
  params_.add("head.b_T", Tensor::matrix(1, 1));
  params_.add_uniform("head.W_p", cfg_.belief_dim, 1, cfg_.belief_dim, rng);
  params_.add("head.b_p", Tensor::matrix(1, 1));
  params_.add_uniform("q.W1", q_in, cfg_.q_hidden, q_in, rng);
  params_.add_uniform("q.b1", 1, cfg_.q_hidden, q_in, rng);
  params_.add_uniform("q.W2", cfg_.q_hidden, 1, cfg_.q_hidden, rng);
  params_.add("q.b2", Tensor::matrix(1, 1));

  target_ = clone_subset(params_, q_head_names());
}

std::vector<std::string> BeliefNet::q_head_names() { return {"q.W1", "q.b1", "q.W2", "q.b2"}; }

Var BeliefNet::bind(Tape& tape, const std::string& name, Grad mode) const {
  if (mode == Grad::kTrack) return tape.param(const_cast<ParamStore&>(params_), name, Grad::kTrack);
  return tape.param(params_, name);
}

Var BeliefNet::encode_impl(Tape& tape, const Trajectory& traj, Grad mode) const {
  if (traj.size() > cfg_.window) {
    throw std::invalid_argument("encode_trajectory: trajectory longer than window " + std::to_string(cfg_.window));
  }
  if (traj.empty()) return tape.constant(Tensor::matrix(1, cfg_.hidden_dim));

  // Most recent pair first, so position k always means "k steps back".
  const std::size_t n = traj.size();
  Tensor pairs = Tensor::matrix(n, cfg_.pair_dim());
  for (std::size_t k = 0; k < n; ++k) {
    const TrajectoryStep& s = traj.steps()[n - 1 - k];
    const std::vector<double> o = s.observation.flat();
    if (o.size() != cfg_.observation_dim()) {
      throw ShapeError("encode_trajectory: observation of length " + std::to_string(o.size()) + ", expected " +
                       std::to_string(cfg_.observation_dim()));
    }
    pairs(k, 0) = s.action.temperature;
    pairs(k, 1) = s.action.repetition_penalty;
    for (std::size_t j = 0; j < o.size(); ++j) pairs(k, 2 + j) = o[j];
  }
  Var projected = tape.add(tape.matmul(tape.constant(std::move(pairs)), bind(tape, "traj.W", mode)),
                           bind(tape, "traj.b", mode));
  Var pos = tape.slice_cols(bind(tape, "traj.pos", mode), 0, n);
  return tape.scale(tape.matmul(pos, projected), 1.0 / static_cast<double>(n));
}

Var BeliefNet::belief_impl(Tape& tape, const Trajectory& traj, const Observation& obs, Grad mode) const {
  const std::vector<double> o = obs.flat();
  if (obs.task.size() != cfg_.embed_dim || obs.strategy.size() != cfg_.embed_dim ||
      obs.prior_belief.size() != cfg_.belief_dim) {
    throw ShapeError("compute_belief: observation parts (" + std::to_string(obs.task.size()) + ", " +
                     std::to_string(obs.strategy.size()) + ", " + std::to_string(obs.prior_belief.size()) +
                     ") do not match (" + std::to_string(cfg_.embed_dim) + ", " + std::to_string(cfg_.embed_dim) +
                     ", " + std::to_string(cfg_.belief_dim) + ")");
  }
  Var summary = encode_impl(tape, traj, mode);
  Var x = tape.concat_cols(std::vector<Var>{summary, tape.constant(row_of(o))});
  Var h = tape.relu(tape.add(tape.matmul(x, bind(tape, "mlp.W1", mode)), bind(tape, "mlp.b1", mode)));
  return tape.add(tape.matmul(h, bind(tape, "mlp.W2", mode)), bind(tape, "mlp.b2", mode));
}

Var BeliefNet::embed_impl(Tape& tape, Var belief, Grad mode) const {
  const ActionBounds& b = cfg_.bounds;
  Var pre_t = tape.add(tape.matmul(belief, bind(tape, "head.W_T", mode)), bind(tape, "head.b_T", mode));
  Var pre_p = tape.add(tape.matmul(belief, bind(tape, "head.W_p", mode)), bind(tape, "head.b_p", mode));
  Var t = tape.add_scalar(tape.scale(tape.sigmoid(pre_t), b.t_max - b.t_min), b.t_min);
  Var p = tape.add_scalar(tape.scale(tape.sigmoid(pre_p), b.p_max - b.p_min), b.p_min);
  return tape.concat_cols(std::vector<Var>{t, p});
}

Var BeliefNet::q_impl(Tape& tape, const ParamStore& store, Var belief, Var embeddings, Grad mode) const {
  const bool live = &store == &params_;
  auto p = [&](const std::string& name) { return live ? bind(tape, name, mode) : tape.param(store, name); };
  const std::size_t db = cfg_.belief_dim;
  if (tape.value(belief).cols() != db || tape.value(embeddings).cols() != 2) {
    throw ShapeError("local_q: belief " + tape.value(belief).shape_string() + " / embeddings " +
                     tape.value(embeddings).shape_string());
  }
  // [b; e] W1 split into its belief and action row blocks so one belief can
  // be broadcast against many candidate embeddings.
  Var w1 = p("q.W1");
  Var from_e = tape.matmul(embeddings, tape.slice_rows(w1, db, db + 2));
  Var from_b = tape.matmul(belief, tape.slice_rows(w1, 0, db));
  Var h = tape.relu(tape.add(tape.add(from_e, from_b), p("q.b1")));
  return tape.add(tape.matmul(h, p("q.W2")), p("q.b2"));
}

Var BeliefNet::encode_trajectory(Tape& tape, const Trajectory& traj, Grad mode) {
  return encode_impl(tape, traj, mode);
}

Var BeliefNet::belief(Tape& tape, const Trajectory& traj, const Observation& obs, Grad mode) {
  return belief_impl(tape, traj, obs, mode);
}

Var BeliefNet::embed(Tape& tape, Var belief, Grad mode) { return embed_impl(tape, belief, mode); }

Var BeliefNet::q_head(Tape& tape, Var belief, Var embeddings, Grad mode) {
  return q_impl(tape, params_, belief, embeddings, mode);
}

Var BeliefNet::q_head_target(Tape& tape, Var belief, Var embeddings) const {
  return q_impl(tape, target_, belief, embeddings, Grad::kFreeze);
}

std::vector<double> BeliefNet::encode_trajectory(const Trajectory& traj) const {
  Tape tape;
  return tape.value(encode_impl(tape, traj, Grad::kFreeze)).values();
}

std::vector<double> BeliefNet::compute_belief(const Trajectory& traj, const Observation& obs) const {
  Tape tape;
  return tape.value(belief_impl(tape, traj, obs, Grad::kFreeze)).values();
}

PromptEmbedding BeliefNet::embed_prompt(std::span<const double> belief) const {
  Tape tape;
  const Tensor& e = tape.value(embed_impl(tape, tape.constant(row_of(belief)), Grad::kFreeze));
  return {e[0], e[1]};
}

double BeliefNet::local_q(std::span<const double> belief, const PromptEmbedding& e) const {
  Tape tape;
  const PromptEmbedding one[] = {e};
  return tape.scalar(
      q_impl(tape, params_, tape.constant(row_of(belief)), tape.constant(embedding_rows(one)), Grad::kFreeze));
}

GridMax BeliefNet::max_target_q(std::span<const double> belief) const {
  const std::vector<PromptEmbedding> grid = action_grid(cfg_.bounds, cfg_.grid);
  Tape tape;
  const Tensor& q =
      tape.value(q_impl(tape, target_, tape.constant(row_of(belief)), tape.constant(embedding_rows(grid)),
                        Grad::kFreeze));
  GridMax best{q[0], grid[0]};
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (q[i] > best.value) best = {q[i], grid[i]};
  }
  return best;
}

std::vector<double> BeliefNet::td_targets(std::span<const Transition> batch, double gamma) const {
  if (batch.empty()) throw std::invalid_argument("td_loss_local: empty batch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("td_loss_local: gamma must lie in [0, 1)");
  std::vector<double> y;
  y.reserve(batch.size());
  for (const Transition& tr : batch) {
    double v = tr.reward;
    if (!tr.terminal) v += gamma * max_target_q(compute_belief(tr.next_trajectory, tr.next_observation)).value;
    y.push_back(v);
  }
  return y;
}

Var BeliefNet::td_impl(Tape& tape, std::span<const Transition> batch, std::span<const double> targets,
                       Grad mode) const {
  if (batch.empty()) throw std::invalid_argument("td_loss_local: empty batch");
  if (targets.size() != batch.size()) throw std::invalid_argument("td_loss_local: one target per transition");
  Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var b = belief_impl(tape, batch[i].trajectory, batch[i].observation, mode);
    Var q = q_impl(tape, params_, b, embed_impl(tape, b, mode), mode);
    Var sq = tape.square(tape.add_scalar(q, -targets[i]));
    total = total.valid() ? tape.add(total, sq) : sq;
  }
  return tape.scale(total, 1.0 / static_cast<double>(batch.size()));
}

Var BeliefNet::td_loss(Tape& tape, std::span<const Transition> batch, double gamma) {
  return td_impl(tape, batch, td_targets(batch, gamma), Grad::kTrack);
}

Var BeliefNet::td_loss(Tape& tape, std::span<const Transition> batch, std::span<const double> targets) {
  return td_impl(tape, batch, targets, Grad::kTrack);
}

double BeliefNet::td_loss_backward(std::span<const Transition> batch, double gamma) {
  Tape tape;
  Var loss = td_loss(tape, batch, gamma);
  tape.backward(loss);
  return tape.scalar(loss);
}

double BeliefNet::td_loss_value(std::span<const Transition> batch, double gamma) const {
  Tape tape;
  return tape.scalar(td_impl(tape, batch, td_targets(batch, gamma), Grad::kFreeze));
}

void BeliefNet::soft_update_target(double tau) { soft_update(params_, target_, tau); }

Tensor embedding_rows(std::span<const PromptEmbedding> embeddings) {
  Tensor m = Tensor::matrix(embeddings.size(), 2);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    m(i, 0) = embeddings[i].temperature;
    m(i, 1) = embeddings[i].repetition_penalty;
  }
  return m;
}

double bounded(double pre_activation, double lo, double hi) { return lo + (hi - lo) * sigmoid(pre_activation); }

std::vector<PromptEmbedding> action_grid(const ActionBounds& bounds, std::size_t k) {
  if (k < 2) throw std::invalid_argument("action_grid: K must be at least 2");
  std::vector<PromptEmbedding> grid;
  grid.reserve(k * k);
  const double dk = static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) {
    const double t = bounds.t_min + (bounds.t_max - bounds.t_min) * static_cast<double>(i) / dk;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = bounds.p_min + (bounds.p_max - bounds.p_min) * static_cast<double>(j) / dk;
      grid.push_back({t, p});
    }
  }
  return grid;
}

double belief_entropy(std::span<const std::vector<double>> beliefs) {
  if (beliefs.empty()) throw std::invalid_argument("belief_entropy: no beliefs");
  double h = 0.0;
  for (const auto& b : beliefs) {
    for (double q : softmax(b)) {
      if (q > 0.0) h -= q * std::log(q);
    }
  }
  return h;
}

}  // namespace econ
