#include "econ/mixing/mixing_net.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "econ/numeric/attention.hpp"
#include "econ/numeric/math.hpp"

namespace econ {
namespace {

Tensor row_of(std::span<const double> v) { return Tensor::row(std::vector<double>(v.begin(), v.end())); }

}  // namespace

void MixingConfig::validate() const {
  if (agents == 0) throw std::invalid_argument("mixing: at least one agent required");
  if (heads == 0 || attn_dim % heads != 0) {
    throw std::invalid_argument("mixing: " + std::to_string(heads) + " heads do not divide attention dim " +
                                std::to_string(attn_dim));
  }
  if (group_dim == 0 || feature_dim == 0 || hidden == 0) {
    throw std::invalid_argument("mixing: dimensions must be positive");
  }
}

MixingNet::MixingNet(const MixingConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t fuse_in = cfg_.attn_dim + (cfg_.concat_group ? cfg_.group_dim : 0);
  init_attention(params_, "att", 2, cfg_.attn_dim, rng);
  params_.add_uniform("fuse.W", fuse_in, cfg_.feature_dim, fuse_in, rng);
  params_.add_uniform("fuse.b", 1, cfg_.feature_dim, fuse_in, rng);
  params_.add_uniform("gate.u", cfg_.feature_dim, 1, cfg_.feature_dim, rng);
  params_.add_uniform("qpath.W1", cfg_.agents, cfg_.hidden, cfg_.agents, rng);
  params_.add("qpath.c1", Tensor::matrix(1, cfg_.hidden));
  params_.add_uniform("qpath.W2", cfg_.hidden, 1, cfg_.hidden, rng);
  params_.add("qpath.c2", Tensor::matrix(1, 1));
  params_.add_uniform("hyper.V1", cfg_.feature_dim, cfg_.hidden, cfg_.feature_dim, rng);
  params_.add_uniform("hyper.V2", cfg_.feature_dim, 1, cfg_.feature_dim, rng);
  // Q-path weights start non-negative.
  for (auto& [name, p] : params_) {
    if (is_q_path_weight(name)) {
      for (double& x : p.value.data()) x = std::abs(x);
    }
  }
  target_ = params_;
}

bool MixingNet::is_q_path_weight(const std::string& name) { return name == "qpath.W1" || name == "qpath.W2"; }

Var MixingNet::bind(Tape& tape, const ParamStore& store, const std::string& name, Grad mode) const {
  if (&store == &params_ && mode == Grad::kTrack) {
    return tape.param(const_cast<ParamStore&>(params_), name, Grad::kTrack);
  }
  return tape.param(store, name);
}

Var MixingNet::attend_impl(Tape& tape, const ParamStore& store, Var embeddings, Grad mode) const {
  if (tape.value(embeddings).cols() != 2) {
    throw ShapeError("self_attend_embeddings: embeddings " + tape.value(embeddings).shape_string() +
                     " must have 2 columns");
  }
  AttentionWeights w{bind(tape, store, "att.wq", mode), bind(tape, store, "att.wk", mode),
                     bind(tape, store, "att.wv", mode), bind(tape, store, "att.wo", mode)};
  return multi_head_attention(tape, embeddings, embeddings, embeddings, w, cfg_.heads);
}

Var MixingNet::fuse_impl(Tape& tape, const ParamStore& store, Var w, Var group, Grad mode) const {
  Var W = bind(tape, store, "fuse.W", mode);
  Var pre = tape.matmul(w, tape.slice_rows(W, 0, cfg_.attn_dim));
  if (cfg_.concat_group) {
    if (tape.value(group).cols() != cfg_.group_dim || tape.value(group).rows() != 1) {
      throw ShapeError("fuse_features: group representation " + tape.value(group).shape_string() +
                       " is not 1 x " + std::to_string(cfg_.group_dim));
    }
    // [w_i; E] W = w_i W_top + E W_bottom, with E shared by every row.
    pre = tape.add(pre, tape.matmul(group, tape.slice_rows(W, cfg_.attn_dim, cfg_.attn_dim + cfg_.group_dim)));
  }
  return tape.relu(tape.add(pre, bind(tape, store, "fuse.b", mode)));
}

Var MixingNet::q_tot_impl(Tape& tape, const ParamStore& store, Var local_qs, Var features, Grad mode) const {
  const Tensor& q = tape.value(local_qs);
  const Tensor& f = tape.value(features);
  if (q.rows() != 1 || q.cols() != cfg_.agents || f.rows() != cfg_.agents) {
    throw std::invalid_argument("q_tot: " + std::to_string(q.cols()) + " local Q-values and " +
                                std::to_string(f.rows()) + " feature rows for " + std::to_string(cfg_.agents) +
                                " agents");
  }
  Var scores = tape.transpose(tape.matmul(features, bind(tape, store, "gate.u", mode)));
  Var gates = tape.softmax_rows(scores);
  Var mixed = tape.scale(tape.mul(gates, local_qs), static_cast<double>(cfg_.agents));
  Var fbar = tape.mean_rows(features);
  Var h = tape.relu(tape.add(tape.add(tape.matmul(mixed, bind(tape, store, "qpath.W1", mode)),
                                      tape.matmul(fbar, bind(tape, store, "hyper.V1", mode))),
                             bind(tape, store, "qpath.c1", mode)));
  return tape.add(tape.add(tape.matmul(h, bind(tape, store, "qpath.W2", mode)),
                           tape.matmul(fbar, bind(tape, store, "hyper.V2", mode))),
                  bind(tape, store, "qpath.c2", mode));
}

MixingNet::Forward MixingNet::forward_impl(Tape& tape, const ParamStore& store, Var local_qs, Var embeddings,
                                           Var group, Grad mode) const {
  Var w = attend_impl(tape, store, embeddings, mode);
  Var f = fuse_impl(tape, store, w, group, mode);
  return {f, q_tot_impl(tape, store, local_qs, f, mode)};
}

Var MixingNet::self_attend(Tape& tape, Var embeddings, Grad mode) {
  return attend_impl(tape, params_, embeddings, mode);
}

Var MixingNet::fuse(Tape& tape, Var w, Var group, Grad mode) { return fuse_impl(tape, params_, w, group, mode); }

Var MixingNet::q_tot(Tape& tape, Var local_qs, Var features, Grad mode) {
  return q_tot_impl(tape, params_, local_qs, features, mode);
}

MixingNet::Forward MixingNet::forward(Tape& tape, Var local_qs, Var embeddings, Var group, Grad mode) {
  return forward_impl(tape, params_, local_qs, embeddings, group, mode);
}

MixingNet::Forward MixingNet::forward_target(Tape& tape, Var local_qs, Var embeddings, Var group) const {
  return forward_impl(tape, target_, local_qs, embeddings, group, Grad::kFreeze);
}

double MixingNet::q_tot_value(std::span<const double> local_qs, std::span<const PromptEmbedding> embeddings,
                              std::span<const double> group) const {
  Tape tape;
  auto fw = forward_impl(tape, params_, tape.constant(row_of(local_qs)), tape.constant(embedding_rows(embeddings)),
                         tape.constant(row_of(group)), Grad::kFreeze);
  return tape.scalar(fw.q_tot);
}

std::vector<std::vector<double>> MixingNet::features_value(std::span<const PromptEmbedding> embeddings,
                                                           std::span<const double> group) const {
  Tape tape;
  Var w = attend_impl(tape, params_, tape.constant(embedding_rows(embeddings)), Grad::kFreeze);
  const Tensor& f = tape.value(fuse_impl(tape, params_, w, tape.constant(row_of(group)), Grad::kFreeze));
  std::vector<std::vector<double>> out(f.rows(), std::vector<double>(f.cols()));
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t c = 0; c < f.cols(); ++c) out[r][c] = f(r, c);
  return out;
}

MixingNet::Context MixingNet::context(std::span<const PromptEmbedding> embeddings,
                                      std::span<const double> group) const {
  if (embeddings.size() != cfg_.agents) throw std::invalid_argument("mixing context: wrong agent count");
  Tape tape;
  Var w = attend_impl(tape, params_, tape.constant(embedding_rows(embeddings)), Grad::kFreeze);
  Var f = fuse_impl(tape, params_, w, tape.constant(row_of(group)), Grad::kFreeze);
  Var gates = tape.softmax_rows(tape.transpose(tape.matmul(f, tape.param(params_, "gate.u"))));
  Var fbar = tape.mean_rows(f);
  Var b1 = tape.add(tape.matmul(fbar, tape.param(params_, "hyper.V1")), tape.param(params_, "qpath.c1"));
  Var b2 = tape.add(tape.matmul(fbar, tape.param(params_, "hyper.V2")), tape.param(params_, "qpath.c2"));
  Context ctx;
  ctx.scaled_gates = tape.value(gates).values();
  for (double& g : ctx.scaled_gates) g *= static_cast<double>(cfg_.agents);
  ctx.bias1 = tape.value(b1).values();
  ctx.bias2 = tape.scalar(b2);
  return ctx;
}

double MixingNet::q_tot_from(const Context& ctx, std::span<const double> local_qs) const {
  if (local_qs.size() != cfg_.agents) throw std::invalid_argument("q_tot: wrong number of local Q-values");
  const Tensor& w1 = params_.value("qpath.W1");
  const Tensor& w2 = params_.value("qpath.W2");
  double out = ctx.bias2;
  for (std::size_t m = 0; m < cfg_.hidden; ++m) {
    double h = ctx.bias1[m];
    for (std::size_t i = 0; i < cfg_.agents; ++i) h += ctx.scaled_gates[i] * local_qs[i] * w1(i, m);
    if (h > 0.0) out += h * w2(m, 0);
  }
  return out;
}

void MixingNet::soft_update_target(double tau) { soft_update(params_, target_, tau); }

std::size_t project_nonnegative(ParamStore& params) {
  std::size_t changed = 0;
  for (auto& [name, p] : params) {
    if (!MixingNet::is_q_path_weight(name)) continue;
    for (double& x : p.value.data()) {
      if (x < 0.0) {
        x = 0.0;
        ++changed;
      }
    }
  }
  return changed;
}

MonotonicityReport check_monotonicity(const MixingNet& net, const ActionBounds& bounds, std::size_t n_samples,
                                      std::mt19937_64& rng, double delta, double tolerance) {
  if (n_samples == 0) throw std::invalid_argument("check_monotonicity: n_samples must be at least 1");
  const MixingConfig& cfg = net.config();
  std::uniform_real_distribution<double> q_dist(-2.0, 2.0), e_dist(-1.0, 1.0);
  std::uniform_real_distribution<double> t_dist(bounds.t_min, bounds.t_max), p_dist(bounds.p_min, bounds.p_max);
  MonotonicityReport rep;
  rep.min_derivative = std::numeric_limits<double>::infinity();
  std::vector<PromptEmbedding> emb(cfg.agents);
  std::vector<double> group(cfg.group_dim), q(cfg.agents);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (auto& e : emb) e = {t_dist(rng), p_dist(rng)};
    for (double& g : group) g = e_dist(rng);
    for (double& x : q) x = q_dist(rng);
    const auto ctx = net.context(emb, group);
    const double base = net.q_tot_from(ctx, q);
    for (std::size_t i = 0; i < cfg.agents; ++i) {
      auto bumped = q;
      bumped[i] += delta;
      const double d = (net.q_tot_from(ctx, bumped) - base) / delta;
      rep.min_derivative = std::min(rep.min_derivative, d);
      if (d < -tolerance) ++rep.violations;
    }
    ++rep.samples;
  }
  return rep;
}

double sd_loss(std::span<const std::vector<double>> features, std::span<const double> final_output,
               double lambda_b) {
  if (l2_norm(final_output) == 0.0) spdlog::warn("sd_loss: final output embedding is zero; similarity taken as 0");
  double total = 0.0;
  for (const auto& f : features) {
    if (f.size() != final_output.size()) throw ShapeError("sd_loss: feature width differs from C");
    const double gap = 1.0 - cosine_sim(f, final_output).value;
    total += gap * gap;
  }
  return lambda_b * total;
}

Var sd_loss(Tape& tape, Var features, std::span<const double> final_output, double lambda_b) {
  const Tensor& f = tape.value(features);
  if (f.cols() != final_output.size()) {
    throw ShapeError("sd_loss: features " + f.shape_string() + " vs C of length " +
                     std::to_string(final_output.size()));
  }
  if (l2_norm(final_output) == 0.0) spdlog::warn("sd_loss: final output embedding is zero; similarity taken as 0");
  Var c = tape.constant(row_of(final_output));
  Var total;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    Var gap = tape.square(tape.add_scalar(tape.scale(tape.cosine(tape.slice_rows(features, i, i + 1), c), -1.0), 1.0));
    total = total.valid() ? tape.add(total, gap) : gap;
  }
  return tape.scale(total, lambda_b);
}

std::vector<double> mixing_targets(const MixingNet& net, std::span<const MixingSample> batch, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("mixing_loss: gamma must lie in [0, 1)");
  std::vector<double> y;
  y.reserve(batch.size());
  for (const MixingSample& s : batch) {
    double v = s.r_tot;
    if (!s.terminal) {
      Tape tape;
      auto fw = net.forward_target(tape, tape.constant(row_of(s.next_max_q)),
                                   tape.constant(embedding_rows(s.next_embeddings)),
                                   tape.constant(row_of(s.next_group)));
      v += gamma * tape.scalar(fw.q_tot);
    }
    y.push_back(v);
  }
  return y;
}

MixingLoss mixing_loss(Tape& tape, MixingNet& net, std::span<const MixingSample> batch, const MixingLossConfig& cfg,
                       Grad mode, std::span<const Var> groups) {
  if (batch.empty()) throw std::invalid_argument("mixing_loss: empty batch");
  if (!groups.empty() && groups.size() != batch.size()) {
    throw std::invalid_argument("mixing_loss: one group variable per sample required");
  }
  const std::vector<double> targets = mixing_targets(net, batch, cfg.gamma);
  Var td, sd, cons;
  auto acc = [&tape](Var& sum, Var term) { sum = sum.valid() ? tape.add(sum, term) : term; };
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const MixingSample& s = batch[k];
    Var q = tape.constant(row_of(s.local_q));
    Var group = groups.empty() ? tape.constant(row_of(s.group)) : groups[k];
    auto fw = net.forward(tape, q, tape.constant(embedding_rows(s.embeddings)), group, mode);
    acc(td, tape.square(tape.add_scalar(fw.q_tot, -targets[k])));
    acc(sd, sd_loss(tape, fw.features, s.final_output, cfg.lambda_b));
    acc(cons, tape.scale(tape.sum(tape.square(tape.sub(q, fw.q_tot))), cfg.lambda_m));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  MixingLoss out;
  out.td = tape.scale(td, inv);
  out.sd = tape.scale(sd, inv);
  out.consistency = tape.scale(cons, inv);
  out.total = tape.add(tape.add(out.td, out.sd), out.consistency);
  return out;
}

}  // namespace econ
