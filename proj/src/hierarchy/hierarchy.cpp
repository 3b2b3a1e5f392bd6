#include "econ/hierarchy/hierarchy.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <set>
#include <tuple>
#include <stdexcept>
#include <thread>

#include "econ/agents/job_queue.hpp"
#include "econ/agents/text.hpp"
#include "econ/numeric/math.hpp"
#include "econ/numeric/optimizer.hpp"
#include "econ/numeric/tensor.hpp"

namespace econ {

using nlohmann::json;

std::vector<Cluster> assign_clusters(std::size_t agents, std::size_t k, const ClusterPolicy& policy) {
  if (k == 0) throw ContractViolation("assign_clusters: need at least one cluster");
  if (k > agents)
    throw ContractViolation("assign_clusters: " + std::to_string(k) + " clusters for " + std::to_string(agents) +
                            " agents");
  std::vector<Cluster> out;
  if (policy) {
    out = policy(agents, k);
  } else {
    for (std::size_t c = 0; c < k; ++c) out.push_back({c, {}});
    for (std::size_t i = 0; i < agents; ++i) out[i % k].members.push_back(i);
  }
  if (out.size() != k) throw ContractViolation("assign_clusters: policy returned the wrong cluster count");
  std::vector<int> seen(agents, 0);
  for (const auto& c : out) {
    if (c.members.empty()) throw ContractViolation("assign_clusters: empty cluster");
    if (c.members.size() > kMaxClusterSize)
      throw ContractViolation("assign_clusters: cluster " + std::to_string(c.id) + " has " +
                              std::to_string(c.members.size()) + " members, more than 4");
    for (std::size_t m : c.members) {
      if (m >= agents) throw ContractViolation("assign_clusters: unknown agent id");
      ++seen[m];
    }
  }
  if (std::any_of(seen.begin(), seen.end(), [](int n) { return n != 1; }))
    throw ContractViolation("assign_clusters: every agent must belong to exactly one cluster");
  return out;
}

void HierConfig::validate() const {
  if (clusters == 0) throw std::invalid_argument("clusters must be at least 1");
  if (clusters > agents) throw std::invalid_argument("clusters must not exceed agents");
  stop.validate();
}

json to_json(const HierRound& r) {
  json clusters = json::array();
  for (std::size_t k = 0; k < r.clusters.size(); ++k) {
    const EpisodeRecord& e = r.clusters[k];
    clusters.push_back({{"k", k},
                        {"strategy", e.strategy},
                        {"output", e.final_output.text},
                        {"valid", e.final_output.valid},
                        {"R_k", r.cluster_rewards[k]},
                        {"member_rewards", e.rewards}});
  }
  json j = {{"round", r.round},
            {"question", r.question.text},
            {"global_strategy", r.global_strategy},
            {"clusters", clusters},
            {"final", r.final_output.text},
            {"mean_R", r.mean_reward},
            {"inference", {{"mode", "parallel"}, {"threads", r.inference_threads}, {"overlapped", r.inference_overlapped}}},
            {"losses", to_json(r.losses)},
            {"delta_c", r.signals.delta_c},
            {"delta_loss", r.signals.delta_loss},
            {"stop", r.stop.stop},
            {"stop_reasons", r.stop.reasons}};
  if (r.update) j["update"] = to_json(*r.update);
  return j;
}

namespace {

MixingConfig global_mixing_config(const HierConfig& cfg) {
  EconConfig base = cfg.base;
  base.resolve();
  MixingConfig m = base.mixing;
  m.agents = cfg.clusters;
  return m;
}

}  // namespace

HierSystem::HierSystem(HierConfig cfg, Evaluator evaluator)
    : cfg_([&] {
        cfg.validate();
        return cfg;
      }()),
      clusters_(assign_clusters(cfg_.agents, cfg_.clusters, cfg_.policy)),
      global_([&]() -> MixingNet {
        std::mt19937_64 rng(cfg_.base.seed + 104729);
        return MixingNet(global_mixing_config(cfg_), rng);
      }()),
      global_buffer_(cfg_.base.buffer),
      replay_rng_(cfg_.base.seed + 15485863) {
  for (const Cluster& c : clusters_) {
    EconConfig ec = cfg_.base;
    ec.agents = c.members.size();
    ec.seed = cfg_.base.seed + 7919 * c.id;
    systems_.push_back(std::make_unique<EconSystem>(ec, evaluator));
    systems_.back()->set_agent_ids(c.members);
  }
}

std::uint64_t HierSystem::checksum() const {
  std::uint64_t h = mix_seed(global_.params().checksum(), global_.target().checksum());
  for (const auto& s : systems_) h = mix_seed(h, s->checksum());
  return h;
}

HierRound HierSystem::run_round(const Question& q, const HierBackends& backends, bool explore) const {
  const std::size_t k_count = clusters_.size();
  if (!backends.global) throw ContractViolation("run_round: no global coordinator");
  if (backends.local.size() != k_count) throw ContractViolation("run_round: need one local coordinator per cluster");
  if (backends.executors.size() != cfg_.agents) throw ContractViolation("run_round: need one backend per agent");
  const std::size_t dim = cfg_.base.belief.embed_dim;

  HierRound out;
  out.round = round_;
  out.question = q;

  GenerationRequest sreq;
  sreq.role = Role::kCoordinatorStrategy;
  sreq.query = q.text;
  sreq.token_budget = cfg_.base.token_budget;
  sreq.nonce = round_ * 4 + 3;
  Utterance s;
  try {
    s = backends.global->generate(sreq);
  } catch (const std::exception& e) {
    spdlog::warn("global strategy call failed: {}", e.what());
    s = Utterance::invalid(dim);
  }
  out.global_strategy = s.valid ? truncate_strategy(s.text, {}, cfg_.base.strategy_soft, cfg_.base.strategy_hard).text
                                : std::string();

  // Every cluster's inference phase runs on its own thread. Each job first
  // waits (bounded) until all K have started, which shows they overlapped.
  struct Rendezvous {
    std::mutex mu;
    std::condition_variable cv;
    std::size_t arrived = 0;
  };
  auto meet = std::make_shared<Rendezvous>();
  using Result = std::tuple<EpisodeRecord, std::thread::id, bool>;
  std::vector<std::function<Result()>> jobs;
  for (std::size_t k = 0; k < k_count; ++k) {
    Backends b{backends.local[k], {}};
    for (std::size_t m : clusters_[k].members) b.executors.push_back(backends.executors[m]);
    const EconSystem* sys = systems_[k].get();
    const std::string strategy = out.global_strategy;
    jobs.push_back([sys, b, q, explore, strategy, meet, k_count] {
      bool together = false;
      {
        std::unique_lock lock(meet->mu);
        ++meet->arrived;
        meet->cv.notify_all();
        together = meet->cv.wait_for(lock, std::chrono::seconds(5), [&] { return meet->arrived == k_count; });
      }
      return Result{sys->run_inference(q, b, explore, strategy), std::this_thread::get_id(), together};
    });
  }
  std::set<std::thread::id> threads;
  out.inference_overlapped = true;
  for (auto& [rec, tid, together] : run_in_batches(jobs, k_count)) {
    out.clusters.push_back(std::move(rec));
    threads.insert(tid);
    out.inference_overlapped = out.inference_overlapped && together;
  }
  out.inference_threads = threads.size();

  GenerationRequest freq;
  freq.role = Role::kCoordinatorFinal;
  freq.query = q.text;
  freq.token_budget = cfg_.base.token_budget;
  freq.nonce = round_ * 4 + 3;
  for (const auto& c : out.clusters)
    if (c.final_output.valid) freq.inputs.push_back(c.final_output.text);
  if (freq.inputs.empty()) {
    out.final_output = Utterance::invalid(dim);
  } else {
    try {
      out.final_output = backends.global->generate(freq);
    } catch (const std::exception& e) {
      spdlog::warn("global aggregation call failed: {}", e.what());
      out.final_output = Utterance::invalid(dim);
    }
  }

  const double r_max = cfg_.base.r_max;
  double sum = 0.0;
  for (const auto& c : out.clusters) {
    double r = 0.0;
    if (c.final_output.valid && out.final_output.valid) {
      r = std::clamp(cosine_sim(c.final_output.embedding, out.final_output.embedding).value, 0.0, r_max);
    }
    out.cluster_rewards.push_back(r);
    sum += r;
  }
  out.mean_reward = sum / static_cast<double>(k_count);
  return out;
}

MixingSample HierSystem::global_sample(const HierRound& round) const {
  MixingSample s;
  std::vector<double> group(cfg_.base.encoder.model_dim, 0.0);
  for (const auto& c : round.clusters) {
    s.local_q.push_back(c.q_tot);
    PromptEmbedding mean{0.0, 0.0};
    for (const auto& a : c.actions) {
      mean.temperature += a.temperature / static_cast<double>(c.actions.size());
      mean.repetition_penalty += a.repetition_penalty / static_cast<double>(c.actions.size());
    }
    s.embeddings.push_back(mean);
    for (std::size_t j = 0; j < group.size(); ++j) group[j] += c.group[j] / static_cast<double>(round.clusters.size());
  }
  s.group = std::move(group);
  s.r_tot = round.mean_reward;
  s.final_output = round.final_output.embedding;
  return s;
}

void HierSystem::commit(const HierRound& round) {
  if (round.clusters.size() != systems_.size()) throw ContractViolation("commit: cluster count mismatch");
  for (std::size_t k = 0; k < systems_.size(); ++k) {
    EpisodeRecord rec = round.clusters[k];
    rec.r_tot = round.cluster_rewards[k];
    systems_[k]->commit(rec);
  }
  MixingSample next = global_sample(round);
  if (pending_) {
    // The recorded cluster values of this round bootstrap the previous one.
    pending_->next_max_q = next.local_q;
    pending_->next_embeddings = next.embeddings;
    pending_->next_group = next.group;
    global_buffer_.push(std::move(*pending_));
  }
  pending_ = std::move(next);
  ++round_;
}

namespace {

MixingLossConfig loss_cfg(const EconConfig& c) { return {c.gamma, c.lambda_m, c.lambda_b}; }

}  // namespace

LossReport HierSystem::hier_optimize() {
  LossReport rep;
  double cluster_total = 0.0;
  for (std::size_t k = 0; k < systems_.size(); ++k) {
    const LossReport r = systems_[k]->run_optimization();
    rep.order.push_back("cluster" + std::to_string(k));
    if (r.valid) {
      rep.local.insert(rep.local.end(), r.local.begin(), r.local.end());
      rep.encoder += r.encoder;
      cluster_total += r.total;
    }
  }
  if (global_buffer_.size() < cfg_.base.batch) {
    rep.notice = "skipped global step: buffer holds " + std::to_string(global_buffer_.size()) + " of " +
                 std::to_string(cfg_.base.batch);
    rep.total = cluster_total;
    rep.valid = !rep.local.empty();
    return rep;
  }
  const auto batch = global_buffer_.sample(cfg_.base.batch, replay_rng_);
  global_.params().zero_grad();
  Tape tape;
  const MixingLoss ml = mixing_loss(tape, global_, batch, loss_cfg(cfg_.base), Grad::kTrack);
  tape.backward(ml.total);
  OptimizerConfig opt;
  opt.learning_rate = cfg_.base.lr_coord;
  adam_step(global_.params(), opt);
  project_nonnegative(global_.params());
  global_.soft_update_target(cfg_.base.tau);
  rep.order.push_back("global");
  rep.td_tot = tape.scalar(ml.td);
  rep.sd = tape.scalar(ml.sd);
  rep.consistency = tape.scalar(ml.consistency);
  rep.mixing = tape.scalar(ml.total);
  rep.total = cluster_total + rep.mixing;
  rep.batch = batch.size();
  rep.valid = true;
  return rep;
}

LossReport HierSystem::evaluate_losses() const {
  LossReport rep;
  double total = 0.0;
  for (const auto& s : systems_) {
    const LossReport r = s->evaluate_losses();
    if (!r.valid) {
      rep.notice = "cluster buffer empty";
      return rep;
    }
    rep.local.insert(rep.local.end(), r.local.begin(), r.local.end());
    rep.encoder += r.encoder;
    total += r.total;
  }
  if (global_buffer_.empty()) {
    rep.notice = "global buffer empty";
    return rep;
  }
  const auto batch = global_buffer_.recent(cfg_.base.batch);
  Tape tape;
  const MixingLoss ml = mixing_loss(tape, const_cast<MixingNet&>(global_), batch, loss_cfg(cfg_.base), Grad::kFreeze);
  rep.td_tot = tape.scalar(ml.td);
  rep.sd = tape.scalar(ml.sd);
  rep.consistency = tape.scalar(ml.consistency);
  rep.mixing = tape.scalar(ml.total);
  rep.total = total + rep.mixing;
  rep.batch = batch.size();
  rep.valid = true;
  return rep;
}

StopDecision hier_converged(std::span<const StopSignals> history, const EarlyStopConfig& cfg) {
  return check_early_stop(history, cfg);
}

HierResult hier_train(HierSystem& sys, std::span<const Question> questions, const HierBackends& backends,
                      std::size_t rounds, const RoundCallback& on_round) {
  if (questions.empty()) throw std::invalid_argument("hier_train: no questions");
  const EconConfig& base = sys.config().base;
  EarlyStopper stopper(sys.config().stop);
  HierResult result;
  std::optional<std::vector<double>> prev_c;
  std::optional<double> prev_loss;
  for (std::size_t r = 0; r < rounds; ++r) {
    const Question& q = questions[(sys.round() / base.max_rounds) % questions.size()];
    const std::uint64_t before = sys.checksum();
    HierRound round = sys.run_round(q, backends, true);
    if (sys.checksum() != before) throw std::logic_error("hierarchical inference changed a parameter");
    sys.commit(round);
    round.losses = sys.evaluate_losses();
    if (sys.round() % base.update_interval == 0) round.update = sys.hier_optimize();

    StopSignals s;
    s.mean_reward = round.mean_reward;
    s.valid = prev_c.has_value() && prev_loss.has_value() && round.losses.valid && round.final_output.valid;
    if (prev_c) s.delta_c = l2_distance(round.final_output.embedding, *prev_c);
    if (prev_loss && round.losses.valid) s.delta_loss = round.losses.total - *prev_loss;
    round.signals = s;
    round.stop = stopper.update(s);
    prev_c = round.final_output.embedding;
    if (round.losses.valid) prev_loss = round.losses.total;

    if (on_round) on_round(round);
    const bool stop = round.stop.stop;
    if (stop) result.stop_reasons = round.stop.reasons;
    result.rounds.push_back(std::move(round));
    if (stop) {
      result.stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace econ
