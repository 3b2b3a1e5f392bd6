#include "econ/orchestrator/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "econ/agents/job_queue.hpp"
#include "econ/agents/text.hpp"
#include "econ/numeric/math.hpp"
#include "econ/numeric/tensor.hpp"

namespace econ {

using nlohmann::json;

void EconConfig::resolve() {
  encoder.belief_dim = belief.belief_dim;
  mixing.agents = agents;
  mixing.group_dim = encoder.model_dim;
  mixing.feature_dim = belief.embed_dim;
}

void EconConfig::validate() const {
  auto need = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  need(agents >= 1, "agents must be at least 1");
  need(episodes >= 1, "episodes must be at least 1");
  need(buffer >= 1, "buffer must be positive");
  need(batch >= 1 && batch <= buffer, "batch must lie in [1, buffer]");
  need(update_interval >= 1, "update_interval must be positive");
  need(steps_per_update >= 1, "steps_per_update must be positive");
  need(lr > 0 && lr_coord > 0, "learning rates must be positive");
  need(gamma >= 0 && gamma < 1, "gamma must lie in [0, 1)");
  need(tau > 0 && tau <= 1, "tau must lie in (0, 1]");
  need(r_max > 0, "r_max must be positive");
  need(eta_alpha >= 0, "eta_alpha must be non-negative");
  need(reward_decay >= 0 && reward_decay < 1, "reward_decay must lie in [0, 1)");
  need(lambda_b >= 0 && lambda_e >= 0 && lambda_m >= 0, "loss weights must be non-negative");
  need(max_rounds >= 1, "max_rounds must be at least 1");
  need(explore_sigma >= 0, "explore_sigma must be non-negative");
  need(strategy_soft <= strategy_hard, "strategy_soft must not exceed strategy_hard");
  need(job_batch >= 1, "job_batch must be positive");
  alpha.validate();
  stop.validate();
  belief.validate();
  encoder.validate();
  mixing.validate();
  need(encoder.belief_dim == belief.belief_dim, "encoder input width must equal the belief width");
  need(mixing.agents == agents, "mixing agent count must equal agents");
  need(mixing.group_dim == encoder.model_dim, "mixing group width must equal the encoder width");
  need(mixing.feature_dim == belief.embed_dim, "mixing feature width must equal the text embedding width");
}

SeedPlan split_seed(std::uint64_t master) { return {master, master + 1000, master + 2000, master + 3000}; }

json to_json(const LossReport& rep) {
  return {{"valid", rep.valid},     {"batch", rep.batch},       {"L_local", rep.local},
          {"L_e", rep.encoder},     {"L_mix", rep.mixing},      {"L_td_tot", rep.td_tot},
          {"L_sd", rep.sd},         {"L_cons", rep.consistency}, {"L_tot", rep.total},
          {"order", rep.order},     {"notice", rep.notice}};
}

json to_json(const EpisodeRecord& rec) {
  json agents = json::array();
  for (std::size_t i = 0; i < rec.utterances.size(); ++i) {
    const auto& bd = rec.breakdowns[i];
    agents.push_back({{"T", rec.actions[i].temperature},
                      {"p", rec.actions[i].repetition_penalty},
                      {"q", rec.local_q[i]},
                      {"text", rec.utterances[i].text},
                      {"valid", rec.utterances[i].valid},
                      {"tokens", rec.utterances[i].token_count},
                      {"r", rec.rewards[i]},
                      {"r_al", bd.action_likelihood},
                      {"r_ts", bd.task_specific},
                      {"r_cc", bd.collaborative},
                      {"expected", rec.expected[i]}});
  }
  json j = {{"episode", rec.episode},
            {"round", rec.round},
            {"question", rec.question.text},
            {"reference", rec.question.reference},
            {"strategy", rec.strategy},
            {"strategy_warned", rec.strategy_warned},
            {"strategy_regenerated", rec.strategy_regenerated},
            {"strategy_cut", rec.strategy_cut},
            {"agents", agents},
            {"final", rec.final_output.text},
            {"final_valid", rec.final_output.valid},
            {"q_tot", rec.q_tot},
            {"mean_reward", rec.mean_reward},
            {"r_tot", rec.r_tot},
            {"L_dr", rec.reward_discrepancy},
            {"degenerate", rec.degenerate},
            {"losses", to_json(rec.losses)},
            {"delta_c", rec.signals.delta_c},
            {"delta_loss", rec.signals.delta_loss},
            {"signals_valid", rec.signals.valid},
            {"stop", rec.stop.stop},
            {"criteria_met", rec.stop.criteria_met},
            {"stop_reasons", rec.stop.reasons}};
  if (rec.update) j["update"] = to_json(*rec.update);
  return j;
}

EconSystem::EconSystem(EconConfig cfg, Evaluator evaluator)
    : cfg_([&] {
        cfg.resolve();
        cfg.validate();
        return cfg;
      }()),
      evaluator_(std::move(evaluator)),
      seeds_(split_seed(cfg_.seed)),
      init_rng_(seeds_.init),
      nets_([&] {
        std::vector<std::unique_ptr<BeliefNet>> nets;
        for (std::size_t i = 0; i < cfg_.agents; ++i) nets.push_back(std::make_unique<BeliefNet>(cfg_.belief, init_rng_));
        return nets;
      }()),
      encoder_(cfg_.encoder, init_rng_),
      mixing_(cfg_.mixing, init_rng_),
      alpha_(cfg_.alpha),
      expected_(cfg_.agents, cfg_.reward_decay),
      buffer_(cfg_.buffer),
      trajectories_(cfg_.agents, Trajectory(cfg_.belief.window)),
      priors_(cfg_.agents, std::vector<double>(cfg_.belief.belief_dim, 0.0)),
      replay_rng_(seeds_.replay) {
  for (std::size_t i = 0; i < cfg_.agents; ++i) agent_ids_.push_back(i);
}

void EconSystem::set_agent_ids(std::vector<std::size_t> ids) {
  if (ids.size() != agents()) throw ContractViolation("set_agent_ids: one id per agent required");
  agent_ids_ = std::move(ids);
}

std::map<std::string, const ParamStore*> EconSystem::stores() const {
  std::map<std::string, const ParamStore*> out;
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    out["belief" + std::to_string(i)] = &nets_[i]->params();
    out["belief" + std::to_string(i) + ".target"] = &nets_[i]->target();
  }
  out["encoder"] = &encoder_.params();
  out["mixing"] = &mixing_.params();
  out["mixing.target"] = &mixing_.target();
  return out;
}

std::map<std::string, ParamStore*> EconSystem::mutable_stores() {
  std::map<std::string, ParamStore*> out;
  for (const auto& [name, store] : stores()) out[name] = const_cast<ParamStore*>(store);
  return out;
}

std::uint64_t EconSystem::checksum() const {
  std::uint64_t h = 0;
  for (const auto& [name, store] : stores()) h = mix_seed(h ^ fnv1a(name), store->checksum());
  return h;
}

namespace {

Utterance guarded_generate(Backend& backend, const GenerationRequest& req, std::size_t embed_dim) {
  try {
    return backend.generate(req);
  } catch (const ContractViolation&) {
    throw;
  } catch (const std::exception& e) {
    spdlog::warn("{} call failed: {}", role_name(req.role), e.what());
    return Utterance::invalid(embed_dim);
  }
}

std::vector<double> checked_embed(Backend& backend, const std::string& text, std::size_t dim) {
  auto v = backend.embed(text);
  if (v.size() != dim)
    throw ShapeError("backend embedding width " + std::to_string(v.size()) + " differs from embed_dim " +
                     std::to_string(dim));
  return v;
}

double clamp_to(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

EpisodeRecord EconSystem::run_inference(const Question& q, const Backends& backends, bool explore,
                                        const std::string& parent_strategy) const {
  const std::size_t n = agents();
  if (!backends.coordinator) throw ContractViolation("run_inference: no coordinator backend");
  if (backends.executors.size() != n)
    throw ContractViolation("run_inference: need one execution backend per agent");
  Backend& coord = *backends.coordinator;
  const std::size_t dim = cfg_.belief.embed_dim;
  const std::uint64_t ep = episode_;

  EpisodeRecord rec;
  rec.episode = ep;
  rec.round = ep % cfg_.max_rounds;
  rec.question = q;

  // Strategy, truncated to the token budget with one regeneration.
  GenerationRequest sreq;
  sreq.role = Role::kCoordinatorStrategy;
  sreq.query = q.text;
  sreq.strategy = parent_strategy;
  sreq.token_budget = cfg_.token_budget;
  sreq.nonce = ep * 4;
  Utterance strat = guarded_generate(coord, sreq, dim);
  auto regenerate = [&] {
    GenerationRequest again = sreq;
    again.nonce = ep * 4 + 1;
    const Utterance u = guarded_generate(coord, again, dim);
    return u.valid ? u.text : std::string();
  };
  const TruncateResult tr =
      truncate_strategy(strat.valid ? strat.text : std::string(), regenerate, cfg_.strategy_soft, cfg_.strategy_hard);
  rec.strategy = tr.text;
  rec.strategy_warned = tr.warned;
  rec.strategy_regenerated = tr.regenerated;
  rec.strategy_cut = tr.hard_cut;

  const std::vector<double> task = checked_embed(coord, q.text, dim);
  const std::vector<double> strategy = checked_embed(coord, rec.strategy, dim);

  const ActionBounds& box = cfg_.belief.bounds;
  for (std::size_t i = 0; i < n; ++i) {
    Observation obs{task, strategy, priors_[i]};
    std::vector<double> b = nets_[i]->compute_belief(trajectories_[i], obs);
    PromptEmbedding e = nets_[i]->embed_prompt(b);
    if (explore && cfg_.explore_sigma > 0) {
      std::mt19937_64 rng(mix_seed(seeds_.exploration, ep * 1000003 + agent_ids_[i]));
      std::normal_distribution<double> noise(0.0, cfg_.explore_sigma);
      e.temperature = clamp_to(e.temperature + noise(rng) * (box.t_max - box.t_min), box.t_min, box.t_max);
      e.repetition_penalty =
          clamp_to(e.repetition_penalty + noise(rng) * (box.p_max - box.p_min), box.p_min, box.p_max);
    }
    rec.local_q.push_back(nets_[i]->local_q(b, e));
    rec.observations.push_back(std::move(obs));
    rec.beliefs.push_back(std::move(b));
    rec.actions.push_back(e);
  }

  // Execution agents run concurrently and join before coordination.
  std::vector<std::function<Utterance()>> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    GenerationRequest req;
    req.role = Role::kExecution;
    req.query = q.text;
    req.strategy = rec.strategy;
    req.embedding = rec.actions[i];
    req.token_budget = cfg_.token_budget;
    req.agent = static_cast<int>(agent_ids_[i]);
    req.nonce = ep;
    Backend* be = backends.executors[i];
    jobs.push_back([be, req, dim] { return guarded_generate(*be, req, dim); });
  }
  rec.utterances = run_in_batches(jobs, cfg_.job_batch);

  rec.group = encoder_.encode_group(rec.beliefs);

  const bool any_valid =
      std::any_of(rec.utterances.begin(), rec.utterances.end(), [](const Utterance& u) { return u.valid; });
  if (any_valid) {
    GenerationRequest freq;
    freq.role = Role::kCoordinatorFinal;
    freq.query = q.text;
    freq.token_budget = cfg_.token_budget;
    freq.nonce = ep * 4 + 2;
    for (const auto& u : rec.utterances) freq.inputs.push_back(u.text);
    rec.final_output = guarded_generate(coord, freq, dim);
  } else {
    spdlog::warn("episode {}: every execution agent returned invalid output", ep);
    rec.degenerate = true;
    rec.final_output = Utterance::invalid(dim);
  }

  // Rewards; invalid utterances score 0 on every component.
  std::vector<std::array<double, 3>> comps;
  for (std::size_t i = 0; i < n; ++i) {
    RewardBreakdown bd;
    const Utterance& u = rec.utterances[i];
    if (u.valid && !rec.degenerate) {
      std::vector<std::string> peers;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && rec.utterances[j].valid) peers.push_back(rec.utterances[j].text);
      bd.action_likelihood =
          reward_action_likelihood(u.embedding, rec.final_output.embedding, cfg_.r_max, &bd.al_clipped);
      bd.task_specific = reward_task_specific(u.text, q.reference, evaluator_, cfg_.r_max, &bd.ts_clipped);
      bd.collaborative = reward_collab(u.text, peers, evaluator_, cfg_.r_max, &bd.cc_clipped);
      bd.blended = blend(bd.components(), alpha_);
    }
    comps.push_back(bd.components());
    rec.breakdowns.push_back(bd);
    rec.rewards.push_back(bd.blended);
  }
  rec.expected = expected_.initialized() ? expected_.expected() : rec.rewards;
  rec.reward_discrepancy = reward_discrepancy(alpha_, comps, rec.expected);

  double sum = 0.0;
  for (double r : rec.rewards) sum += r;
  rec.mean_reward = sum / static_cast<double>(n);
  rec.r_tot = rec.mean_reward;
  rec.q_tot = mixing_.q_tot_value(rec.local_q, rec.actions, rec.group);
  return rec;
}

void EconSystem::commit(const EpisodeRecord& rec) {
  const std::size_t n = agents();
  if (rec.utterances.size() != n || rec.observations.size() != n)
    throw ContractViolation("commit: episode record agent count differs from the system");
  if (pending_) {
    for (std::size_t i = 0; i < n; ++i) pending_->agents[i].next_observation = rec.observations[i];
    buffer_.push(std::move(*pending_));
    pending_.reset();
  }
  JointTransition jt;
  jt.r_tot = rec.r_tot;
  jt.final_output = rec.final_output.embedding;
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.trajectory = trajectories_[i];
    t.observation = rec.observations[i];
    t.action = rec.actions[i];
    t.reward = rec.rewards[i];
    trajectories_[i].push({rec.actions[i], rec.observations[i]});
    t.next_trajectory = trajectories_[i];
    jt.agents.push_back(std::move(t));
    priors_[i] = rec.beliefs[i];
  }
  pending_ = std::move(jt);

  last_components_.clear();
  for (const auto& bd : rec.breakdowns) last_components_.push_back(bd.components());
  last_expected_ = rec.expected;
  expected_.observe(rec.rewards);
  ++episode_;
}

MixingSample EconSystem::mixing_sample(const JointTransition& jt) const {
  MixingSample s;
  std::vector<std::vector<double>> beliefs, next_beliefs;
  for (std::size_t i = 0; i < agents(); ++i) {
    const Transition& t = jt.agents[i];
    beliefs.push_back(nets_[i]->compute_belief(t.trajectory, t.observation));
    s.local_q.push_back(nets_[i]->local_q(beliefs.back(), t.action));
    s.embeddings.push_back(t.action);
    next_beliefs.push_back(nets_[i]->compute_belief(t.next_trajectory, t.next_observation));
    const GridMax gm = nets_[i]->max_target_q(next_beliefs.back());
    s.next_max_q.push_back(gm.value);
    s.next_embeddings.push_back(gm.argmax);
  }
  s.group = encoder_.encode_group(beliefs);
  s.next_group = encoder_.encode_group(next_beliefs);
  s.r_tot = jt.r_tot;
  s.final_output = jt.final_output;
  s.terminal = jt.terminal;
  return s;
}

namespace {

std::vector<Transition> agent_slice(std::span<const JointTransition> batch, std::size_t i) {
  std::vector<Transition> out;
  out.reserve(batch.size());
  for (const auto& jt : batch) out.push_back(jt.agents[i]);
  return out;
}

MixingLossConfig mixing_cfg(const EconConfig& cfg) { return {cfg.gamma, cfg.lambda_m, cfg.lambda_b}; }

void finish_totals(LossReport& rep, double lambda_e) {
  double local_sum = 0.0;
  for (double l : rep.local) local_sum += l;
  rep.encoder = rep.td_tot + lambda_e * local_sum;
  rep.total = local_sum + rep.encoder + rep.mixing;
}

}  // namespace

LossReport EconSystem::evaluate_losses() const {
  if (buffer_.empty()) {
    LossReport rep;
    rep.notice = "replay buffer empty";
    return rep;
  }
  const auto batch = buffer_.recent(cfg_.batch);
  return evaluate_losses(batch);
}

LossReport EconSystem::evaluate_losses(std::span<const JointTransition> batch) const {
  LossReport rep;
  if (batch.empty()) {
    rep.notice = "empty batch";
    return rep;
  }
  for (std::size_t i = 0; i < agents(); ++i) rep.local.push_back(nets_[i]->td_loss_value(agent_slice(batch, i), cfg_.gamma));
  std::vector<MixingSample> samples;
  for (const auto& jt : batch) samples.push_back(mixing_sample(jt));
  Tape tape;
  // Frozen binding never writes to the network.
  const MixingLoss ml =
      mixing_loss(tape, const_cast<MixingNet&>(mixing_), samples, mixing_cfg(cfg_), Grad::kFreeze);
  rep.td_tot = tape.scalar(ml.td);
  rep.sd = tape.scalar(ml.sd);
  rep.consistency = tape.scalar(ml.consistency);
  rep.mixing = tape.scalar(ml.total);
  rep.batch = batch.size();
  rep.valid = true;
  finish_totals(rep, cfg_.lambda_e);
  return rep;
}

LossReport EconSystem::run_optimization() {
  if (buffer_.size() < cfg_.batch) {
    LossReport rep;
    rep.notice = "skipped update: buffer holds " + std::to_string(buffer_.size()) + " of " +
                 std::to_string(cfg_.batch) + " transitions";
    spdlog::info("{}", rep.notice);
    return rep;
  }
  LossReport rep;
  for (std::size_t step = 0; step < cfg_.steps_per_update; ++step) {
    const auto batch = buffer_.sample(cfg_.batch, replay_rng_);
    rep = run_optimization(batch);
  }
  return rep;
}

LossReport EconSystem::run_optimization(std::span<const JointTransition> batch) {
  LossReport rep;
  if (batch.empty()) {
    rep.notice = "empty batch";
    return rep;
  }
  const std::size_t n = agents();
  // Everything below reads the pre-update snapshot.
  std::vector<MixingSample> samples;
  std::vector<Tensor> belief_rows;
  for (const auto& jt : batch) {
    samples.push_back(mixing_sample(jt));
    std::vector<std::vector<double>> beliefs;
    for (std::size_t i = 0; i < n; ++i)
      beliefs.push_back(nets_[i]->compute_belief(jt.agents[i].trajectory, jt.agents[i].observation));
    belief_rows.push_back(stack_rows(beliefs));
  }
  std::vector<std::vector<Transition>> slices;
  std::vector<std::vector<double>> targets;
  for (std::size_t i = 0; i < n; ++i) {
    slices.push_back(agent_slice(batch, i));
    targets.push_back(nets_[i]->td_targets(slices.back(), cfg_.gamma));
  }

  OptimizerConfig local_opt;
  local_opt.learning_rate = cfg_.lr;
  OptimizerConfig coord_opt;
  coord_opt.learning_rate = cfg_.lr_coord;

  for (std::size_t i = 0; i < n; ++i) {
    BeliefNet& net = *nets_[i];
    net.params().zero_grad();
    Tape tape;
    Var loss = net.td_loss(tape, slices[i], targets[i]);
    tape.backward(loss);
    adam_step(net.params(), local_opt);
    rep.local.push_back(tape.scalar(loss));
    rep.order.push_back("belief" + std::to_string(i));
  }
  double local_sum = 0.0;
  for (double l : rep.local) local_sum += l;

  {
    // L_e: the mixing TD term with the encoder tracked and the mixing
    // network frozen, plus the weighted local losses (constant here).
    encoder_.params().zero_grad();
    Tape tape;
    std::vector<Var> groups;
    for (const auto& rows : belief_rows) groups.push_back(encoder_.encode(tape, tape.constant(rows), Grad::kTrack));
    const MixingLoss ml = mixing_loss(tape, mixing_, samples, mixing_cfg(cfg_), Grad::kFreeze, groups);
    Var le = tape.add_scalar(ml.td, cfg_.lambda_e * local_sum);
    tape.backward(le);
    adam_step(encoder_.params(), coord_opt);
    rep.order.push_back("encoder");
  }
  {
    mixing_.params().zero_grad();
    Tape tape;
    const MixingLoss ml = mixing_loss(tape, mixing_, samples, mixing_cfg(cfg_), Grad::kTrack);
    tape.backward(ml.total);
    adam_step(mixing_.params(), coord_opt);
    project_nonnegative(mixing_.params());
    rep.td_tot = tape.scalar(ml.td);
    rep.sd = tape.scalar(ml.sd);
    rep.consistency = tape.scalar(ml.consistency);
    rep.mixing = tape.scalar(ml.total);
    rep.order.push_back("mixing");
  }
  for (auto& net : nets_) net->soft_update_target(cfg_.tau);
  mixing_.soft_update_target(cfg_.tau);
  rep.order.push_back("targets");

  if (!last_components_.empty() && cfg_.eta_alpha > 0) {
    alpha_ = update_reward_weights(alpha_, last_components_, last_expected_, cfg_.eta_alpha);
    rep.order.push_back("alpha");
  }
  rep.batch = batch.size();
  rep.valid = true;
  finish_totals(rep, cfg_.lambda_e);
  return rep;
}

TrainResult train(EconSystem& sys, std::span<const Question> questions, const Backends& backends,
                  const EpisodeCallback& on_episode) {
  if (questions.empty()) throw std::invalid_argument("train: no questions");
  const EconConfig& cfg = sys.config();
  EarlyStopper stopper(cfg.stop);
  TrainResult result;
  std::optional<std::vector<double>> prev_c;
  std::optional<double> prev_loss;

  for (std::size_t k = 0; k < cfg.episodes; ++k) {
    const Question& q = questions[(sys.episode() / cfg.max_rounds) % questions.size()];
    const std::uint64_t before = sys.checksum();
    EpisodeRecord rec = sys.run_inference(q, backends, true);
    if (sys.checksum() != before) throw std::logic_error("inference phase changed a parameter");
    ++result.checksum_checks;

    sys.commit(rec);
    rec.losses = sys.evaluate_losses();
    if (sys.episode() % cfg.update_interval == 0) rec.update = sys.run_optimization();

    StopSignals s;
    s.mean_reward = rec.mean_reward;
    s.valid = prev_c.has_value() && prev_loss.has_value() && rec.losses.valid && !rec.degenerate;
    if (prev_c) s.delta_c = l2_distance(rec.final_output.embedding, *prev_c);
    if (prev_loss && rec.losses.valid) s.delta_loss = rec.losses.total - *prev_loss;
    rec.signals = s;
    rec.stop = stopper.update(s);

    prev_c = rec.final_output.embedding;
    if (rec.losses.valid) prev_loss = rec.losses.total;
    if (on_episode) on_episode(rec);
    const bool stop = rec.stop.stop;
    if (stop) result.stop_reasons = rec.stop.reasons;
    result.episodes.push_back(std::move(rec));
    if (stop) {
      result.stopped = true;
      break;
    }
  }
  return result;
}

std::vector<EpisodeRecord> evaluate(const EconSystem& sys, std::span<const Question> questions,
                                    const Backends& backends) {
  std::vector<EpisodeRecord> out;
  for (const auto& q : questions) out.push_back(sys.run_inference(q, backends, false));
  return out;
}

}  // namespace econ
