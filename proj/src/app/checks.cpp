#include "econ/app/checks.hpp"

#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "econ/agents/clock.hpp"
#include "econ/agents/http_backend.hpp"
#include "econ/agents/job_queue.hpp"
#include "econ/agents/rate_budget.hpp"
#include "econ/agents/text.hpp"
#include "econ/app/pipeline.hpp"
#include "econ/game/game.hpp"
#include "econ/hierarchy/hierarchy.hpp"
#include "econ/numeric/gradcheck.hpp"
#include "econ/numeric/math.hpp"

namespace econ {

namespace fs = std::filesystem;

namespace {

// Collects failed expectations and notes for one check.
class Verdict {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failed_.size() < 4) failed_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_ == 0; }

  std::string detail() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    if (failures_) {
      out += (out.empty() ? "" : "; ") + fmt::format("{} failed:", failures_);
      for (const auto& f : failed_) out += " [" + f + "]";
    }
    return out;
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> failed_;
  std::vector<std::string> notes_;
};

std::vector<double> uniform_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<PromptEmbedding> random_actions(std::size_t n, const ActionBounds& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(b.t_min, b.t_max), p(b.p_min, b.p_max);
  std::vector<PromptEmbedding> out(n);
  for (auto& e : out) e = {t(rng), p(rng)};
  return out;
}

void randomize(ParamStore& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& [name, p] : store)
    for (double& x : p.value.data()) x = d(rng);
}

// Widths shared by the training, hierarchy and determinism checks.
EconConfig small_econ(std::uint64_t seed) {
  EconConfig cfg;
  cfg.seed = seed;
  cfg.belief.embed_dim = 16;
  cfg.belief.belief_dim = 8;
  cfg.belief.hidden_dim = 16;
  cfg.belief.q_hidden = 16;
  cfg.belief.window = 3;
  cfg.belief.grid = 3;
  cfg.encoder.model_dim = 16;
  cfg.encoder.ff_dim = 32;
  cfg.encoder.heads = 2;
  cfg.mixing.heads = 2;
  cfg.mixing.attn_dim = 8;
  cfg.mixing.hidden = 16;
  cfg.buffer = 8;
  cfg.batch = 4;
  cfg.update_interval = 2;
  cfg.resolve();
  return cfg;
}

MockConfig small_mock(const EconConfig& cfg) {
  MockConfig m;
  m.embed_dim = cfg.belief.embed_dim;
  m.bounds = cfg.belief.bounds;
  return m;
}

const std::vector<Question> kQuestions{{"What is 17 + 25?", "42"}, {"What is 9 * 9?", "81"}};

// 1 ---------------------------------------------------------------------

Verdict check_monotonic_mixing() {
  Verdict v;
  EconConfig cfg;
  cfg.resolve();
  std::mt19937_64 rng(101);
  double min_d = std::numeric_limits<double>::infinity();
  std::size_t violations = 0, samples = 0;
  for (int draw = 0; draw < 100; ++draw) {
    MixingNet net(cfg.mixing, rng);
    randomize(net.params(), rng);
    project_nonnegative(net.params());
    const auto rep = check_monotonicity(net, cfg.belief.bounds, 100, rng);
    min_d = std::min(min_d, rep.min_derivative);
    violations += rep.violations;
    samples += rep.samples;
  }
  v.expect(samples == 100 * 100, fmt::format("{} samples", samples));
  v.expect(violations == 0, fmt::format("{} negative derivatives", violations));
  v.expect(min_d >= -1e-8, fmt::format("min derivative {:.3g}", min_d));
  v.note(fmt::format("100 draws x 100 inputs x {} agents, min dQtot/dQi {:.3g}", cfg.agents, min_d));
  return v;
}

// 2 ---------------------------------------------------------------------

void expect_grad(Verdict& v, const std::string& loss, const GradCheckReport& rep) {
  v.note(fmt::format("{} {:.2e} over {}", loss, rep.max_rel_error, rep.checked));
  v.expect(rep.max_rel_error < 1e-4,
           fmt::format("{} at {}[{}]: {:.6g} vs {:.6g}", loss, rep.worst_param, rep.worst_index, rep.worst_analytic,
                       rep.worst_numeric));
}

Observation random_obs(const BeliefNetConfig& c, std::mt19937_64& rng) {
  return {uniform_vec(c.embed_dim, rng), uniform_vec(c.embed_dim, rng), uniform_vec(c.belief_dim, rng)};
}

Transition random_transition(const BeliefNetConfig& c, std::mt19937_64& rng, bool terminal) {
  Transition t;
  t.trajectory = Trajectory(c.window);
  for (int k = 0; k < 2; ++k) t.trajectory.push({random_actions(1, c.bounds, rng)[0], random_obs(c, rng)});
  t.observation = random_obs(c, rng);
  t.action = random_actions(1, c.bounds, rng)[0];
  t.reward = uniform_vec(1, rng, 0.0, 1.0)[0];
  t.next_trajectory = t.trajectory;
  t.next_trajectory.push({t.action, t.observation});
  t.next_observation = random_obs(c, rng);
  t.terminal = terminal;
  return t;
}

MixingSample random_sample(const MixingConfig& c, const ActionBounds& b, std::mt19937_64& rng, bool terminal) {
  MixingSample s;
  s.local_q = uniform_vec(c.agents, rng);
  s.embeddings = random_actions(c.agents, b, rng);
  s.group = uniform_vec(c.group_dim, rng);
  s.r_tot = uniform_vec(1, rng, 0.0, 1.0)[0];
  s.next_max_q = uniform_vec(c.agents, rng);
  s.next_embeddings = random_actions(c.agents, b, rng);
  s.next_group = uniform_vec(c.group_dim, rng);
  s.final_output = uniform_vec(c.feature_dim, rng);
  s.terminal = terminal;
  return s;
}

Verdict check_gradients() {
  Verdict v;
  std::mt19937_64 rng(202);
  const ActionBounds bounds;

  {
    BeliefNetConfig c;
    c.embed_dim = 32;
    c.belief_dim = 16;
    c.hidden_dim = 32;
    c.q_hidden = 32;
    c.window = 3;
    c.grid = 5;
    BeliefNet net(c, rng);
    std::vector<Transition> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_transition(c, rng, i == 3));
    const auto targets = net.td_targets(batch, 0.9);
    expect_grad(v, "L_TD", finite_diff_check([&](Tape& t) { return net.td_loss(t, batch, targets); }, net.params()));
  }

  EncoderConfig ec;
  ec.belief_dim = 8;
  ec.model_dim = 16;
  ec.heads = 2;
  ec.blocks = 2;
  ec.ff_dim = 32;
  MixingConfig mc;
  mc.agents = 3;
  mc.heads = 2;
  mc.attn_dim = 8;
  mc.group_dim = ec.model_dim;
  mc.feature_dim = 16;
  mc.hidden = 16;
  const MixingLossConfig lc;

  {
    BeliefEncoder enc(ec, rng);
    MixingNet net(mc, rng);
    std::vector<MixingSample> batch{random_sample(mc, bounds, rng, false), random_sample(mc, bounds, rng, true)};
    std::vector<Tensor> beliefs;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      std::vector<std::vector<double>> rows;
      for (std::size_t i = 0; i < mc.agents; ++i) rows.push_back(uniform_vec(ec.belief_dim, rng));
      beliefs.push_back(stack_rows(rows));
    }
    const double lambda_e = 0.1, local_sum = 0.7;
    auto loss = [&](Tape& t) {
      std::vector<Var> groups;
      for (const auto& b : beliefs) groups.push_back(enc.encode(t, t.constant(b), Grad::kTrack));
      return t.add_scalar(mixing_loss(t, net, batch, lc, Grad::kFreeze, groups).td, lambda_e * local_sum);
    };
    expect_grad(v, "L_e", finite_diff_check(loss, enc.params()));
  }

  {
    MixingConfig wide = mc;
    wide.attn_dim = 8;
    wide.group_dim = wide.feature_dim = wide.hidden = 64;
    MixingNet net(wide, rng);
    std::vector<MixingSample> batch{random_sample(wide, bounds, rng, false), random_sample(wide, bounds, rng, true)};
    auto part = [&](auto pick) { return [&, pick](Tape& t) { return pick(mixing_loss(t, net, batch, lc, Grad::kTrack)); }; };
    expect_grad(v, "L_mix", finite_diff_check(part([](const MixingLoss& l) { return l.total; }), net.params()));
    expect_grad(v, "L_SD", finite_diff_check(part([](const MixingLoss& l) { return l.sd; }), net.params()));
    expect_grad(v, "consistency",
                finite_diff_check(part([](const MixingLoss& l) { return l.consistency; }), net.params()));
  }

  {
    RewardWeights w;
    w.alpha = project_to_simplex({uniform_vec(1, rng)[0], uniform_vec(1, rng)[0], uniform_vec(1, rng)[0]});
    std::vector<std::array<double, 3>> comps;
    std::vector<double> expected;
    for (int i = 0; i < 4; ++i) {
      const auto c = uniform_vec(3, rng);
      comps.push_back({c[0], c[1], c[2]});
      expected.push_back(uniform_vec(1, rng)[0]);
    }
    // Off the simplex blend() refuses the weights, so the discrepancy is
    // written out for the perturbed points.
    auto fn = [&](std::span<const double> a) {
      double loss = 0.0;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const double d = a[0] * comps[i][0] + a[1] * comps[i][1] + a[2] * comps[i][2] - expected[i];
        loss += d * d;
      }
      return loss;
    };
    const std::vector<double> x(w.alpha.begin(), w.alpha.end());
    v.expect(std::abs(fn(x) - reward_discrepancy(w, comps, expected)) < 1e-12, "L_dr value");
    const auto g = reward_discrepancy_grad(w, comps, expected);
    expect_grad(v, "L_dr", finite_diff_check(fn, x, std::vector<double>(g.begin(), g.end())));
  }
  return v;
}

// 3 ---------------------------------------------------------------------

Verdict check_bne(const CheckOptions& opt) {
  Verdict v;
  const auto game = load_game((fs::path(opt.data_dir) / "games" / "bos_two_type.game").string());
  const GameRun run = run_learner(game, LearnerKind::kEcon, 5000, 3);
  const auto exp = exploitability(game, run.final_policy);
  v.expect(exp.max_gain <= 0.05, fmt::format("learner exploitability {:.4g}", exp.max_gain));
  const BneResult oracle = brute_force_bne(game, 0.01);
  v.expect(oracle.within_tolerance, fmt::format("oracle certificate {:.4g} > {:.4g}", oracle.certificate,
                                                oracle.tolerance));
  v.note(fmt::format("learner exploitability {:.4g} after 5000 steps; oracle certificate {:.3g} (tol {:.3g}, {} profiles)",
                     exp.max_gain, oracle.certificate, oracle.tolerance, oracle.evaluated));
  return v;
}

// 4 ---------------------------------------------------------------------

Verdict check_regret(const CheckOptions& opt) {
  Verdict v;
  const auto game = load_game((fs::path(opt.data_dir) / "games" / "matching_pennies.game").string());
  std::string econ_b, debate_b;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const RegretFit e = fit_regret_exponent(run_learner(game, LearnerKind::kEcon, 10000, seed).trace.total);
    const RegretFit d = fit_regret_exponent(run_learner(game, LearnerKind::kDebate, 10000, seed).trace.total);
    v.expect(e.b <= 0.8, fmt::format("econ seed {} b={:.3f}", seed, e.b));
    v.expect(d.b >= 0.95, fmt::format("debate seed {} b={:.3f}", seed, d.b));
    econ_b += fmt::format("{}{:.3f}", seed > 1 ? "," : "", e.b);
    debate_b += fmt::format("{}{:.3f}", seed > 1 ? "," : "", d.b);
  }
  v.note("econ b " + econ_b);
  v.note("debate b " + debate_b);
  return v;
}

// 5 ---------------------------------------------------------------------

Verdict check_reward_invariants() {
  Verdict v;
  std::mt19937_64 rng(505);
  const Evaluator ev = mock_evaluator();
  const std::vector<std::string> words{"answer: 42", "so answer: 81", "we add", "answer: 7 then", "", "x y z"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RewardWeights w;
  std::size_t bad_reward = 0, bad_simplex = 0;
  double worst = 0.0;
  for (int cycle = 0; cycle < 100000; ++cycle) {
    const double r_max = 0.1 + 4.9 * unit(rng);
    const double scale = std::exp(6.0 * unit(rng) - 3.0);
    std::vector<std::array<double, 3>> comps;
    std::vector<double> expected;
    std::vector<std::string> texts{words[pick(rng)], words[pick(rng)], words[pick(rng)]};
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto u = uniform_vec(4, rng, -scale, scale);
      auto c = uniform_vec(4, rng, -scale, scale);
      std::vector<std::string> peers;
      for (std::size_t j = 0; j < texts.size(); ++j)
        if (j != i) peers.push_back(texts[j]);
      const std::array<double, 3> comp{reward_action_likelihood(u, c, r_max),
                                       reward_task_specific(texts[i], words[pick(rng)], ev, r_max),
                                       reward_collab(texts[i], peers, ev, r_max)};
      const double r = blend(comp, w);
      worst = std::max(worst, std::abs(r) / r_max);
      if (std::abs(r) > r_max) ++bad_reward;
      comps.push_back(comp);
      expected.push_back((2.0 * unit(rng) - 1.0) * r_max);
    }
    w = update_reward_weights(w, comps, expected, 0.001 + unit(rng));
    const double sum = w.alpha[0] + w.alpha[1] + w.alpha[2];
    if (std::abs(sum - 1.0) > 1e-9 || *std::min_element(w.alpha.begin(), w.alpha.end()) < 0.0) ++bad_simplex;
  }
  v.expect(bad_reward == 0, fmt::format("{} rewards beyond R_max", bad_reward));
  v.expect(bad_simplex == 0, fmt::format("{} weight vectors off the simplex", bad_simplex));
  v.note(fmt::format("1e5 cycles, max |r|/R_max {:.6f}, final alpha ({:.3f}, {:.3f}, {:.3f})", worst, w.alpha[0],
                     w.alpha[1], w.alpha[2]));
  return v;
}

// 6 ---------------------------------------------------------------------

Verdict check_early_stopping() {
  Verdict v;
  const EarlyStopConfig cfg;  // 0.01 / 0.7 / 1e-4
  v.expect(cfg.eps_c == 0.01 && cfg.r_threshold == 0.7 && cfg.eps_l == 1e-4, "default thresholds");
  std::size_t fired = 0;
  for (int mask = 0; mask < 8; ++mask) {
    const bool c = mask & 1, r = mask & 2, l = mask & 4;
    const StopSignals s{c ? 0.005 : 0.05, r ? 0.8 : 0.6, l ? 5e-5 : 5e-3, true};
    const bool all = c && r && l;
    for (std::size_t patience : {1, 3, 5}) {
      EarlyStopConfig pc = cfg;
      pc.patience = patience;
      EarlyStopper stopper(pc);
      std::vector<StopSignals> history;
      for (std::size_t e = 1; e <= patience; ++e) {
        history.push_back(s);
        const StopDecision d = stopper.update(s);
        const bool expect_stop = all && e == patience;
        v.expect(d.stop == expect_stop, fmt::format("mask {} patience {} episode {}", mask, patience, e));
        v.expect(check_early_stop(history, pc).stop == expect_stop, fmt::format("batch form mask {}", mask));
        v.expect(d.criteria_met == all, fmt::format("criteria mask {}", mask));
      }
      if (all && patience > 1) {
        // A failing episode resets the streak.
        EarlyStopper broken(pc);
        for (std::size_t e = 1; e < patience; ++e) broken.update(s);
        broken.update({0.05, 0.8, 5e-5, true});
        v.expect(!broken.update(s).stop, "streak reset");
      }
      fired += all;
    }
  }
  v.note(fmt::format("8 combinations x patience 1/3/5, stop fired in {} runs", fired));
  return v;
}

// 7 ---------------------------------------------------------------------

Verdict check_training_descent() {
  Verdict v;
  EconConfig cfg = small_econ(7);
  cfg.episodes = 100;
  cfg.update_interval = 1;
  cfg.buffer = 32;
  cfg.batch = 8;
  // Run every episode instead of stopping on a plateau.
  cfg.stop.patience = 1000;
  MockBackend be(split_seed(cfg.seed).generation, small_mock(cfg));
  EconSystem sys(cfg);
  const TrainResult res = train(sys, kQuestions, {&be, std::vector<Backend*>(cfg.agents, &be)});
  v.expect(res.episodes.size() == 100, fmt::format("{} episodes", res.episodes.size()));
  v.expect(res.checksum_checks == res.episodes.size(),
           fmt::format("{} inference checksum checks", res.checksum_checks));
  std::vector<double> td;
  for (const auto& rec : res.episodes) {
    if (!rec.losses.valid || rec.losses.local.empty()) continue;
    double s = 0.0;
    for (double l : rec.losses.local) s += l;
    td.push_back(s / static_cast<double>(rec.losses.local.size()));
  }
  v.expect(td.size() >= 20, fmt::format("{} episodes with a loss", td.size()));
  if (td.size() >= 20) {
    double first = 0.0, last = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
      first += td[k] / 10.0;
      last += td[td.size() - 10 + k] / 10.0;
    }
    v.expect(last <= 0.5 * first, fmt::format("last/first = {:.3f}", last / first));
    v.note(fmt::format("mean local TD first 10 {:.4g}, last 10 {:.4g} (ratio {:.3f}); {} checksum checks", first,
                       last, last / first, res.checksum_checks));
  }
  return v;
}

// 8 ---------------------------------------------------------------------

class ConstantBackend : public Backend {
 public:
  explicit ConstantBackend(std::size_t dim) : dim_(dim) {}
  Utterance generate(const GenerationRequest& req) override {
    Utterance u;
    u.text = req.role == Role::kCoordinatorStrategy ? "strategy: add carefully" : "we add so answer: 42";
    u.token_count = count_tokens(u.text);
    u.embedding = embed_text(u.text, dim_);
    return u;
  }
  std::vector<double> embed(const std::string& text) override { return embed_text(text, dim_); }

 private:
  std::size_t dim_;
};

HierBackends hier_uniform(Backend& b, std::size_t agents, std::size_t k) {
  return {&b, std::vector<Backend*>(k, &b), std::vector<Backend*>(agents, &b)};
}

Verdict check_hierarchy() {
  Verdict v;
  HierConfig hc;
  hc.agents = 9;
  hc.clusters = 3;
  hc.base = small_econ(5);
  hc.stop.patience = 1000;
  const EconConfig& base = hc.base;
  MockBackend be(21, small_mock(base));

  HierSystem sys(hc);
  const HierResult res = hier_train(sys, kQuestions, hier_uniform(be, 9, 3), 8);
  std::size_t updates = 0;
  const std::vector<std::string> order{"cluster0", "cluster1", "cluster2", "global"};
  for (const auto& r : res.rounds) {
    v.expect(r.inference_overlapped && r.inference_threads == 3,
             fmt::format("round {} ran on {} threads", r.round, r.inference_threads));
    v.expect(r.cluster_rewards.size() == 3, "three cluster rewards");
    for (std::size_t k = 0; k < r.cluster_rewards.size(); ++k) {
      const double rk = r.cluster_rewards[k];
      v.expect(rk >= 0.0 && rk <= 1.0, fmt::format("R_{} = {}", k, rk));
      if (r.clusters[k].final_output.valid && r.final_output.valid) {
        const double cos = cosine_sim(r.clusters[k].final_output.embedding, r.final_output.embedding).value;
        v.expect(std::abs(rk - std::clamp(cos, 0.0, 1.0)) < 1e-12, fmt::format("R_{} is not the clipped cosine", k));
      }
    }
    if (r.update && r.update->valid) {
      ++updates;
      v.expect(r.update->order == order, fmt::format("round {} update order", r.round));
    }
  }
  v.expect(res.rounds.size() == 8, "eight rounds");
  v.expect(updates > 0, "no update ran");

  ConstantBackend constant(base.belief.embed_dim);
  HierConfig stable = hc;
  stable.base.explore_sigma = 0.0;
  stable.base.update_interval = 1000;
  stable.stop.patience = 3;
  HierSystem calm(stable);
  const HierResult conv = hier_train(calm, kQuestions, hier_uniform(constant, 9, 3), 60);
  v.expect(conv.stopped, "no convergence under stable outputs");

  EconConfig flat_cfg = small_econ(9);
  flat_cfg.episodes = 8;
  EconSystem flat(flat_cfg);
  const TrainResult fr = train(flat, kQuestions, {&be, {&be, &be, &be}});
  HierConfig one;
  one.agents = 3;
  one.clusters = 1;
  one.base = flat_cfg;
  HierSystem single(one);
  const HierResult hr = hier_train(single, kQuestions, hier_uniform(be, 3, 1), 8);
  bool same = hr.rounds.size() == fr.episodes.size();
  for (std::size_t e = 0; same && e < fr.episodes.size(); ++e)
    same = hr.rounds[e].clusters[0].rewards == fr.episodes[e].rewards;
  v.expect(same, "K=1 rewards differ from flat mode");

  v.note(fmt::format("{} rounds, {} updates in order cluster0..2,global; converged after {} stable rounds; K=1 "
                     "matches flat over {} episodes",
                     res.rounds.size(), updates, conv.rounds.size(), fr.episodes.size()));
  return v;
}

// 9 ---------------------------------------------------------------------

// Scripted chat responses; /embeddings always answers.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse post(const std::string& path, const std::string&) override {
    std::lock_guard lock(mu_);
    if (path == "/embeddings") return {200, R"({"data":[{"embedding":[0.6,0.8]}]})"};
    const std::size_t i = chat_calls++;
    return i < script_.size() ? script_[i] : script_.back();
  }
  std::size_t chat_calls = 0;

 private:
  std::mutex mu_;
  std::vector<HttpResponse> script_;
};

const HttpResponse kOk{200,
                       R"({"choices":[{"message":{"content":"so answer: 42"}}],"usage":{"completion_tokens":7}})"};
const HttpResponse kBusy{429, "slow down"};

GenerationRequest exec_request(std::uint64_t nonce) {
  GenerationRequest r;
  r.role = Role::kExecution;
  r.query = "What is 17 + 25?";
  r.strategy = "add the numbers";
  r.embedding = PromptEmbedding{0.7, 0.5};
  r.agent = 0;
  r.nonce = nonce;
  return r;
}

std::vector<double> chat_gaps(const CallLog& log) {
  std::vector<double> ts;
  for (const auto& e : log.entries())
    if (e["role"] != "embed") ts.push_back(e["ts"].get<double>());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
  return gaps;
}

Verdict check_api_contract() {
  Verdict v;
  EndpointConfig ep;
  ep.embed_dim = 2;

  {
    VirtualClock clock;
    RateBudget budget({100, 1000000}, clock);
    ScriptedTransport fake({kBusy, kBusy, kBusy, kBusy, kOk});
    CallLog log;
    const Utterance u = http_generate(exec_request(0), ep, budget, fake, clock, &log);
    v.expect(!u.valid && u.text == kInvalidSentinel, "exhausted retries give the sentinel");
    v.expect(fake.chat_calls == 1 + ep.max_retries && ep.max_retries <= 3,
             fmt::format("{} attempts", fake.chat_calls));
    const auto gaps = chat_gaps(log);
    for (double g : gaps) v.expect(g >= 10.0 && g <= 30.0, fmt::format("retry wait {}s", g));
    v.note(fmt::format("{} attempts, waits {}s", fake.chat_calls, fmt::join(gaps, "/")));
  }
  {
    VirtualClock clock;
    RateBudget budget({100, 1000000}, clock);
    ScriptedTransport fake({{503, "busy"}, kOk});
    CallLog log;
    const Utterance u = http_generate(exec_request(0), ep, budget, fake, clock, &log);
    v.expect(u.valid && u.text == "so answer: 42", "recovers after one failure");
  }
  {
    VirtualClock clock;
    const RateLimits limits{8, 400};
    RateBudget budget(limits, clock);
    ScriptedTransport fake({kOk});
    CallLog log;
    HttpBackend backend(ep, budget, fake, clock, &log);
    std::vector<std::function<Utterance()>> jobs;
    for (int i = 0; i < 50; ++i)
      jobs.push_back([&, i] { return backend.generate(exec_request(static_cast<std::uint64_t>(i))); });
    const auto out = run_in_batches(jobs, 50);
    std::size_t valid = 0;
    for (const auto& u : out) valid += u.valid;
    v.expect(valid == 50, fmt::format("{} of 50 valid", valid));
    v.expect(windows_respected(log.dispatches(), limits), "call log exceeds RPM/TPM");
    v.expect(windows_respected(budget.dispatches(), limits), "budget exceeds RPM/TPM");
    v.note(fmt::format("50 concurrent calls under rpm {} / tpm {} over {:.0f} virtual s", limits.rpm, limits.tpm,
                       clock.now()));
  }
  {
    // Executors behind a failing endpoint: sentinel outputs, zero reward.
    EconConfig cfg = small_econ(4);
    MockBackend coord(3, small_mock(cfg));
    VirtualClock clock;
    RateBudget budget({1000, 10000000}, clock);
    ScriptedTransport down({{500, "down"}});
    EndpointConfig wide = ep;
    wide.embed_dim = cfg.belief.embed_dim;
    HttpBackend dead(wide, budget, down, clock);
    EconSystem sys(cfg);
    const EpisodeRecord rec = sys.run_inference(kQuestions[0], {&coord, {&dead, &dead, &dead}}, true);
    for (std::size_t i = 0; i < rec.utterances.size(); ++i) {
      v.expect(rec.utterances[i].text == kInvalidSentinel, fmt::format("agent {} output", i));
      v.expect(rec.rewards[i] == 0.0, fmt::format("agent {} reward {}", i, rec.rewards[i]));
    }
  }
  {
    std::mt19937_64 rng(909);
    std::uniform_int_distribution<std::size_t> len(0, 200);
    auto words = [](std::size_t n) { return join_tokens(std::vector<std::string>(n, "tok")); };
    std::size_t longest = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      const auto out = truncate_strategy(words(len(rng)), [&] { return words(len(rng)); });
      longest = std::max(longest, count_tokens(out.text));
    }
    v.expect(longest <= 70, fmt::format("strategy of {} tokens", longest));

    EconConfig cfg = small_econ(6);
    MockConfig verbose = small_mock(cfg);
    verbose.strategy_tokens = 120;
    MockBackend be(8, verbose);
    EconSystem sys(cfg);
    std::size_t cut = 0;
    for (std::size_t e = 0; e < 5; ++e) {
      const EpisodeRecord rec = sys.run_inference(kQuestions[e % 2], {&be, {&be, &be, &be}}, true);
      longest = std::max(longest, count_tokens(rec.strategy));
      cut += rec.strategy_cut || rec.strategy_regenerated;
      sys.commit(rec);
    }
    v.expect(longest <= 70, fmt::format("coordinator strategy of {} tokens", longest));
    v.expect(cut > 0, "overlong strategies were not handled");
    v.note(fmt::format("longest strategy after truncation {} tokens", longest));
  }
  return v;
}

// 10 --------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_run(std::uint64_t seed, std::size_t agents, std::size_t episodes) {
  RunConfig cfg;
  const std::vector<std::pair<std::string, std::string>> keys{
      {"agents", std::to_string(agents)}, {"episodes", std::to_string(episodes)}, {"seed", std::to_string(seed)},
      {"embed_dim", "16"}, {"belief_dim", "8"}, {"hidden_dim", "16"}, {"q_hidden", "16"}, {"window", "3"},
      {"grid", "3"}, {"model_dim", "16"}, {"heads", "2"}, {"ff_dim", "32"}, {"mixing_heads", "2"},
      {"attn_dim", "8"}, {"mixing_hidden", "16"}, {"buffer", "8"}, {"batch", "4"}, {"update_interval", "2"}};
  for (const auto& [k, val] : keys) set_config_value(cfg, k, val);
  cfg.econ.resolve();
  cfg.econ.validate();
  return cfg;
}

// Runs `first` into <scratch>/<name>-a, replays its manifest into -b and
// compares `file` byte for byte.
void expect_replay(Verdict& v, const std::string& scratch, const std::string& name, const std::string& file,
                   const std::function<void(const std::string&)>& first) {
  const std::string a = (fs::path(scratch) / (name + "-a")).string();
  const std::string b = (fs::path(scratch) / (name + "-b")).string();
  fs::remove_all(a);
  fs::remove_all(b);
  first(a);
  const Manifest m = read_manifest((fs::path(a) / "manifest.json").string());
  rerun_manifest(m, b);
  const Manifest m2 = read_manifest((fs::path(b) / "manifest.json").string());
  const std::string fa = slurp((fs::path(a) / file).string()), fb = slurp((fs::path(b) / file).string());
  v.expect(!fa.empty() && fa == fb, name + " " + file + " differs");
  v.expect(m.outputs == m2.outputs, name + " output digests differ");
  v.note(fmt::format("{} {} {} bytes identical", name, file, fa.size()));
}

Verdict check_determinism(const CheckOptions& opt) {
  Verdict v;
  const std::string scratch = opt.scratch_dir.empty() ? (fs::temp_directory_path() / "econ-check").string()
                                                      : opt.scratch_dir;
  fs::create_directories(scratch);
  const RunConfig flat = small_run(12, 3, 10);
  expect_replay(v, scratch, "train", "metrics.csv", [&](const std::string& dir) { run_train(flat, dir); });
  const std::string ckpt = (fs::path(scratch) / "train-a" / "checkpoint.ckpt").string();
  expect_replay(v, scratch, "eval", "metrics.csv", [&](const std::string& dir) { run_eval(flat, ckpt, dir); });
  RunConfig hier = small_run(13, 6, 4);
  set_config_value(hier, "clusters", "2");
  expect_replay(v, scratch, "hier", "metrics.csv", [&](const std::string& dir) { run_hier(hier, dir); });
  GameLabOptions game;
  game.game = (fs::path(opt.data_dir) / "games" / "matching_pennies.game").string();
  game.steps = 2000;
  game.seed = 14;
  expect_replay(v, scratch, "game-lab", "regret.csv", [&](const std::string& dir) { run_game_lab(game, dir); });
  return v;
}

struct CheckSpec {
  const char* name;
  std::function<Verdict(const CheckOptions&)> run;
};

const std::vector<CheckSpec>& specs() {
  static const std::vector<CheckSpec> s{
      {"mixing-monotonicity", [](const CheckOptions&) { return check_monotonic_mixing(); }},
      {"gradient-correctness", [](const CheckOptions&) { return check_gradients(); }},
      {"bne-convergence", check_bne},
      {"regret-separation", check_regret},
      {"reward-invariants", [](const CheckOptions&) { return check_reward_invariants(); }},
      {"early-stopping", [](const CheckOptions&) { return check_early_stopping(); }},
      {"training-descent", [](const CheckOptions&) { return check_training_descent(); }},
      {"hierarchy", [](const CheckOptions&) { return check_hierarchy(); }},
      {"api-contract", [](const CheckOptions&) { return check_api_contract(); }},
      {"determinism", check_determinism},
  };
  return s;
}

}  // namespace

CheckResult run_check(int id, const CheckOptions& opt) {
  if (id < 1 || id > kCheckCount) throw std::invalid_argument(fmt::format("no check {}", id));
  const CheckSpec& spec = specs()[static_cast<std::size_t>(id - 1)];
  CheckResult r;
  r.id = id;
  r.name = spec.name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Verdict v = spec.run(opt);
    r.passed = v.passed();
    r.detail = v.detail();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<CheckResult> run_acceptance_checks(const CheckOptions& opt,
                                               const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  for (int id = 1; id <= kCheckCount; ++id) {
    out.push_back(run_check(id, opt));
    if (on_result) on_result(out.back());
  }
  return out;
}

std::string format_result(const CheckResult& r) {
  return fmt::format("{} {} {} ({:.1f}s): {}", r.passed ? "PASS" : "FAIL", r.id, r.name, r.seconds, r.detail);
}

}  // namespace econ
