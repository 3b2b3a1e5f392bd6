#include <atomic>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "econ/mixing/mixing_net.hpp"
#include "econ/numeric/tensor.hpp"
#include "econ/orchestrator/early_stop.hpp"
#include "econ/orchestrator/orchestrator.hpp"

using namespace econ;

namespace {

EconConfig small_config(std::uint64_t seed = 3) {
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
  return cfg;
}

MockConfig small_mock() {
  MockConfig m;
  m.embed_dim = 16;
  return m;
}

const std::vector<Question> kQuestions{{"What is 17 + 25?", "42"}, {"What is 9 * 9?", "81"}};

// Wraps a backend and forces chosen agents (or everyone) to fail.
class FlakyBackend : public Backend {
 public:
  FlakyBackend(Backend& inner, int bad_agent, bool throw_instead = false)
      : inner_(inner), bad_(bad_agent), throw_(throw_instead) {}
  Utterance generate(const GenerationRequest& req) override {
    if (req.role == Role::kExecution && (bad_ == -2 || req.agent == bad_)) {
      if (throw_) throw std::runtime_error("transport down");
      return Utterance::invalid(16);
    }
    return inner_.generate(req);
  }
  std::vector<double> embed(const std::string& text) override { return inner_.embed(text); }

 private:
  Backend& inner_;
  int bad_;
  bool throw_;
};

Backends uniform(Backend& b, std::size_t n = 3) { return {&b, std::vector<Backend*>(n, &b)}; }

// Runs `episodes` inference/commit cycles without optimization.
void fill(EconSystem& sys, const Backends& b, std::size_t episodes) {
  for (std::size_t k = 0; k < episodes; ++k) sys.commit(sys.run_inference(kQuestions[k % 2], b, true));
}

}  // namespace

TEST_CASE("early stop examples") {
  const EarlyStopConfig cfg;  // 0.01 / 0.7 / 1e-4, patience 5
  const StopSignals good{0.005, 0.8, 5e-5, true};
  std::vector<StopSignals> h(5, good);
  CHECK(check_early_stop(h, cfg).stop);

  auto low = h;
  low.back().mean_reward = 0.69;
  const auto d = check_early_stop(low, cfg);
  CHECK_FALSE(d.stop);
  REQUIRE(d.reasons.size() == 1);
  CHECK(d.reasons[0].find("mean reward") != std::string::npos);

  std::vector<StopSignals> broken(4, good);
  broken.push_back({0.5, 0.8, 5e-5, true});
  CHECK_FALSE(check_early_stop(broken, cfg).stop);
  CHECK_FALSE(check_early_stop(std::vector<StopSignals>(4, good), cfg).stop);

  std::vector<StopSignals> invalid(5, good);
  invalid[2].valid = false;
  CHECK_FALSE(check_early_stop(invalid, cfg).stop);
}

TEST_CASE("early stop fires only on the conjunction") {
  const EarlyStopConfig cfg{0.01, 0.7, 1e-4, 3};
  for (int mask = 0; mask < 8; ++mask) {
    const StopSignals s{(mask & 1) ? 0.001 : 0.02, (mask & 2) ? 0.9 : 0.5, (mask & 4) ? -1e-5 : 2e-4, true};
    const auto d = check_early_stop(std::vector<StopSignals>(3, s), cfg);
    CAPTURE(mask);
    CHECK(d.stop == (mask == 7));
    CHECK(d.criteria_met == (mask == 7));
    CHECK(d.reasons.size() == (mask == 7 ? 1u : static_cast<std::size_t>(3 - __builtin_popcount(mask))));
  }
  CHECK_THROWS_AS(EarlyStopper(EarlyStopConfig{0.0, 0.7, 1e-4, 5}), std::invalid_argument);
  CHECK_THROWS_AS(EarlyStopper(EarlyStopConfig{0.01, 0.7, 1e-4, 0}), std::invalid_argument);
}

TEST_CASE("config resolution and validation") {
  EconConfig cfg = small_config();
  cfg.resolve();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.mixing.feature_dim == 16);
  CHECK(cfg.encoder.belief_dim == 8);
  auto bad = cfg;
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.batch = 9;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const SeedPlan s = split_seed(7);
  CHECK(s.init == 7);
  CHECK(s.generation != s.exploration);
}

TEST_CASE("run_inference shape, determinism and purity") {
  MockBackend be(11, small_mock());
  EconSystem a(small_config()), b(small_config());
  const auto before = a.checksum();
  const EpisodeRecord ra = a.run_inference(kQuestions[0], uniform(be), true);
  const EpisodeRecord rb = b.run_inference(kQuestions[0], uniform(be), true);
  CHECK(a.checksum() == before);
  CHECK(to_json(ra).dump() == to_json(rb).dump());
  CHECK(ra.utterances.size() == 3);
  CHECK(ra.rewards.size() == 3);
  CHECK(ra.final_output.valid);
  CHECK_FALSE(ra.degenerate);
  for (const auto& e : ra.actions) CHECK(small_config().belief.bounds.contains(e));
  for (double r : ra.rewards) CHECK(std::abs(r) <= 1.0);
  CHECK(ra.mean_reward == doctest::Approx((ra.rewards[0] + ra.rewards[1] + ra.rewards[2]) / 3));
  CHECK(ra.r_tot == ra.mean_reward);

  // Without exploration the actions are the belief heads' outputs.
  const EpisodeRecord greedy = a.run_inference(kQuestions[0], uniform(be), false);
  for (std::size_t i = 0; i < 3; ++i) CHECK(greedy.actions[i] == a.net(i).embed_prompt(greedy.beliefs[i]));
}

TEST_CASE("invalid agents") {
  MockBackend be(11, small_mock());
  EconSystem sys(small_config());
  const EpisodeRecord clean = sys.run_inference(kQuestions[0], uniform(be), true);

  SUBCASE("one agent invalid") {
    FlakyBackend flaky(be, 1);
    Backends b{&be, {&be, &flaky, &be}};
    const EpisodeRecord rec = sys.run_inference(kQuestions[0], b, true);
    CHECK_FALSE(rec.utterances[1].valid);
    CHECK(rec.rewards[1] == 0.0);
    CHECK(rec.utterances[0].text == clean.utterances[0].text);
    CHECK(rec.utterances[2].text == clean.utterances[2].text);
    CHECK(rec.utterances[0].valid);
    CHECK(rec.rewards[0] == doctest::Approx(blend(rec.breakdowns[0].components(), sys.alpha())));
    CHECK_FALSE(rec.degenerate);
  }
  SUBCASE("a throwing backend becomes invalid") {
    FlakyBackend flaky(be, 0, true);
    Backends b{&be, {&flaky, &be, &be}};
    const EpisodeRecord rec = sys.run_inference(kQuestions[0], b, true);
    CHECK(rec.utterances[0].text == kInvalidSentinel);
    CHECK(rec.rewards[0] == 0.0);
  }
  SUBCASE("all agents invalid") {
    FlakyBackend flaky(be, -2);
    const EpisodeRecord rec = sys.run_inference(kQuestions[0], {&be, {&flaky, &flaky, &flaky}}, true);
    CHECK(rec.degenerate);
    CHECK(rec.final_output.text == kInvalidSentinel);
    for (double r : rec.rewards) CHECK(r == 0.0);
  }
}

TEST_CASE("run_inference contracts") {
  MockBackend be(11, small_mock());
  EconSystem sys(small_config());
  CHECK_THROWS_AS(sys.run_inference(kQuestions[0], uniform(be, 2), true), ContractViolation);
  MockBackend wide(11);  // 256-wide embeddings
  CHECK_THROWS_AS(sys.run_inference(kQuestions[0], uniform(wide), true), ShapeError);
}

TEST_CASE("commit links consecutive episodes") {
  MockBackend be(11, small_mock());
  EconSystem sys(small_config());
  const Backends b = uniform(be);
  const EpisodeRecord r0 = sys.run_inference(kQuestions[0], b, true);
  sys.commit(r0);
  CHECK(sys.buffer().empty());
  CHECK(sys.trajectories()[0].size() == 1);
  const EpisodeRecord r1 = sys.run_inference(kQuestions[1], b, true);
  CHECK(r1.observations[0].prior_belief == r0.beliefs[0]);
  sys.commit(r1);
  REQUIRE(sys.buffer().size() == 1);
  const JointTransition& jt = sys.buffer()[0];
  CHECK(jt.agents[2].observation == r0.observations[2]);
  CHECK(jt.agents[2].next_observation == r1.observations[2]);
  CHECK(jt.agents[2].action == r0.actions[2]);
  CHECK(jt.agents[2].reward == r0.rewards[2]);
  CHECK(jt.agents[2].next_trajectory.size() == jt.agents[2].trajectory.size() + 1);
  CHECK(jt.r_tot == r0.r_tot);

  fill(sys, b, 20);
  CHECK(sys.buffer().size() == 8);
  CHECK(sys.trajectories()[1].size() == 3);
  CHECK(sys.episode() == 22);
}

TEST_CASE("run_optimization") {
  MockBackend be(11, small_mock());
  EconSystem sys(small_config());
  const Backends b = uniform(be);

  SUBCASE("skips on a short buffer without touching state") {
    fill(sys, b, 3);
    const auto before = sys.checksum();
    const auto alpha = sys.alpha();
    const LossReport rep = sys.run_optimization();
    CHECK_FALSE(rep.valid);
    CHECK(rep.notice.find("skipped") != std::string::npos);
    CHECK(sys.checksum() == before);
    CHECK(sys.alpha() == alpha);
  }
  SUBCASE("one step per family, bottom-up, then projection") {
    fill(sys, b, 6);
    const auto before = sys.checksum();
    const LossReport rep = sys.run_optimization();
    REQUIRE(rep.valid);
    CHECK(sys.checksum() != before);
    const std::vector<std::string> order{"belief0", "belief1", "belief2", "encoder", "mixing", "targets", "alpha"};
    CHECK(rep.order == order);
    CHECK(rep.batch == 4);
    double local = 0;
    for (double l : rep.local) local += l;
    CHECK(rep.total == local + rep.encoder + rep.mixing);
    CHECK(rep.encoder == rep.td_tot + 0.1 * local);
    for (const auto& [name, p] : sys.mixing().params())
      if (MixingNet::is_q_path_weight(name))
        for (double w : p.value.data()) CHECK(w >= 0.0);
    std::mt19937_64 rng(5);
    CHECK(check_monotonicity(sys.mixing(), small_config().belief.bounds, 50, rng).passed());
    const auto& a = sys.alpha().alpha;
    CHECK(a[0] + a[1] + a[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("identical batches with a tiny step descend") {
    EconConfig cfg = small_config();
    cfg.lr = 1e-5;
    cfg.lr_coord = 1e-5;
    EconSystem tiny(cfg);
    fill(tiny, b, 6);
    const std::vector<JointTransition> batch(tiny.buffer().items().begin(), tiny.buffer().items().end());
    const LossReport first = tiny.run_optimization(batch);
    const LossReport second = tiny.run_optimization(batch);
    CHECK(second.total <= first.total);
  }
}

TEST_CASE("evaluate_losses is pure and consistent") {
  MockBackend be(11, small_mock());
  EconSystem sys(small_config());
  CHECK_FALSE(sys.evaluate_losses().valid);
  fill(sys, uniform(be), 5);
  const auto before = sys.checksum();
  const LossReport rep = sys.evaluate_losses();
  CHECK(sys.checksum() == before);
  REQUIRE(rep.valid);
  CHECK(rep.batch == 4);
  double local = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    local += rep.local[i];
    CHECK(rep.local[i] >= 0.0);
  }
  CHECK(rep.total == local + rep.encoder + rep.mixing);
  CHECK(rep.mixing == doctest::Approx(rep.td_tot + rep.sd + rep.consistency).epsilon(1e-12));
}

TEST_CASE("train loop") {
  MockBackend be(11, small_mock());

  SUBCASE("episode cap") {
    EconConfig cfg = small_config();
    cfg.episodes = 5;
    EconSystem sys(cfg);
    std::size_t calls = 0;
    const TrainResult res = train(sys, kQuestions, uniform(be), [&](const EpisodeRecord&) { ++calls; });
    CHECK(res.episodes.size() == 5);
    CHECK(calls == 5);
    CHECK_FALSE(res.stopped);
    CHECK(res.checksum_checks == 5);
    CHECK(res.episodes[1].update.has_value());
    CHECK_FALSE(res.episodes[2].update.has_value());
  }
  SUBCASE("stop firing at episode 3") {
    EconConfig cfg = small_config();
    cfg.episodes = 50;
    cfg.stop = {1e9, 1e-9, 1e9, 1};
    EconSystem sys(cfg);
    const TrainResult res = train(sys, kQuestions, uniform(be));
    CHECK(res.stopped);
    CHECK(res.episodes.size() == 3);
    CHECK_FALSE(res.stop_reasons.empty());
    CHECK(res.episodes.back().stop.stop);
  }
  SUBCASE("same seed, same log") {
    EconConfig cfg = small_config();
    cfg.episodes = 6;
    EconSystem a(cfg), b(cfg);
    const auto ra = train(a, kQuestions, uniform(be));
    const auto rb = train(b, kQuestions, uniform(be));
    for (std::size_t k = 0; k < 6; ++k) CHECK(to_json(ra.episodes[k]).dump() == to_json(rb.episodes[k]).dump());
    CHECK(a.checksum() == b.checksum());
  }
  SUBCASE("backend failures never stop the loop") {
    EconConfig cfg = small_config();
    cfg.episodes = 4;
    EconSystem sys(cfg);
    FlakyBackend down(be, -2, true);
    const TrainResult res = train(sys, kQuestions, {&be, {&down, &down, &down}});
    CHECK(res.episodes.size() == 4);
    for (const auto& r : res.episodes) CHECK(r.degenerate);
  }
  SUBCASE("max_rounds repeats each question") {
    EconConfig cfg = small_config();
    cfg.episodes = 4;
    cfg.max_rounds = 2;
    EconSystem sys(cfg);
    const TrainResult res = train(sys, kQuestions, uniform(be));
    CHECK(res.episodes[0].question.text == res.episodes[1].question.text);
    CHECK(res.episodes[2].question.text == kQuestions[1].text);
    CHECK(res.episodes[1].round == 1);
  }
}
