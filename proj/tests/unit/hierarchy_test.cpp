#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "econ/hierarchy/hierarchy.hpp"
#include "econ/numeric/math.hpp"
#include "econ/numeric/tensor.hpp"

using namespace econ;

namespace {

EconConfig small_base(std::uint64_t seed = 5) {
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

HierConfig hier_config(std::size_t agents, std::size_t k, std::uint64_t seed = 5) {
  HierConfig h;
  h.agents = agents;
  h.clusters = k;
  h.base = small_base(seed);
  return h;
}

HierBackends uniform(Backend& b, std::size_t agents, std::size_t k) {
  return {&b, std::vector<Backend*>(k, &b), std::vector<Backend*>(agents, &b)};
}

const std::vector<Question> kQuestions{{"What is 17 + 25?", "42"}, {"What is 9 * 9?", "81"}};

// Same text for every request.
class ConstantBackend : public Backend {
 public:
  Utterance generate(const GenerationRequest& req) override {
    Utterance u;
    u.text = req.role == Role::kCoordinatorStrategy ? "strategy: add carefully" : "we add so answer: 42";
    u.token_count = count_tokens(u.text);
    u.embedding = embed_text(u.text, 16);
    return u;
  }
  std::vector<double> embed(const std::string& text) override { return embed_text(text, 16); }
};

class DeadBackend : public Backend {
 public:
  explicit DeadBackend(Backend& inner) : inner_(inner) {}
  Utterance generate(const GenerationRequest& req) override {
    if (req.role == Role::kExecution) return Utterance::invalid(16);
    return inner_.generate(req);
  }
  std::vector<double> embed(const std::string& text) override { return inner_.embed(text); }

 private:
  Backend& inner_;
};

std::vector<std::size_t> sizes(const std::vector<Cluster>& cs) {
  std::vector<std::size_t> out;
  for (const auto& c : cs) out.push_back(c.members.size());
  return out;
}

}  // namespace

TEST_CASE("assign_clusters") {
  CHECK(sizes(assign_clusters(9, 3)) == std::vector<std::size_t>{3, 3, 3});
  CHECK(sizes(assign_clusters(7, 3)) == std::vector<std::size_t>{3, 2, 2});
  const auto one = assign_clusters(4, 1);
  CHECK(one[0].members == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(assign_clusters(7, 3)[1].members == std::vector<std::size_t>{1, 4});
  CHECK_THROWS_AS(assign_clusters(2, 3), ContractViolation);
  CHECK_THROWS_AS(assign_clusters(3, 0), ContractViolation);
  CHECK_THROWS_AS(assign_clusters(9, 2), ContractViolation);

  const ClusterPolicy halves = [](std::size_t n, std::size_t) {
    std::vector<Cluster> cs{{0, {}}, {1, {}}};
    for (std::size_t i = 0; i < n; ++i) cs[i < n / 2 ? 0 : 1].members.push_back(i);
    return cs;
  };
  CHECK(assign_clusters(6, 2, halves)[0].members == std::vector<std::size_t>{0, 1, 2});
  const ClusterPolicy overlap = [](std::size_t, std::size_t) { return std::vector<Cluster>{{0, {0, 1}}, {1, {1, 2}}}; };
  CHECK_THROWS_AS(assign_clusters(3, 2, overlap), ContractViolation);

  for (std::size_t n = 1; n <= 16; ++n)
    for (std::size_t k = (n + 3) / 4; k <= n; ++k) {
      const auto cs = assign_clusters(n, k);
      std::vector<int> seen(n, 0);
      for (const auto& c : cs) {
        CHECK(c.members.size() <= 4);
        for (auto m : c.members) ++seen[m];
      }
      for (int s : seen) CHECK(s == 1);
    }
}

TEST_CASE("run_round") {
  MockBackend be(21, small_mock());
  HierSystem a(hier_config(9, 3)), b(hier_config(9, 3));
  const auto before = a.checksum();
  const HierRound ra = a.run_round(kQuestions[0], uniform(be, 9, 3), true);
  const HierRound rb = b.run_round(kQuestions[0], uniform(be, 9, 3), true);
  CHECK(a.checksum() == before);
  CHECK(ra.cluster_rewards == rb.cluster_rewards);
  CHECK(to_json(ra).dump() == to_json(rb).dump());
  REQUIRE(ra.clusters.size() == 3);
  CHECK(ra.inference_overlapped);
  CHECK(ra.inference_threads == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(ra.clusters[k].utterances.size() == 3);
    const double r = ra.cluster_rewards[k];
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    const double cos = cosine_sim(ra.clusters[k].final_output.embedding, ra.final_output.embedding).value;
    CHECK(r == doctest::Approx(std::clamp(cos, 0.0, 1.0)));
  }
  // Clusters see different agents, so their outputs differ.
  CHECK(ra.clusters[0].utterances[0].text != ra.clusters[1].utterances[0].text);
}

TEST_CASE("run_round with one cluster passes its output through") {
  MockBackend be(21, small_mock());
  HierSystem h(hier_config(3, 1));
  const HierRound r = h.run_round(kQuestions[0], uniform(be, 3, 1), true);
  CHECK(r.final_output.text == r.clusters[0].final_output.text);
  CHECK(r.cluster_rewards[0] == doctest::Approx(1.0));
}

TEST_CASE("fully invalid cluster") {
  MockBackend be(21, small_mock());
  DeadBackend dead(be);
  HierSystem h(hier_config(6, 2));
  HierBackends b = uniform(be, 6, 2);
  for (std::size_t m : h.clusters()[1].members) b.executors[m] = &dead;
  const HierRound r = h.run_round(kQuestions[0], b, true);
  CHECK_FALSE(r.clusters[1].final_output.valid);
  CHECK(r.cluster_rewards[1] == 0.0);
  CHECK(r.cluster_rewards[0] == doctest::Approx(1.0));
}

TEST_CASE("hier_optimize runs bottom-up and keeps the global mixer monotone") {
  MockBackend be(21, small_mock());
  HierSystem h(hier_config(9, 3));
  for (int r = 0; r < 6; ++r) h.commit(h.run_round(kQuestions[r % 2], uniform(be, 9, 3), true));
  const LossReport rep = h.hier_optimize();
  REQUIRE(rep.valid);
  CHECK(rep.order == std::vector<std::string>{"cluster0", "cluster1", "cluster2", "global"});
  CHECK(rep.local.size() == 9);
  std::mt19937_64 rng(3);
  CHECK(check_monotonicity(h.global_mixing(), small_base().belief.bounds, 50, rng).passed());
}

TEST_CASE("hier_optimize leaves parameters unchanged under zero gradients") {
  MockBackend be(21, small_mock());
  DeadBackend dead(be);
  HierSystem h(hier_config(6, 2));
  for (std::size_t k = 0; k < 2; ++k)
    for (auto& [name, store] : h.cluster(k).mutable_stores())
      for (auto& [pname, p] : *store) p.value.fill(0.0);
  for (auto& [name, p] : h.global_mixing().params()) p.value.fill(0.0);
  for (auto& [name, p] : h.global_mixing().target()) p.value.fill(0.0);
  HierBackends b = uniform(be, 6, 2);
  for (auto& e : b.executors) e = &dead;
  for (int r = 0; r < 6; ++r) h.commit(h.run_round(kQuestions[0], b, false));
  const auto before = h.checksum();
  const LossReport rep = h.hier_optimize();
  CHECK(rep.valid);
  CHECK(rep.order.back() == "global");
  CHECK(h.checksum() == before);
}

TEST_CASE("hier_converged") {
  const EarlyStopConfig cfg{0.01, 0.7, 1e-4, 2};
  const StopSignals ok{0.001, 0.9, 1e-5, true};
  CHECK(hier_converged(std::vector<StopSignals>{ok, ok}, cfg).stop);
  CHECK_FALSE(hier_converged(std::vector<StopSignals>{ok, {0.001, 0.6, 1e-5, true}}, cfg).stop);
  CHECK_FALSE(hier_converged(std::vector<StopSignals>{{0.001, 0.9, 3e-3, true}, {0.001, 0.9, -3e-3, true}}, cfg).stop);
}

TEST_CASE("hier_train converges on stable outputs") {
  ConstantBackend constant;
  HierConfig cfg = hier_config(9, 3);
  cfg.base.explore_sigma = 0.0;
  cfg.base.update_interval = 1000;
  cfg.stop.patience = 3;
  HierSystem h(cfg);
  std::size_t logged = 0;
  const HierResult res = hier_train(h, kQuestions, uniform(constant, 9, 3), 60, [&](const HierRound&) { ++logged; });
  CHECK(res.stopped);
  CHECK(logged == res.rounds.size());
  for (const auto& r : res.rounds) {
    CHECK(r.mean_reward == doctest::Approx(1.0));
    CHECK(r.signals.delta_c == 0.0);
  }
}

TEST_CASE("one cluster reproduces flat rewards") {
  MockBackend be(21, small_mock());
  EconConfig base = small_base(9);
  base.episodes = 8;
  EconSystem flat(base);
  const TrainResult fr = train(flat, kQuestions, {&be, {&be, &be, &be}});

  HierConfig hc;
  hc.agents = 3;
  hc.clusters = 1;
  hc.base = base;
  HierSystem hier(hc);
  const HierResult hr = hier_train(hier, kQuestions, uniform(be, 3, 1), 8);
  REQUIRE(hr.rounds.size() == fr.episodes.size());
  for (std::size_t e = 0; e < fr.episodes.size(); ++e) {
    CHECK(hr.rounds[e].clusters[0].rewards == fr.episodes[e].rewards);
    CHECK(hr.rounds[e].final_output.text == fr.episodes[e].final_output.text);
  }
}
