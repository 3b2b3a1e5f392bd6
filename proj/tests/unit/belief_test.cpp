#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "econ/belief/belief_net.hpp"
#include "econ/belief/replay.hpp"
#include "econ/numeric/gradcheck.hpp"

using namespace econ;

namespace {

BeliefNetConfig small_config() {
  BeliefNetConfig c;
  c.embed_dim = 6;
  c.belief_dim = 4;
  c.hidden_dim = 8;
  c.q_hidden = 8;
  c.window = 3;
  c.grid = 5;
  return c;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

Observation random_obs(const BeliefNetConfig& c, std::mt19937_64& rng) {
  return {random_vec(c.embed_dim, rng), random_vec(c.embed_dim, rng), random_vec(c.belief_dim, rng)};
}

Trajectory random_traj(const BeliefNetConfig& c, std::size_t n, std::mt19937_64& rng) {
  Trajectory t(c.window);
  std::uniform_real_distribution<double> T(c.bounds.t_min, c.bounds.t_max), P(c.bounds.p_min, c.bounds.p_max);
  for (std::size_t i = 0; i < n; ++i) t.push({{T(rng), P(rng)}, random_obs(c, rng)});
  return t;
}

void zero_all(ParamStore& s) {
  for (auto& [name, p] : s) p.value.fill(0.0);
}

Transition random_transition(const BeliefNetConfig& c, std::mt19937_64& rng, bool terminal) {
  Transition t;
  t.trajectory = random_traj(c, 2, rng);
  t.observation = random_obs(c, rng);
  t.action = {1.0, 0.5};
  t.reward = std::uniform_real_distribution<double>(0, 1)(rng);
  t.next_trajectory = t.trajectory;
  t.next_trajectory.push({t.action, t.observation});
  t.next_observation = random_obs(c, rng);
  t.terminal = terminal;
  return t;
}

}  // namespace

TEST_CASE("trajectory window evicts oldest pairs") {
  Trajectory t(2);
  Observation o{{1}, {2}, {3}};
  t.push({{0.1, 0.1}, o});
  t.push({{0.2, 0.2}, o});
  t.push({{0.3, 0.3}, o});
  REQUIRE(t.size() == 2);
  CHECK(t.steps().front().action.temperature == 0.2);
  CHECK(t.steps().back().action.temperature == 0.3);
  CHECK_THROWS_AS(Trajectory(0), std::invalid_argument);
}

TEST_CASE("encode_trajectory") {
  auto cfg = small_config();
  std::mt19937_64 rng(1);
  BeliefNet net(cfg, rng);

  SUBCASE("empty trajectory maps to zero") {
    auto v = net.encode_trajectory(Trajectory(cfg.window));
    REQUIRE(v.size() == cfg.hidden_dim);
    for (double x : v) CHECK(x == 0.0);
  }

  SUBCASE("one pair is window independent") {
    auto c1 = cfg, c8 = cfg;
    c1.window = 1;
    c8.window = 8;
    std::mt19937_64 r1(9), r8(9);
    BeliefNet n1(c1, r1), n8(c8, r8);
    std::mt19937_64 data(3);
    TrajectoryStep s{{0.7, 0.4}, random_obs(cfg, data)};
    Trajectory t1(1), t8(8);
    t1.push(s);
    t8.push(s);
    CHECK(n1.encode_trajectory(t1) == n8.encode_trajectory(t8));
  }

  SUBCASE("pairs older than the window do not matter") {
    std::mt19937_64 data(4);
    Trajectory a(cfg.window), b(cfg.window);
    a.push({{0.3, 0.3}, random_obs(cfg, data)});
    b.push({{1.9, 0.8}, random_obs(cfg, data)});
    for (int i = 0; i < 3; ++i) {
      TrajectoryStep s{{0.5 + 0.1 * i, 0.5}, random_obs(cfg, data)};
      a.push(s);
      b.push(s);
    }
    CHECK(net.encode_trajectory(a) == net.encode_trajectory(b));
  }
}

TEST_CASE("compute_belief") {
  auto cfg = small_config();
  std::mt19937_64 data(5);
  auto traj = random_traj(cfg, 2, data);
  auto obs = random_obs(cfg, data);

  std::mt19937_64 r1(11), r2(11);
  BeliefNet a(cfg, r1), b(cfg, r2);
  CHECK(a.compute_belief(traj, obs) == b.compute_belief(traj, obs));

  zero_all(a.params());
  for (double x : a.compute_belief(traj, obs)) CHECK(x == 0.0);

  Observation bad = obs;
  bad.task.pop_back();
  CHECK_THROWS_AS(b.compute_belief(traj, bad), ShapeError);
}

TEST_CASE("belief dimension under the default configuration") {
  BeliefNetConfig cfg;
  std::mt19937_64 rng(1);
  BeliefNet net(cfg, rng);
  Observation o{std::vector<double>(256, 0.01), std::vector<double>(256, -0.01), std::vector<double>(128, 0.0)};
  CHECK(net.compute_belief(Trajectory(cfg.window), o).size() == 128);
}

TEST_CASE("embed_prompt") {
  auto cfg = small_config();
  std::mt19937_64 rng(2);
  BeliefNet net(cfg, rng);
  for (const char* n : {"head.W_T", "head.b_T", "head.W_p", "head.b_p"}) net.params().value(n).fill(0.0);
  std::vector<double> b(cfg.belief_dim, 0.3);

  auto e = net.embed_prompt(b);
  CHECK(e.temperature == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(e.repetition_penalty == doctest::Approx(0.5).epsilon(1e-15));

  net.params().value("head.b_T")[0] = 50.0;
  CHECK(std::abs(net.embed_prompt(b).temperature - 2.0) < 1e-6);

  double last = -1.0;
  for (double pre = -8.0; pre <= 8.0; pre += 0.5) {
    net.params().value("head.b_T")[0] = pre;
    const double t = net.embed_prompt(b).temperature;
    CHECK(t > last);
    last = t;
  }

  SUBCASE("always inside the box") {
    std::mt19937_64 r(3);
    BeliefNet n(cfg, r);
    for (int i = 0; i < 200; ++i) {
      auto big = random_vec(cfg.belief_dim, r, 1e4);
      CHECK(cfg.bounds.contains(n.embed_prompt(big)));
    }
  }
}

TEST_CASE("local_q") {
  auto cfg = small_config();
  std::mt19937_64 rng(3);
  BeliefNet net(cfg, rng);
  std::vector<double> b = random_vec(cfg.belief_dim, rng);
  const PromptEmbedding e{1.2, 0.3};
  CHECK(net.local_q(b, e) == net.local_q(b, e));

  auto loss = [&](Tape& t) {
    Var bv = t.constant(Tensor::row(b));
    Var ev = t.constant(Tensor::row({e.temperature, e.repetition_penalty}));
    return t.sum(t.square(net.q_head(t, bv, ev, Grad::kTrack)));
  };
  auto rep = finite_diff_check(loss, net.params(), 1e-5);
  CHECK(rep.max_rel_error < 1e-4);

  for (const auto& n : BeliefNet::q_head_names()) net.params().value(n).fill(0.0);
  CHECK(net.local_q(b, e) == 0.0);
}

TEST_CASE("max_target_q") {
  auto cfg = small_config();
  std::mt19937_64 rng(4);
  std::vector<double> b = random_vec(cfg.belief_dim, rng);

  SUBCASE("zero target head") {
    BeliefNet net(cfg, rng);
    zero_all(net.target());
    CHECK(net.max_target_q(b).value == 0.0);
  }

  SUBCASE("Q increasing in T peaks at the T_max corner") {
    BeliefNet net(cfg, rng);
    zero_all(net.target());
    auto& t = net.target();
    // Unit 0: relu(T + 10); Q = unit 0 + 0.1 p.
    t.value("q.W1")(cfg.belief_dim, 0) = 1.0;
    t.value("q.W1")(cfg.belief_dim + 1, 1) = 1.0;
    t.value("q.b1")[0] = 10.0;
    t.value("q.W2")[0] = 1.0;
    t.value("q.W2")[1] = 0.1;
    auto m = net.max_target_q(b);
    CHECK(m.argmax.temperature == cfg.bounds.t_max);
    CHECK(m.argmax.repetition_penalty == cfg.bounds.p_max);
    CHECK(m.value == doctest::Approx(12.0 + 0.09));
  }

  SUBCASE("refining the grid never lowers a concave maximum") {
    // Q = -|T - 1| built from two ReLU units.
    auto make = [&](std::size_t k) {
      auto c = cfg;
      c.grid = k;
      std::mt19937_64 r(5);
      BeliefNet net(c, r);
      zero_all(net.target());
      auto& t = net.target();
      t.value("q.W1")(c.belief_dim, 0) = 1.0;
      t.value("q.W1")(c.belief_dim, 1) = -1.0;
      t.value("q.b1")[0] = -1.0;
      t.value("q.b1")[1] = 1.0;
      t.value("q.W2")[0] = -1.0;
      t.value("q.W2")[1] = -1.0;
      return net.max_target_q(b).value;
    };
    const double k2 = make(2), k9 = make(9);
    CHECK(k2 == doctest::Approx(-0.9));
    CHECK(k9 >= k2);
    CHECK(k9 == doctest::Approx(-0.05));
  }
}

TEST_CASE("td_loss_local") {
  auto cfg = small_config();
  std::mt19937_64 rng(6);
  BeliefNet net(cfg, rng);

  SUBCASE("zero rewards and zero Q") {
    for (const auto& n : BeliefNet::q_head_names()) net.params().value(n).fill(0.0);
    zero_all(net.target());
    std::vector<Transition> batch;
    for (int i = 0; i < 4; ++i) {
      auto t = random_transition(cfg, rng, i % 2 == 0);
      t.reward = 0.0;
      batch.push_back(t);
    }
    CHECK(net.td_loss_value(batch, 0.99) == 0.0);
  }

  SUBCASE("r=1 with zero bootstrap and zero Q gives 1") {
    for (const auto& n : BeliefNet::q_head_names()) net.params().value(n).fill(0.0);
    zero_all(net.target());
    auto t = random_transition(cfg, rng, false);
    t.reward = 1.0;
    CHECK(net.td_loss_value(std::vector<Transition>{t}, 0.99) == 1.0);
  }

  SUBCASE("r=0, bootstrap 1, current Q 0.99 gives 0") {
    for (const auto& n : BeliefNet::q_head_names()) net.params().value(n).fill(0.0);
    zero_all(net.target());
    net.params().value("q.b2")[0] = 0.99;
    net.target().value("q.b2")[0] = 1.0;
    auto t = random_transition(cfg, rng, false);
    t.reward = 0.0;
    CHECK(std::abs(net.td_loss_value(std::vector<Transition>{t}, 0.99)) < 1e-12);
  }

  SUBCASE("terminal transitions drop the bootstrap") {
    for (const auto& n : BeliefNet::q_head_names()) net.params().value(n).fill(0.0);
    zero_all(net.target());
    net.target().value("q.b2")[0] = 5.0;
    auto t = random_transition(cfg, rng, true);
    t.reward = 0.5;
    CHECK(net.td_loss_value(std::vector<Transition>{t}, 0.99) == 0.25);
  }

  SUBCASE("empty batch and bad gamma are rejected") {
    CHECK_THROWS_AS(net.td_loss_value({}, 0.99), std::invalid_argument);
    auto t = random_transition(cfg, rng, false);
    CHECK_THROWS_AS(net.td_loss_value(std::vector<Transition>{t}, 1.0), std::invalid_argument);
  }

  SUBCASE("gradients match central differences and never reach the target") {
    std::vector<Transition> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_transition(cfg, rng, i == 2));
    // The bootstrap is a stop-gradient target, so it is held fixed here.
    const auto targets = net.td_targets(batch, 0.9);
    auto loss = [&](Tape& t) { return net.td_loss(t, batch, targets); };
    auto rep = finite_diff_check(loss, net.params(), 1e-5);
    INFO(rep.worst_param << " " << rep.worst_analytic << " " << rep.worst_numeric);
    CHECK(rep.max_rel_error < 1e-4);

    const double before = net.td_loss_backward(batch, 0.9);
    CHECK(net.target().grads_all_zero());
    CHECK_FALSE(net.params().grads_all_zero());
    net.target().value("q.b2")[0] += 0.5;
    CHECK(net.td_loss_value(batch, 0.9) != before);
    CHECK(net.target().grads_all_zero());
  }

  SUBCASE("loss is non-negative") {
    for (int trial = 0; trial < 20; ++trial) {
      std::mt19937_64 r(100 + trial);
      BeliefNet n(cfg, r);
      std::vector<Transition> batch{random_transition(cfg, r, false), random_transition(cfg, r, true)};
      CHECK(n.td_loss_value(batch, 0.99) >= 0.0);
    }
  }
}

TEST_CASE("target soft update") {
  auto cfg = small_config();
  std::mt19937_64 rng(7);
  BeliefNet net(cfg, rng);
  zero_all(net.target());
  net.soft_update_target(1.0);
  for (const auto& n : BeliefNet::q_head_names()) CHECK(net.target().value(n) == net.params().value(n));

  zero_all(net.target());
  const double phi = net.params().value("q.b1")[0];
  double prev_gap = std::abs(phi);
  for (int i = 0; i < 50; ++i) {
    net.soft_update_target(0.1);
    const double gap = std::abs(phi - net.target().value("q.b1")[0]);
    CHECK(gap == doctest::Approx(0.9 * prev_gap));
    prev_gap = gap;
  }

  SUBCASE("affine in the live parameters") {
    ParamStore p1, p2, mix, t1, t2, tmix, base;
    base.add("w", Tensor::row({0.3, -1.0}));
    p1.add("w", Tensor::row({2.0, 4.0}));
    p2.add("w", Tensor::row({-1.0, 0.5}));
    const double a = 0.3;
    mix.add("w", Tensor::row({a * 2.0 + (1 - a) * -1.0, a * 4.0 + (1 - a) * 0.5}));
    t1 = base;
    t2 = base;
    tmix = base;
    soft_update(p1, t1, 0.2);
    soft_update(p2, t2, 0.2);
    soft_update(mix, tmix, 0.2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(tmix.value("w")[i] == doctest::Approx(a * t1.value("w")[i] + (1 - a) * t2.value("w")[i]));
    }
  }
}

TEST_CASE("belief_entropy") {
  const std::size_t d = 16;
  std::vector<std::vector<double>> zeros(3, std::vector<double>(d, 0.0));
  CHECK(belief_entropy(zeros) == doctest::Approx(3 * std::log(16.0)).epsilon(1e-12));

  std::vector<double> spike(d, 0.0);
  spike[4] = 200.0;
  CHECK(belief_entropy(std::vector<std::vector<double>>{spike}) < 1e-9);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> bs(1 + trial % 4);
    for (auto& b : bs) b = random_vec(d, rng, 5.0);
    const double h = belief_entropy(bs);
    CHECK(h >= 0.0);
    CHECK(h <= bs.size() * std::log(static_cast<double>(d)) + 1e-12);
  }
  CHECK_THROWS(belief_entropy(std::vector<std::vector<double>>{}));
}

TEST_CASE("replay buffer") {
  ReplayBuffer<int> buf(3);
  for (int i = 0; i < 5; ++i) buf.push(i);
  CHECK(buf.size() == 3);
  CHECK(buf.recent(2) == std::vector<int>{3, 4});
  CHECK(buf.recent(10) == std::vector<int>{2, 3, 4});
  std::mt19937_64 rng(1);
  auto s = buf.sample(3, rng);
  CHECK(s == std::vector<int>{2, 3, 4});
  CHECK_THROWS(buf.sample(4, rng));
}

TEST_CASE("transition spill round trip") {
  auto cfg = small_config();
  std::mt19937_64 rng(9);
  std::stringstream ss;
  std::vector<Transition> in{random_transition(cfg, rng, false), random_transition(cfg, rng, true)};
  for (const auto& t : in) write_transition(ss, t);
  std::vector<Transition> out;
  Transition t;
  while (read_transition(ss, t)) out.push_back(t);
  REQUIRE(out.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out[i].trajectory == in[i].trajectory);
    CHECK(out[i].observation == in[i].observation);
    CHECK(out[i].action == in[i].action);
    CHECK(out[i].reward == in[i].reward);
    CHECK(out[i].next_trajectory == in[i].next_trajectory);
    CHECK(out[i].next_observation == in[i].next_observation);
    CHECK(out[i].terminal == in[i].terminal);
  }

  std::stringstream cut(ss.str().substr(0, 20));
  CHECK_THROWS(read_transition(cut, t));
}
