#include <cmath>
#include <random>

#include "doctest.h"
#include "econ/numeric/tensor.hpp"
#include "econ/reward/reward.hpp"

using namespace econ;

TEST_CASE("reward_action_likelihood") {
  const std::vector<double> c{0.2, -0.4, 0.9};
  CHECK(reward_action_likelihood(c, c, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(reward_action_likelihood(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 1.0) == 0.0);
  bool clipped = false;
  CHECK(reward_action_likelihood(c, c, 0.5, &clipped) == 0.5);
  CHECK(clipped);
  CHECK(reward_action_likelihood(std::vector<double>{0, 0}, std::vector<double>{0, 1}, 1.0) == 0.0);
  CHECK_THROWS_AS(reward_action_likelihood(std::vector<double>{1}, c, 1.0), ShapeError);
}

TEST_CASE("reward_task_specific") {
  const Evaluator ev = mock_evaluator();
  CHECK(reward_task_specific("so the answer: 42", "42", ev, 1.0) == 1.0);
  CHECK(reward_task_specific("so the answer: 41", "42", ev, 1.0) == 0.0);

  Evaluator fixed{[](const std::string&, const std::string&) { return 0.73; }, ev.collab};
  bool clipped = false;
  CHECK(reward_task_specific("x", "y", fixed, 0.5, &clipped) == 0.5);
  CHECK(clipped);

  Evaluator faulty{[](const std::string&, const std::string&) { return -0.1; }, ev.collab};
  CHECK_THROWS_AS(reward_task_specific("x", "y", faulty, 1.0), ContractViolation);
}

TEST_CASE("reward_collab") {
  const Evaluator ev = mock_evaluator(0.6);
  CHECK(reward_collab("alone here", {}, ev, 1.0) == 0.6);

  const std::vector<std::string> all{"a b c", "a b c", "a b c"};
  std::vector<double> r;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::vector<std::string> peers;
    for (std::size_t j = 0; j < all.size(); ++j)
      if (j != i) peers.push_back(all[j]);
    r.push_back(reward_collab(all[i], peers, ev, 1.0));
  }
  CHECK(r[0] == r[1]);
  CHECK(r[1] == r[2]);
  CHECK(r[0] == 0.0);

  const std::vector<std::string> other{"x y"};
  CHECK(reward_collab("a b", other, ev, 1.0) == 1.0);

  Evaluator faulty{ev.task, [](const std::string&, std::span<const std::string>) { return 1.2; }};
  CHECK_THROWS_AS(reward_collab("a", other, faulty, 1.0), ContractViolation);
}

TEST_CASE("blend") {
  RewardWeights w;
  CHECK(blend({1.0, 0.5, 0.25}, w) == doctest::Approx(0.65).epsilon(1e-15));
  RewardWeights v{{1, 0, 0}};
  CHECK(blend({0.3, 0.9, 0.1}, v) == 0.3);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    RewardWeights r;
    r.alpha = project_to_simplex({u(rng), u(rng), u(rng)});
    const double c = u(rng);
    CHECK(blend({c, c, c}, r) == c);
    // Monotone in each component.
    std::array<double, 3> comp{u(rng), u(rng), u(rng)};
    const double base = blend(comp, r);
    comp[trial % 3] += 0.1;
    CHECK(blend(comp, r) >= base);
  }
  // Weights summing to 1 + 5e-10 still never leave the component range.
  RewardWeights loose{{0.4 + 5e-10, 0.4, 0.2}};
  CHECK(blend({1.0, 1.0, 1.0}, loose) == 1.0);
  CHECK(blend({-2.0, -2.0, -2.0}, loose) == -2.0);
  RewardWeights bad{{0.5, 0.5, 0.5}};
  CHECK_THROWS_AS(blend({1, 1, 1}, bad), std::invalid_argument);
  RewardWeights neg{{1.2, -0.2, 0.0}};
  CHECK_THROWS_AS(blend({1, 1, 1}, neg), std::invalid_argument);
}

TEST_CASE("project_to_simplex") {
  auto p = project_to_simplex({0.2, 0.3, 0.5});
  CHECK(p[0] == doctest::Approx(0.2));
  CHECK(p[2] == doctest::Approx(0.5));
  auto q = project_to_simplex({2.0, 0.0, 0.0});
  CHECK(q == std::array<double, 3>{1.0, 0.0, 0.0});
  // Brute-force check against a fine grid of simplex points.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::array<double, 3> v{u(rng), u(rng), u(rng)};
    auto proj = project_to_simplex(v);
    auto dist = [&](const std::array<double, 3>& x) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += (x[k] - v[k]) * (x[k] - v[k]);
      return d;
    };
    double best = 1e300;
    for (int i = 0; i <= 200; ++i)
      for (int j = 0; i + j <= 200; ++j) best = std::min(best, dist({i / 200.0, j / 200.0, (200 - i - j) / 200.0}));
    CHECK(dist(proj) <= best + 1e-12);
  }
}

TEST_CASE("update_reward_weights") {
  RewardWeights w;
  std::vector<std::array<double, 3>> comps{{1.0, 0.5, 0.2}, {0.3, 0.9, 0.6}};
  std::vector<double> same{blend(comps[0], w), blend(comps[1], w)};
  CHECK(update_reward_weights(w, comps, same, 0.01) == w);

  SUBCASE("one agent with zero expectation pushes alpha_1 down") {
    std::vector<std::array<double, 3>> one{{1.0, 0.0, 0.0}};
    std::vector<double> zero{0.0};
    auto next = update_reward_weights(w, one, zero, 0.01);
    CHECK(next.alpha[0] < w.alpha[0]);
    next.validate();
  }

  SUBCASE("simplex and descent for random inputs") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    RewardWeights cur;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::array<double, 3>> c(3);
      std::vector<double> e(3);
      for (auto& a : c) a = {u(rng), u(rng), u(rng)};
      for (double& x : e) x = u(rng);
      auto next = update_reward_weights(cur, c, e, 1e-3);
      double sum = 0;
      for (double a : next.alpha) {
        CHECK(a >= 0.0);
        sum += a;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      CHECK(reward_discrepancy(next, c, e) <= reward_discrepancy(cur, c, e) + 1e-12);
      cur = next;
    }
  }

  CHECK_THROWS_AS(update_reward_weights(w, comps, same, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(update_reward_weights(w, comps, std::vector<double>{0.1}, 0.01), std::invalid_argument);
}

TEST_CASE("expected reward EMA") {
  ExpectedReward ema(2, 0.9);
  ema.observe(std::vector<double>{1.0, 0.0});
  CHECK(ema.expected() == std::vector<double>{1.0, 0.0});
  ema.observe(std::vector<double>{0.0, 1.0});
  CHECK(ema.expected()[0] == doctest::Approx(0.9));
  CHECK(ema.expected()[1] == doctest::Approx(0.1));
}

TEST_CASE("answer extraction and log line") {
  CHECK(extract_answer("we compute 3+4 answer: 7 done") == "7");
  CHECK(extract_answer("no marker 12") == "12");
  CHECK(extract_answer("") == "");
  RewardBreakdown bd{0.5, 1.0, 0.25, 0.65, false, false, false};
  auto j = reward_log_line(2, bd, RewardWeights{}, 7);
  CHECK(j["agent"] == 2);
  CHECK(j["episode"] == 7);
  CHECK(j["alpha"].size() == 3);
  CHECK(j["blended"] == 0.65);
}
