#include <random>

#include "doctest.h"
#include "econ/encoder/belief_encoder.hpp"
#include "econ/numeric/gradcheck.hpp"

using namespace econ;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.belief_dim = 6;
  c.model_dim = 8;
  c.heads = 4;
  c.blocks = 2;
  c.ff_dim = 12;
  return c;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("single belief is attended to itself") {
  auto cfg = small_config();
  cfg.blocks = 1;
  std::mt19937_64 rng(1);
  BeliefEncoder enc(cfg, rng);
  auto b = random_vec(cfg.belief_dim, rng);
  auto e = enc.encode_group(std::vector<std::vector<double>>{b});

  // One slot: attention weight 1, so the block reduces to b Wv Wo then the
  // residual feed-forward.
  Tape t;
  const auto& s = enc.params();
  Var x = t.matmul(t.matmul(t.constant(Tensor::row(b)), t.param(s, "block0.att.wv")), t.param(s, "block0.att.wo"));
  Var h = t.relu(t.add(t.matmul(x, t.param(s, "block0.ff.W1")), t.param(s, "block0.ff.b1")));
  Var y = t.add(x, t.add(t.matmul(h, t.param(s, "block0.ff.W2")), t.param(s, "block0.ff.b2")));
  REQUIRE(e.size() == cfg.model_dim);
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i] == doctest::Approx(t.value(y)[i]).epsilon(1e-12));
}

TEST_CASE("agent order does not change E") {
  auto cfg = small_config();
  std::mt19937_64 rng(2);
  BeliefEncoder enc(cfg, rng);
  auto a = random_vec(cfg.belief_dim, rng);
  auto c = random_vec(cfg.belief_dim, rng);
  auto e1 = enc.encode_group(std::vector<std::vector<double>>{a, a, c});
  auto e2 = enc.encode_group(std::vector<std::vector<double>>{a, c, a});
  auto e3 = enc.encode_group(std::vector<std::vector<double>>{c, a, a});
  for (std::size_t i = 0; i < e1.size(); ++i) {
    CHECK(e1[i] == doctest::Approx(e2[i]).epsilon(1e-12));
    CHECK(e1[i] == doctest::Approx(e3[i]).epsilon(1e-12));
  }
  CHECK(enc.encode_group(std::vector<std::vector<double>>{a, a}) ==
        enc.encode_group(std::vector<std::vector<double>>{a, a}));
}

TEST_CASE("default configuration yields the entity dimension") {
  EncoderConfig cfg;
  std::mt19937_64 rng(3);
  BeliefEncoder enc(cfg, rng);
  std::vector<std::vector<double>> beliefs(3, std::vector<double>(128, 0.05));
  CHECK(enc.encode_group(beliefs).size() == 256);
}

TEST_CASE("encoder input contracts") {
  auto cfg = small_config();
  std::mt19937_64 rng(4);
  BeliefEncoder enc(cfg, rng);
  CHECK_THROWS_AS(enc.encode_group(std::vector<std::vector<double>>{}), std::invalid_argument);
  CHECK_THROWS_AS(enc.encode_group(std::vector<std::vector<double>>{std::vector<double>(5, 0.0)}), ShapeError);
  cfg.heads = 3;
  CHECK_THROWS_AS(BeliefEncoder(cfg, rng), std::invalid_argument);
}

TEST_CASE("encoder gradients match central differences") {
  auto cfg = small_config();
  std::mt19937_64 rng(5);
  BeliefEncoder enc(cfg, rng);
  std::vector<std::vector<double>> beliefs{random_vec(6, rng), random_vec(6, rng), random_vec(6, rng)};
  auto target = random_vec(cfg.model_dim, rng);
  auto loss = [&](Tape& t) {
    Var e = enc.encode(t, t.constant(stack_rows(beliefs)), Grad::kTrack);
    return t.sum(t.square(t.sub(e, t.constant(Tensor::row(target)))));
  };
  auto rep = finite_diff_check(loss, enc.params(), 1e-5);
  INFO(rep.worst_param << " " << rep.worst_analytic << " " << rep.worst_numeric);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("encoder_loss") {
  const std::vector<double> ones{1, 1, 1};
  CHECK(encoder_loss(0.7, ones, 0.0) == 0.7);
  CHECK(encoder_loss(1.0, ones, 0.1) == doctest::Approx(1.3).epsilon(1e-15));
  for (double lam : {0.0, 0.1, 5.0}) CHECK(encoder_loss(2.5, std::vector<double>{0, 0}, lam) == 2.5);
  CHECK_THROWS_AS(encoder_loss(-1.0, ones, 0.1), ContractViolation);
  CHECK_THROWS_AS(encoder_loss(1.0, std::vector<double>{0.5, -0.1}, 0.1), ContractViolation);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const double total = d(rng), lam = d(rng);
    std::vector<double> locals{d(rng), d(rng), d(rng)};
    const double base = encoder_loss(total, locals, lam);
    CHECK(encoder_loss(total + 0.1, locals, lam) >= base);
    auto bumped = locals;
    bumped[trial % 3] += 0.1;
    CHECK(encoder_loss(total, bumped, lam) >= base);
    CHECK(encoder_loss(total, locals, lam + 0.1) >= base);
  }
}
