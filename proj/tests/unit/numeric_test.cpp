#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "econ/numeric/attention.hpp"
#include "econ/numeric/checkpoint.hpp"
#include "econ/numeric/gradcheck.hpp"
#include "econ/numeric/math.hpp"
#include "econ/numeric/optimizer.hpp"
#include "econ/numeric/tape.hpp"

using namespace econ;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t = Tensor::matrix(r, c);
  for (double& x : t.data()) x = d(rng);
  return t;
}

}  // namespace

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(50.0) - 1.0) < 1e-12);
  for (double x : {-700.0, -31.5, -2.0, 0.3, 4.0, 17.0, 700.0}) {
    CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12);
    CHECK(std::isfinite(sigmoid(x)));
  }
  CHECK_THROWS_AS(sigmoid(NAN), std::domain_error);
  CHECK_THROWS_AS(sigmoid(INFINITY), std::domain_error);
}

TEST_CASE("cosine_sim") {
  std::vector<double> u{1, 2, 3};
  CHECK(cosine_sim(u, u).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{0, 1}).value == 0.0);
  CHECK(cosine_sim(std::vector<double>{1, 0}, std::vector<double>{-1, 0}).value == -1.0);

  auto z = cosine_sim(std::vector<double>{0, 0}, std::vector<double>{1, 2});
  CHECK(z.value == 0.0);
  CHECK(z.degenerate);
}

TEST_CASE("softmax") {
  auto u = softmax(std::vector<double>{0, 0, 0});
  for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(softmax(std::vector<double>{0, 10})[1] >= 0.9999);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::domain_error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0}, 0.0), std::domain_error);

  SUBCASE("sums to one and is shift invariant") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-30, 30);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> v(1 + trial % 17);
      for (double& x : v) x = d(rng);
      const double shift = d(rng);
      std::vector<double> w = v;
      for (double& x : w) x += shift;
      auto p = softmax(v, 0.5 + trial % 3);
      auto q = softmax(w, 0.5 + trial % 3);
      double total = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] > 0.0);
        CHECK(std::abs(p[i] - q[i]) < 1e-12);
        total += p[i];
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("backward: quadratic gives 2W") {
  std::mt19937_64 rng(1);
  ParamStore store;
  store.add("w", random_matrix(3, 4, rng));
  Tape tape;
  Var w = tape.param(store, "w");
  tape.backward(tape.sum(tape.square(w)));
  const Tensor& g = store.grad("w");
  const Tensor& v = store.value("w");
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 2.0 * v[i]);
}

TEST_CASE("backward: constant loss leaves gradients zero") {
  std::mt19937_64 rng(2);
  ParamStore store;
  store.add("w", random_matrix(2, 2, rng));
  Tape tape;
  Var w = tape.param(store, "w");
  Var zero = tape.scale(tape.sum(w), 0.0);
  tape.backward(tape.add_scalar(zero, 3.0));
  CHECK(store.grads_all_zero());
}

TEST_CASE("backward: non-scalar loss is a contract violation") {
  ParamStore store;
  store.add("w", Tensor::matrix(2, 2, 1.0));
  Tape tape;
  Var w = tape.param(store, "w");
  CHECK_THROWS_AS(tape.backward(w), ContractViolation);
}

TEST_CASE("frozen parameters never receive gradient") {
  ParamStore live, frozen;
  live.add("a", Tensor::matrix(1, 3, 0.5));
  frozen.add("a", Tensor::matrix(1, 3, 2.0));
  Tape tape;
  Var a = tape.param(live, "a");
  Var b = tape.param(frozen, "a", Grad::kFreeze);
  tape.backward(tape.sum(tape.mul(a, b)));
  CHECK(frozen.grads_all_zero());
  CHECK(live.grad("a")[0] == 2.0);
}

TEST_CASE("every op matches central differences") {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    std::mt19937_64 rng(seed);
    ParamStore store;
    const std::size_t m = 3 + seed % 3, k = 4, n = 5;
    store.add("A", random_matrix(m, k, rng));
    store.add("B", random_matrix(k, n, rng));
    store.add("bias", random_matrix(1, n, rng));
    store.add("col", random_matrix(m, 1, rng));
    store.add("u", random_matrix(1, n, rng));
    store.add("s", random_matrix(1, 1, rng));

    auto loss = [&store](Tape& t) {
      Var A = t.param(store, "A");
      Var B = t.param(store, "B");
      Var h = t.add(t.matmul(A, B), t.param(store, "bias"));
      Var r = t.relu(h);
      Var sg = t.sigmoid(t.sub(h, t.param(store, "col")));
      Var sm = t.softmax_rows(t.mul(r, sg), 1.7);
      Var cat = t.concat_cols(std::vector<Var>{sm, t.slice_cols(h, 1, 3)});
      Var stacked = t.concat_rows(std::vector<Var>{cat, t.slice_rows(cat, 0, 2)});
      Var mean = t.mean_rows(stacked);
      Var gram = t.matmul(t.transpose(h), h);
      Var cos = t.cosine(t.slice_cols(mean, 0, 5), t.param(store, "u"));
      Var total = t.add(t.sum(t.square(mean)), t.scale(t.sum(gram), 0.01));
      total = t.add(total, t.mul(cos, t.param(store, "s")));
      return t.add_scalar(total, 0.25);
    };
    auto rep = finite_diff_check(loss, store, 1e-5);
    INFO("seed " << seed << " worst " << rep.worst_param << "[" << rep.worst_index << "] analytic "
                 << rep.worst_analytic << " numeric " << rep.worst_numeric);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.checked == store.parameter_count());
  }
}

TEST_CASE("finite_diff_check on a quadratic form") {
  std::mt19937_64 rng(3);
  ParamStore store;
  store.add("x", random_matrix(1, 6, rng));
  Tensor M = random_matrix(6, 6, rng);
  auto loss = [&](Tape& t) {
    Var x = t.param(store, "x");
    Var Mx = t.matmul(x, t.constant(M));
    return t.sum(t.mul(Mx, x));
  };
  CHECK(finite_diff_check(loss, store, 1e-5).max_rel_error < 1e-8);
  CHECK_THROWS_AS(finite_diff_check(loss, store, 1e-2), std::invalid_argument);
}

TEST_CASE("multi_head_attention") {
  std::mt19937_64 rng(4);

  SUBCASE("identical keys give the projected value mean") {
    ParamStore store;
    init_attention(store, "att", 6, 8, rng);
    Tensor keys = Tensor::matrix(3, 6);
    Tensor one_key = random_matrix(1, 6, rng);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 6; ++c) keys(r, c) = one_key(0, c);
    Tensor values = random_matrix(3, 6, rng);
    Tensor queries = random_matrix(2, 6, rng);

    Tape t;
    auto w = bind_attention(t, store, "att", Grad::kFreeze);
    Var out = multi_head_attention(t, t.constant(queries), t.constant(keys), t.constant(values), w, 2);

    Var mean_v = t.mean_rows(t.constant(values));
    Var expected = t.matmul(t.matmul(mean_v, w.wv), w.wo);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(t.value(out)(r, c) == doctest::Approx(t.value(expected)(0, c)).epsilon(1e-12));
  }

  SUBCASE("one head, identity projections, query equal to the first key") {
    ParamStore store;
    Tensor eye = Tensor::matrix(2, 2);
    eye(0, 0) = eye(1, 1) = 1.0;
    for (const char* n : {"att.wq", "att.wk", "att.wv", "att.wo"}) store.add(n, eye);
    Tensor keys({2, 2}, {10.0, 0.0, 0.0, 10.0});
    Tensor values({2, 2}, {1.0, -1.0, 5.0, 3.0});
    Tensor query({1, 2}, {10.0, 0.0});

    // Brute-force softmax over the two scaled scores 100/sqrt(2) and 0.
    const double s1 = 100.0 / std::sqrt(2.0), s2 = 0.0;
    const double w1 = std::exp(s1) / (std::exp(s1) + std::exp(s2));
    CHECK(w1 > 0.99);

    Tape t;
    auto w = bind_attention(t, store, "att", Grad::kFreeze);
    Var out = multi_head_attention(t, t.constant(query), t.constant(keys), t.constant(values), w, 1);
    CHECK(t.value(out)(0, 0) == doctest::Approx(w1 * 1.0 + (1 - w1) * 5.0).epsilon(1e-12));
    CHECK(t.value(out)(0, 1) == doctest::Approx(w1 * -1.0 + (1 - w1) * 3.0).epsilon(1e-12));
  }

  SUBCASE("output shape for a random 4-head block") {
    ParamStore store;
    init_attention(store, "att", 12, 16, rng);
    Tape t;
    auto w = bind_attention(t, store, "att", Grad::kFreeze);
    Var x = t.constant(random_matrix(5, 12, rng));
    Var out = multi_head_attention(t, x, x, x, w, 4);
    CHECK(t.value(out).rows() == 5);
    CHECK(t.value(out).cols() == 16);
  }

  SUBCASE("shape errors name the offending tensor") {
    ParamStore store;
    init_attention(store, "att", 6, 8, rng);
    Tape t;
    auto w = bind_attention(t, store, "att", Grad::kFreeze);
    Var good = t.constant(random_matrix(3, 6, rng));
    Var bad = t.constant(random_matrix(3, 5, rng));
    try {
      multi_head_attention(t, good, bad, good, w, 2);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("keys") != std::string::npos);
    }
    CHECK_THROWS_AS(multi_head_attention(t, good, good, good, w, 3), ShapeError);
  }

  SUBCASE("gradients match central differences") {
    ParamStore store;
    init_attention(store, "att", 6, 8, rng);
    Tensor x = random_matrix(4, 6, rng);
    auto loss = [&](Tape& t) {
      auto w = bind_attention(t, store, "att", Grad::kTrack);
      Var in = t.constant(x);
      return t.sum(t.square(multi_head_attention(t, in, in, in, w, 4)));
    };
    CHECK(finite_diff_check(loss, store, 1e-5).max_rel_error < 1e-4);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradients leave parameters unchanged") {
    std::mt19937_64 rng(5);
    ParamStore store;
    store.add("w", random_matrix(3, 3, rng));
    const auto before = store.checksum();
    adam_step(store, OptimizerConfig{});
    CHECK(store.checksum() == before);
    CHECK(store.step_count() == 1);
  }

  SUBCASE("first step with constant unit gradient moves by eta") {
    // t=1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1, step = eta / (1 + eps).
    ParamStore store;
    store.add("w", Tensor::scalar(0.0));
    store.grad("w")[0] = 1.0;
    OptimizerConfig cfg;
    cfg.learning_rate = 0.001;
    adam_step(store, cfg);
    CHECK(std::abs(store.value("w")[0] + 0.001 / (1.0 + 1e-8)) < 1e-15);
    CHECK(store.grads_all_zero());
  }

  SUBCASE("descends w^2 from 5") {
    // Independent scalar Adam recurrence as the oracle.
    double w_ref = 5.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 1000; ++t) {
      const double g = 2.0 * w_ref;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      w_ref -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
    CHECK(std::abs(w_ref) < 0.1);

    ParamStore store;
    store.add("w", Tensor::scalar(5.0));
    OptimizerConfig cfg;
    cfg.learning_rate = 0.05;
    for (int i = 0; i < 1000; ++i) {
      Tape t;
      Var w = t.param(store, "w");
      t.backward(t.sum(t.square(w)));
      adam_step(store, cfg);
    }
    CHECK(std::abs(store.value("w")[0]) < 0.1);
    CHECK(store.value("w")[0] == doctest::Approx(w_ref).epsilon(1e-9));
  }

  SUBCASE("NaN gradient aborts with the parameter name") {
    ParamStore store;
    store.add("layer.W", Tensor::scalar(1.0));
    store.grad("layer.W")[0] = NAN;
    try {
      adam_step(store, OptimizerConfig{});
      FAIL("expected domain_error");
    } catch (const std::domain_error& e) {
      CHECK(std::string(e.what()).find("layer.W") != std::string::npos);
    }
    CHECK(store.value("layer.W")[0] == 1.0);
  }

  SUBCASE("config validation") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = OptimizerConfig{};
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  SUBCASE("AdamW decays weights even without gradient") {
    ParamStore store;
    store.add("w", Tensor::scalar(2.0));
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::kAdamW;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    adam_step(store, cfg);
    CHECK(store.value("w")[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }
}

TEST_CASE("soft_update") {
  ParamStore live, target;
  live.add("phi", Tensor::scalar(2.0));
  target.add("phi", Tensor::scalar(0.0));
  soft_update(live, target, 0.5);
  CHECK(target.value("phi")[0] == 1.0);
  soft_update(live, target, 1.0);
  CHECK(target.value("phi")[0] == 2.0);
  CHECK_THROWS_AS(soft_update(live, target, 0.0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(6);
  ParamStore a, b;
  a.add("x.W", random_matrix(4, 7, rng, -1e3, 1e3));
  a.add("x.b", random_matrix(1, 7, rng, -1e-300, 1e-300));
  a.set_step_count(17);
  b.add("y", Tensor({3}, {1.0 / 3.0, -0.0, 5e-324}));
  std::stringstream ss;
  write_checkpoint(ss, {{"alpha", &a}, {"beta", &b}});
  CHECK(ss.str().rfind(kCheckpointTag, 0) == 0);
  auto back = read_checkpoint(ss);
  REQUIRE(back.size() == 2);
  CHECK(back.at("alpha").checksum() == a.checksum());
  CHECK(back.at("alpha").step_count() == 17);
  CHECK(back.at("beta").checksum() == b.checksum());
  CHECK(back.at("beta").value("y").shape() == std::vector<std::size_t>{3});

  std::stringstream bad("not-a-checkpoint\n");
  CHECK_THROWS(read_checkpoint(bad));
}
