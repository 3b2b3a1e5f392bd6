#include <cmath>
#include <random>

#include "doctest.h"
#include "econ/mixing/mixing_net.hpp"
#include "econ/numeric/gradcheck.hpp"

using namespace econ;

namespace {

MixingConfig small_config(std::size_t dim = 8) {
  MixingConfig c;
  c.agents = 3;
  c.heads = 2;
  c.attn_dim = 4;
  c.group_dim = dim;
  c.feature_dim = dim;
  c.hidden = dim;
  return c;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<PromptEmbedding> random_embeddings(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0.1, 2.0), p(0.1, 0.9);
  std::vector<PromptEmbedding> out(n);
  for (auto& e : out) e = {t(rng), p(rng)};
  return out;
}

void zero_all(ParamStore& s) {
  for (auto& [n, p] : s) p.value.fill(0.0);
}

MixingSample random_sample(const MixingConfig& c, std::mt19937_64& rng, bool terminal) {
  MixingSample s;
  s.local_q = random_vec(c.agents, rng);
  s.embeddings = random_embeddings(c.agents, rng);
  s.group = random_vec(c.group_dim, rng);
  s.r_tot = random_vec(1, rng, 0, 1)[0];
  s.next_max_q = random_vec(c.agents, rng);
  s.next_embeddings = random_embeddings(c.agents, rng);
  s.next_group = random_vec(c.group_dim, rng);
  s.final_output = random_vec(c.feature_dim, rng);
  s.terminal = terminal;
  return s;
}

}  // namespace

TEST_CASE("self_attend_embeddings") {
  std::mt19937_64 rng(1);

  SUBCASE("one agent is a projection of its embedding") {
    auto cfg = small_config();
    cfg.agents = 1;
    MixingNet net(cfg, rng);
    Tape t;
    Var e = t.constant(Tensor::row({1.3, 0.4}));
    Var w = net.self_attend(t, e, Grad::kFreeze);
    const auto& s = net.params();
    Var expect = t.matmul(t.matmul(e, t.param(s, "att.wv")), t.param(s, "att.wo"));
    for (std::size_t i = 0; i < cfg.attn_dim; ++i) CHECK(t.value(w)[i] == doctest::Approx(t.value(expect)[i]));
  }

  SUBCASE("identical embeddings give identical rows") {
    auto cfg = small_config();
    MixingNet net(cfg, rng);
    Tape t;
    std::vector<PromptEmbedding> same(3, PromptEmbedding{0.8, 0.6});
    const Tensor& w = t.value(net.self_attend(t, t.constant(embedding_rows(same)), Grad::kFreeze));
    REQUIRE(w.rows() == 3);
    for (std::size_t c = 0; c < w.cols(); ++c) {
      CHECK(w(0, c) == w(1, c));
      CHECK(w(1, c) == w(2, c));
    }
  }
}

TEST_CASE("fuse_features") {
  auto cfg = small_config();
  std::mt19937_64 rng(2);
  MixingNet net(cfg, rng);
  auto emb = random_embeddings(3, rng);
  auto group = random_vec(cfg.group_dim, rng);

  CHECK(net.features_value(emb, group) == net.features_value(emb, group));

  auto base = net.features_value(emb, group);
  auto bumped_group = group;
  for (double& g : bumped_group) g += 0.5;
  auto bumped = net.features_value(emb, bumped_group);
  for (std::size_t i = 0; i < 3; ++i) CHECK(bumped[i] != base[i]);

  zero_all(net.params());
  for (const auto& f : net.features_value(emb, group))
    for (double x : f) CHECK(x == 0.0);
}

TEST_CASE("q_tot") {
  auto cfg = small_config();
  std::mt19937_64 rng(3);

  SUBCASE("identity Q path with zero features sums the local values") {
    MixingNet net(cfg, rng);
    zero_all(net.params());
    for (std::size_t i = 0; i < cfg.agents; ++i) net.params().value("qpath.W1")(i, 0) = 1.0;
    net.params().value("qpath.W2")(0, 0) = 1.0;
    const std::vector<double> q{0.5, 1.25, 2.0};
    CHECK(net.q_tot_value(q, random_embeddings(3, rng), random_vec(cfg.group_dim, rng)) ==
          doctest::Approx(3.75).epsilon(1e-14));
  }

  SUBCASE("zero Q with zero biases gives zero") {
    MixingNet net(cfg, rng);
    for (const char* n : {"qpath.c1", "qpath.c2", "hyper.V1", "hyper.V2"}) net.params().value(n).fill(0.0);
    const std::vector<double> q{0, 0, 0};
    CHECK(net.q_tot_value(q, random_embeddings(3, rng), random_vec(cfg.group_dim, rng)) == 0.0);
  }

  SUBCASE("raising one local Q never lowers Q_tot") {
    for (int config = 0; config < 100; ++config) {
      std::mt19937_64 r(1000 + config);
      MixingNet net(cfg, r);
      for (auto& [name, p] : net.params())
        for (double& x : p.value.data()) x = std::uniform_real_distribution<double>(-1, 1)(r);
      project_nonnegative(net.params());
      auto q = random_vec(3, r, -2, 2);
      auto emb = random_embeddings(3, r);
      auto group = random_vec(cfg.group_dim, r);
      const double base = net.q_tot_value(q, emb, group);
      for (std::size_t i = 0; i < 3; ++i) {
        auto up = q;
        up[i] += 0.01;
        CHECK(net.q_tot_value(up, emb, group) >= base - 1e-12);
      }
    }
  }

  SUBCASE("cached context agrees with the graph") {
    MixingNet net(cfg, rng);
    auto q = random_vec(3, rng, -2, 2);
    auto emb = random_embeddings(3, rng);
    auto group = random_vec(cfg.group_dim, rng);
    CHECK(net.q_tot_from(net.context(emb, group), q) == doctest::Approx(net.q_tot_value(q, emb, group)).epsilon(1e-12));
  }

  SUBCASE("length mismatch") {
    MixingNet net(cfg, rng);
    CHECK_THROWS_AS(net.q_tot_value(std::vector<double>{1, 2}, random_embeddings(3, rng), random_vec(8, rng)),
                    std::invalid_argument);
  }
}

TEST_CASE("sd_loss") {
  const std::vector<double> c{1.0, 2.0, 0.0};
  std::vector<std::vector<double>> parallel{{2, 4, 0}, {0.5, 1, 0}, {1, 2, 0}};
  CHECK(sd_loss(parallel, c, 0.1) == doctest::Approx(0.0).epsilon(1e-15));

  std::vector<std::vector<double>> orth{{0, 0, 1}, {-2, 1, 0}, {0, 0, 3}};
  CHECK(sd_loss(orth, c, 0.1) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(sd_loss(orth, std::vector<double>{0, 0, 0}, 0.1) == doctest::Approx(0.3).epsilon(1e-15));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> f{random_vec(3, rng), random_vec(3, rng)};
    auto cc = random_vec(3, rng);
    auto scaled = cc;
    for (double& x : scaled) x *= 7.5;
    const double l = sd_loss(f, cc, 0.1);
    CHECK(l >= 0.0);
    CHECK(l == doctest::Approx(sd_loss(f, scaled, 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("mixing_loss") {
  auto cfg = small_config();
  std::mt19937_64 rng(5);

  SUBCASE("all terms zero") {
    MixingNet net(cfg, rng);
    zero_all(net.params());
    zero_all(net.target());
    MixingSample s = random_sample(cfg, rng, true);
    s.local_q = {0, 0, 0};
    s.r_tot = 0.0;
    MixingLossConfig lc;
    lc.lambda_b = 0.0;
    Tape t;
    CHECK(t.scalar(mixing_loss(t, net, std::vector<MixingSample>{s}, lc, Grad::kFreeze).total) == 0.0);
  }

  SUBCASE("consistency term alone") {
    MixingNet net(cfg, rng);
    zero_all(net.params());
    zero_all(net.target());
    MixingSample s = random_sample(cfg, rng, true);
    s.local_q = {1, 1, 1};
    s.r_tot = 0.0;
    MixingLossConfig lc;
    lc.lambda_b = 0.0;
    lc.lambda_m = 0.1;
    Tape t;
    auto l = mixing_loss(t, net, std::vector<MixingSample>{s}, lc, Grad::kFreeze);
    CHECK(t.scalar(l.td) == 0.0);
    CHECK(t.scalar(l.total) == doctest::Approx(0.3).epsilon(1e-15));
  }

  SUBCASE("bootstrap reads only the target parameters") {
    MixingNet net(cfg, rng);
    std::vector<MixingSample> batch{random_sample(cfg, rng, false), random_sample(cfg, rng, false)};
    MixingLossConfig lc;
    Tape t;
    auto l = mixing_loss(t, net, batch, lc, Grad::kTrack);
    t.backward(l.total);
    CHECK(net.target().grads_all_zero());
    CHECK_FALSE(net.params().grads_all_zero());
    CHECK(t.scalar(l.total) >= 0.0);

    auto before = mixing_targets(net, batch, lc.gamma);
    net.target().value("qpath.c2")[0] += 1.0;
    auto after = mixing_targets(net, batch, lc.gamma);
    CHECK(after[0] == doctest::Approx(before[0] + lc.gamma));
  }

  SUBCASE("empty batch") {
    MixingNet net(cfg, rng);
    Tape t;
    CHECK_THROWS_AS(mixing_loss(t, net, {}, MixingLossConfig{}, Grad::kFreeze), std::invalid_argument);
  }
}

TEST_CASE("mixing_loss gradients at 64 dimensions") {
  auto cfg = small_config(64);
  cfg.attn_dim = 8;
  std::mt19937_64 rng(6);
  MixingNet net(cfg, rng);
  std::vector<MixingSample> batch{random_sample(cfg, rng, false), random_sample(cfg, rng, true)};
  MixingLossConfig lc;
  auto loss = [&](Tape& t) { return mixing_loss(t, net, batch, lc, Grad::kTrack).total; };
  auto rep = finite_diff_check(loss, net.params(), 1e-5);
  INFO(rep.worst_param << "[" << rep.worst_index << "] " << rep.worst_analytic << " " << rep.worst_numeric);
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("project_nonnegative and check_monotonicity") {
  auto cfg = small_config();
  std::mt19937_64 rng(7);
  ActionBounds bounds;

  SUBCASE("clamp") {
    MixingNet net(cfg, rng);
    const auto before = net.params().checksum();
    CHECK(project_nonnegative(net.params()) == 0);
    CHECK(net.params().checksum() == before);
    net.params().value("qpath.W1")(0, 0) = -0.5;
    net.params().value("hyper.V1")(0, 0) = -0.5;
    CHECK(project_nonnegative(net.params()) == 1);
    CHECK(net.params().value("qpath.W1")(0, 0) == 0.0);
    CHECK(net.params().value("hyper.V1")(0, 0) == -0.5);
  }

  SUBCASE("projected random parameters pass") {
    for (int draw = 0; draw < 10; ++draw) {
      MixingNet net(cfg, rng);
      for (auto& [name, p] : net.params())
        for (double& x : p.value.data()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
      project_nonnegative(net.params());
      auto rep = check_monotonicity(net, bounds, 50, rng);
      CHECK(rep.passed());
      CHECK(rep.min_derivative >= -1e-8);
      CHECK(rep.samples == 50);
    }
  }

  SUBCASE("an injected negative weight is flagged") {
    MixingNet net(cfg, rng);
    net.params().value("qpath.c1").fill(100.0);
    net.params().value("qpath.W2").fill(-1.0);
    auto rep = check_monotonicity(net, bounds, 20, rng);
    CHECK_FALSE(rep.passed());
    CHECK(rep.min_derivative < 0.0);
  }

  SUBCASE("zero network has zero derivatives") {
    MixingNet net(cfg, rng);
    zero_all(net.params());
    auto rep = check_monotonicity(net, bounds, 20, rng);
    CHECK(rep.passed());
    CHECK(rep.min_derivative == 0.0);
  }
}

TEST_CASE("no-concatenate ablation ignores E") {
  auto cfg = small_config();
  cfg.concat_group = false;
  std::mt19937_64 rng(8);
  MixingNet net(cfg, rng);
  auto emb = random_embeddings(3, rng);
  CHECK(net.features_value(emb, random_vec(8, rng)) == net.features_value(emb, random_vec(8, rng)));
}
