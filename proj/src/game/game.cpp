#include "econ/game/game.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "econ/numeric/tensor.hpp"

namespace econ {

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t sample_index(const std::vector<double>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (x < acc) return k;
  }
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return k;
  return 0;
}

}  // namespace

FiniteBayesianGame::FiniteBayesianGame(std::vector<std::size_t> types, std::vector<std::size_t> actions,
                                       std::vector<double> prior, double r_max)
    : types_(std::move(types)), actions_(std::move(actions)), prior_(std::move(prior)), r_max_(r_max) {
  if (types_.empty()) throw std::invalid_argument("game needs at least one player");
  if (types_.size() != actions_.size()) throw std::invalid_argument("types and actions list different player counts");
  for (std::size_t i = 0; i < types_.size(); ++i)
    if (types_[i] == 0 || actions_[i] == 0) throw std::invalid_argument("every player needs a type and an action");
  if (prior_.size() != product(types_))
    throw std::invalid_argument("prior has " + std::to_string(prior_.size()) + " entries, expected " +
                                std::to_string(product(types_)));
  if (!(r_max_ > 0.0)) throw std::invalid_argument("r_max must be positive");
  n_action_profiles_ = product(actions_);
  payoff_.assign(players() * type_profiles() * n_action_profiles_, 0.0);
}

double FiniteBayesianGame::type_marginal(std::size_t i, std::size_t t) const {
  double p = 0.0;
  for (std::size_t k = 0; k < type_profiles(); ++k)
    if (type_profile(k)[i] == t) p += prior_[k];
  return p;
}

void FiniteBayesianGame::set_payoff(std::size_t i, std::size_t type_profile, std::size_t action_profile,
                                    double value) {
  if (i >= players() || type_profile >= type_profiles() || action_profile >= action_profiles())
    throw std::out_of_range("payoff index out of range");
  payoff_[(i * type_profiles() + type_profile) * action_profiles() + action_profile] = value;
}

bool FiniteBayesianGame::is_constant_sum(double tol) const {
  const double c = constant_sum();
  for (std::size_t t = 0; t < type_profiles(); ++t)
    for (std::size_t a = 0; a < action_profiles(); ++a) {
      double s = 0.0;
      for (std::size_t i = 0; i < players(); ++i) s += payoff(i, t, a);
      if (std::abs(s - c) > tol) return false;
    }
  return true;
}

double FiniteBayesianGame::constant_sum() const {
  double s = 0.0;
  for (std::size_t i = 0; i < players(); ++i) s += payoff(i, 0, 0);
  return s;
}

void FiniteBayesianGame::validate() const {
  double sum = 0.0;
  for (double p : prior_) {
    if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("prior entries must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("prior sums to " + std::to_string(sum) + ", not 1");
  for (double u : payoff_)
    if (!std::isfinite(u) || std::abs(u) > r_max_ + 1e-12)
      throw std::invalid_argument("payoff " + std::to_string(u) + " exceeds r_max " + std::to_string(r_max_));
}

std::vector<std::size_t> FiniteBayesianGame::unflatten(std::size_t index, const std::vector<std::size_t>& radix) {
  std::vector<std::size_t> digits(radix.size());
  for (std::size_t k = radix.size(); k-- > 0;) {
    digits[k] = index % radix[k];
    index /= radix[k];
  }
  return digits;
}

std::size_t FiniteBayesianGame::flatten(const std::vector<std::size_t>& digits,
                                        const std::vector<std::size_t>& radix) {
  if (digits.size() != radix.size()) throw std::invalid_argument("profile has the wrong number of players");
  std::size_t index = 0;
  for (std::size_t k = 0; k < radix.size(); ++k) {
    if (digits[k] >= radix[k]) throw std::out_of_range("profile entry out of range");
    index = index * radix[k] + digits[k];
  }
  return index;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::size_t to_count(const std::string& w, int line) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(w, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != w.size() || w.empty() || w[0] == '-')
    throw std::invalid_argument("line " + std::to_string(line) + ": expected a count, got '" + w + "'");
  return v;
}

double to_real(const std::string& w, int line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(w, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != w.size() || w.empty())
    throw std::invalid_argument("line " + std::to_string(line) + ": expected a number, got '" + w + "'");
  return v;
}

// Every index vector matched by a pattern of numbers and '*'.
std::vector<std::vector<std::size_t>> expand(const std::vector<std::string>& pattern,
                                             const std::vector<std::size_t>& radix, int line) {
  if (pattern.size() != radix.size())
    throw std::invalid_argument("line " + std::to_string(line) + ": expected " + std::to_string(radix.size()) +
                                " indices, got " + std::to_string(pattern.size()));
  std::vector<std::vector<std::size_t>> out{{}};
  for (std::size_t k = 0; k < pattern.size(); ++k) {
    std::vector<std::size_t> choices;
    if (pattern[k] == "*") {
      for (std::size_t v = 0; v < radix[k]; ++v) choices.push_back(v);
    } else {
      const std::size_t v = to_count(pattern[k], line);
      if (v >= radix[k])
        throw std::invalid_argument("line " + std::to_string(line) + ": index " + pattern[k] + " out of range");
      choices.push_back(v);
    }
    std::vector<std::vector<std::size_t>> next;
    for (const auto& prefix : out)
      for (std::size_t c : choices) {
        next.push_back(prefix);
        next.back().push_back(c);
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace

FiniteBayesianGame parse_game(std::istream& in) {
  std::size_t players = 0;
  std::vector<std::size_t> types, actions;
  std::vector<double> prior;
  double r_max = 1.0;
  struct Entry {
    std::vector<std::string> types, actions;
    std::vector<double> values;
    int line;
  };
  std::vector<Entry> entries;

  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto w = words(raw);
    if (w.empty()) continue;
    const std::string& key = w[0];
    const std::vector<std::string> rest(w.begin() + 1, w.end());
    if (key == "players") {
      if (rest.size() != 1) throw std::invalid_argument("line " + std::to_string(line) + ": players takes one value");
      players = to_count(rest[0], line);
    } else if (key == "types") {
      types.clear();
      for (const auto& x : rest) types.push_back(to_count(x, line));
    } else if (key == "actions") {
      actions.clear();
      for (const auto& x : rest) actions.push_back(to_count(x, line));
    } else if (key == "prior") {
      prior.clear();
      for (const auto& x : rest) prior.push_back(to_real(x, line));
    } else if (key == "r_max") {
      if (rest.size() != 1) throw std::invalid_argument("line " + std::to_string(line) + ": r_max takes one value");
      r_max = to_real(rest[0], line);
    } else if (key == "payoff") {
      const auto bar = std::find(rest.begin(), rest.end(), "|");
      const auto colon = std::find(rest.begin(), rest.end(), ":");
      if (bar == rest.end() || colon == rest.end() || colon < bar)
        throw std::invalid_argument("line " + std::to_string(line) + ": payoff needs 'types | actions : values'");
      Entry e{{rest.begin(), bar}, {bar + 1, colon}, {}, line};
      for (auto it = colon + 1; it != rest.end(); ++it) e.values.push_back(to_real(*it, line));
      entries.push_back(std::move(e));
    } else {
      throw std::invalid_argument("line " + std::to_string(line) + ": unknown directive '" + key + "'");
    }
  }
  if (players == 0) throw std::invalid_argument("game file does not declare players");
  if (types.size() != players || actions.size() != players)
    throw std::invalid_argument("types and actions need one entry per player");

  FiniteBayesianGame game(types, actions, prior, r_max);
  for (const auto& e : entries) {
    if (e.values.size() != players)
      throw std::invalid_argument("line " + std::to_string(e.line) + ": expected one payoff per player");
    for (const auto& t : expand(e.types, types, e.line))
      for (const auto& a : expand(e.actions, actions, e.line))
        for (std::size_t i = 0; i < players; ++i)
          game.set_payoff(i, game.type_index(t), game.action_index(a), e.values[i]);
  }
  game.validate();
  return game;
}

FiniteBayesianGame load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open game file " + path);
  return parse_game(in);
}

// ---------------------------------------------------------------------------
// Strategies and payoffs

Strategy uniform_strategy(std::size_t types, std::size_t actions) {
  return Strategy(types, std::vector<double>(actions, 1.0 / static_cast<double>(actions)));
}

Strategy pure_strategy(std::size_t types, std::size_t actions, const std::vector<std::size_t>& choice) {
  if (choice.size() != types) throw std::invalid_argument("pure strategy needs one action per type");
  Strategy s(types, std::vector<double>(actions, 0.0));
  for (std::size_t t = 0; t < types; ++t) s[t].at(choice[t]) = 1.0;
  return s;
}

Profile uniform_profile(const FiniteBayesianGame& game) {
  Profile p;
  for (std::size_t i = 0; i < game.players(); ++i) p.push_back(uniform_strategy(game.types(i), game.actions(i)));
  return p;
}

void validate_profile(const FiniteBayesianGame& game, const Profile& profile, double tol) {
  if (profile.size() != game.players()) throw std::invalid_argument("profile has the wrong number of players");
  for (std::size_t i = 0; i < game.players(); ++i) {
    if (profile[i].size() != game.types(i)) throw std::invalid_argument("strategy has the wrong number of types");
    for (const auto& dist : profile[i]) {
      if (dist.size() != game.actions(i)) throw std::invalid_argument("distribution has the wrong number of actions");
      double s = 0.0;
      for (double p : dist) {
        if (p < -tol || !std::isfinite(p)) throw std::invalid_argument("negative action probability");
        s += p;
      }
      if (std::abs(s - 1.0) > tol) throw std::invalid_argument("action distribution does not sum to 1");
    }
  }
}

std::vector<std::vector<double>> action_values(const FiniteBayesianGame& game, const Profile& profile,
                                               std::size_t i) {
  validate_profile(game, profile);
  std::vector<std::vector<double>> values(game.types(i), std::vector<double>(game.actions(i), 0.0));
  const std::size_t n = game.players();
  for (std::size_t tp = 0; tp < game.type_profiles(); ++tp) {
    const double p = game.prior(tp);
    if (p == 0.0) continue;
    const auto theta = game.type_profile(tp);
    for (std::size_t ap = 0; ap < game.action_profiles(); ++ap) {
      const auto a = game.action_profile(ap);
      double w = p;
      for (std::size_t j = 0; j < n && w != 0.0; ++j)
        if (j != i) w *= profile[j][theta[j]][a[j]];
      if (w != 0.0) values[theta[i]][a[i]] += w * game.payoff(i, tp, ap);
    }
  }
  return values;
}

double expected_payoff(const FiniteBayesianGame& game, const Profile& profile, std::size_t i) {
  const auto values = action_values(game, profile, i);
  double u = 0.0;
  for (std::size_t t = 0; t < values.size(); ++t)
    for (std::size_t a = 0; a < values[t].size(); ++a) u += profile[i][t][a] * values[t][a];
  return u;
}

BestResponse best_response(const FiniteBayesianGame& game, std::size_t i, const Profile& profile) {
  const auto values = action_values(game, profile, i);
  BestResponse br;
  for (const auto& row : values) {
    const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    br.actions.push_back(best);
    br.value += row[best];
  }
  br.strategy = pure_strategy(game.types(i), game.actions(i), br.actions);
  return br;
}

double ExploitabilityReport::total() const { return std::accumulate(gains.begin(), gains.end(), 0.0); }

ExploitabilityReport exploitability(const FiniteBayesianGame& game, const Profile& profile) {
  ExploitabilityReport r;
  for (std::size_t i = 0; i < game.players(); ++i) {
    const double gain = best_response(game, i, profile).value - expected_payoff(game, profile, i);
    // Round-off can leave an optimal strategy a hair below its own value.
    r.gains.push_back(std::max(gain, 0.0));
  }
  r.max_gain = *std::max_element(r.gains.begin(), r.gains.end());
  return r;
}

std::vector<double> regret_increment(const FiniteBayesianGame& game, const Profile& profile) {
  return exploitability(game, profile).gains;
}

// ---------------------------------------------------------------------------
// Grid oracle

double bne_tolerance(const FiniteBayesianGame& game, double rho) {
  double moves = 0.0;
  for (std::size_t i = 0; i < game.players(); ++i) moves += static_cast<double>(game.actions(i) - 1);
  return 2.0 * game.r_max() * rho * moves;
}

namespace {

// All distributions over m actions with probabilities k/steps.
void compositions(std::size_t m, std::size_t steps, std::vector<std::size_t>& cur,
                  std::vector<std::vector<double>>& out) {
  if (cur.size() + 1 == m) {
    std::size_t used = std::accumulate(cur.begin(), cur.end(), std::size_t{0});
    std::vector<double> d;
    for (auto c : cur) d.push_back(static_cast<double>(c) / static_cast<double>(steps));
    d.push_back(static_cast<double>(steps - used) / static_cast<double>(steps));
    out.push_back(std::move(d));
    return;
  }
  const std::size_t used = std::accumulate(cur.begin(), cur.end(), std::size_t{0});
  for (std::size_t k = steps - used + 1; k-- > 0;) {
    cur.push_back(k);
    compositions(m, steps, cur, out);
    cur.pop_back();
  }
}

// Flattened [type][action] strategies on the grid.
std::vector<std::vector<double>> strategy_grid(std::size_t types, std::size_t actions, std::size_t steps) {
  std::vector<std::vector<double>> dists;
  std::vector<std::size_t> cur;
  if (actions == 1) {
    dists.push_back({1.0});
  } else {
    compositions(actions, steps, cur, dists);
  }
  std::vector<std::vector<double>> out{{}};
  for (std::size_t t = 0; t < types; ++t) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : out)
      for (const auto& d : dists) {
        next.push_back(prefix);
        next.back().insert(next.back().end(), d.begin(), d.end());
      }
    out = std::move(next);
  }
  return out;
}

Strategy unflatten_strategy(const std::vector<double>& flat, std::size_t types, std::size_t actions) {
  Strategy s(types);
  for (std::size_t t = 0; t < types; ++t) s[t].assign(flat.begin() + t * actions, flat.begin() + (t + 1) * actions);
  return s;
}

}  // namespace

BneResult brute_force_bne(const FiniteBayesianGame& game, double rho, double max_profiles) {
  if (!(rho > 0.0) || rho > 1.0) throw std::invalid_argument("rho must be in (0, 1]");
  const double inv = 1.0 / rho;
  const auto steps = static_cast<std::size_t>(std::llround(inv));
  if (std::abs(inv - static_cast<double>(steps)) > 1e-6) throw std::invalid_argument("rho must be 1/k");

  const std::size_t n = game.players();
  std::vector<std::vector<std::vector<double>>> grids;
  double total = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    grids.push_back(strategy_grid(game.types(i), game.actions(i), steps));
    total *= static_cast<double>(grids.back().size());
  }
  if (total > max_profiles)
    throw std::invalid_argument("grid has " + std::to_string(total) + " profiles, above the limit");

  // The last player's strategy is swept in the inner loop. Everything that
  // depends only on the outer players is collected first:
  //   ql[tl*ml + al]                  value of (tl, al) to the last player
  //   m[i][(ti*mi + ai) * kl + l]     value of (ti, ai) to player i when the
  //                                   last player is at l = tl*ml + al
  //   w[i][l]                         player i's current value, same split
  const std::size_t last = n - 1;
  const std::size_t ml = game.actions(last);
  const std::size_t kl = game.types(last) * ml;
  std::vector<double> ql(kl);
  std::vector<std::vector<double>> m(last), w(last);
  for (std::size_t i = 0; i < last; ++i) {
    m[i].assign(game.types(i) * game.actions(i) * kl, 0.0);
    w[i].assign(kl, 0.0);
  }

  std::vector<std::vector<std::size_t>> tps, aps;
  for (std::size_t tp = 0; tp < game.type_profiles(); ++tp) tps.push_back(game.type_profile(tp));
  for (std::size_t ap = 0; ap < game.action_profiles(); ++ap) aps.push_back(game.action_profile(ap));

  BneResult result;
  result.tolerance = bne_tolerance(game, rho);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_idx(n, 0);

  std::vector<std::size_t> outer(last, 0);
  std::vector<double> br_row;
  for (bool more = true; more;) {
    std::fill(ql.begin(), ql.end(), 0.0);
    for (std::size_t i = 0; i < last; ++i) std::fill(m[i].begin(), m[i].end(), 0.0);
    for (std::size_t tp = 0; tp < tps.size(); ++tp) {
      const double p = game.prior(tp);
      if (p == 0.0) continue;
      const auto& theta = tps[tp];
      for (std::size_t ap = 0; ap < aps.size(); ++ap) {
        const auto& a = aps[ap];
        const std::size_t l = theta[last] * ml + a[last];
        double all = p;
        for (std::size_t j = 0; j < last; ++j)
          all *= grids[j][outer[j]][theta[j] * game.actions(j) + a[j]];
        ql[l] += all * game.payoff(last, tp, ap);
        for (std::size_t i = 0; i < last; ++i) {
          double wi = p;
          for (std::size_t j = 0; j < last; ++j)
            if (j != i) wi *= grids[j][outer[j]][theta[j] * game.actions(j) + a[j]];
          m[i][(theta[i] * game.actions(i) + a[i]) * kl + l] += wi * game.payoff(i, tp, ap);
        }
      }
    }
    for (std::size_t i = 0; i < last; ++i) {
      const auto& si = grids[i][outer[i]];
      std::fill(w[i].begin(), w[i].end(), 0.0);
      for (std::size_t r = 0; r < si.size(); ++r)
        if (si[r] != 0.0)
          for (std::size_t l = 0; l < kl; ++l) w[i][l] += si[r] * m[i][r * kl + l];
    }
    double br_last = 0.0;
    for (std::size_t t = 0; t < game.types(last); ++t)
      br_last += *std::max_element(ql.begin() + t * ml, ql.begin() + (t + 1) * ml);

    const auto& lg = grids[last];
    for (std::size_t s = 0; s < lg.size(); ++s) {
      ++result.evaluated;
      const double* sl = lg[s].data();
      double cur = 0.0;
      for (std::size_t l = 0; l < kl; ++l) cur += sl[l] * ql[l];
      double worst = br_last - cur;
      if (worst >= best) continue;
      for (std::size_t i = 0; i < last && worst < best; ++i) {
        double br = 0.0;
        const std::size_t mi = game.actions(i);
        for (std::size_t t = 0; t < game.types(i); ++t) {
          double top = -std::numeric_limits<double>::infinity();
          for (std::size_t a = 0; a < mi; ++a) {
            const double* row = m[i].data() + (t * mi + a) * kl;
            double v = 0.0;
            for (std::size_t l = 0; l < kl; ++l) v += sl[l] * row[l];
            top = std::max(top, v);
          }
          br += top;
        }
        double ui = 0.0;
        for (std::size_t l = 0; l < kl; ++l) ui += sl[l] * w[i][l];
        worst = std::max(worst, br - ui);
      }
      if (worst < best) {
        best = worst;
        std::copy(outer.begin(), outer.end(), best_idx.begin());
        best_idx[last] = s;
      }
    }

    more = false;
    for (std::size_t j = last; j-- > 0;) {
      if (++outer[j] < grids[j].size()) {
        more = true;
        break;
      }
      outer[j] = 0;
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    result.profile.push_back(unflatten_strategy(grids[i][best_idx[i]], game.types(i), game.actions(i)));
  result.certificate = exploitability(game, result.profile).max_gain;
  result.within_tolerance = result.certificate <= result.tolerance;
  return result;
}

// ---------------------------------------------------------------------------
// Learners

double learning_rate(double eta0, std::size_t t) {
  if (t == 0) throw std::invalid_argument("learning rate schedule starts at t = 1");
  return eta0 / std::sqrt(static_cast<double>(t));
}

namespace {

std::vector<std::size_t> sample_types(const FiniteBayesianGame& game, std::mt19937_64& rng) {
  return game.type_profile(sample_index(game.prior(), rng));
}

std::vector<double> sampled_payoffs(const FiniteBayesianGame& game, const std::vector<std::size_t>& types,
                                    const std::vector<std::size_t>& actions) {
  std::vector<double> out;
  const std::size_t tp = game.type_index(types), ap = game.action_index(actions);
  for (std::size_t i = 0; i < game.players(); ++i) out.push_back(game.payoff(i, tp, ap));
  return out;
}

}  // namespace

EconLearners::EconLearners(const FiniteBayesianGame& game, const EconLearnerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed) {
  if (!(cfg.eta0 > 0.0) || !(cfg.tau0 > 0.0) || cfg.tau_power < 0.0 || cfg.eps0 < 0.0 || cfg.eps0 > 1.0 ||
      cfg.init_scale < 0.0)
    throw std::invalid_argument("invalid learner schedule");
  std::uniform_real_distribution<double> init(-cfg.init_scale, cfg.init_scale);
  for (std::size_t i = 0; i < game.players(); ++i) {
    q_.emplace_back(game.types(i), std::vector<double>(game.actions(i)));
    for (auto& row : q_.back())
      for (auto& v : row) v = init(rng_);
  }
}

Profile EconLearners::policy(std::size_t t) const {
  if (t == 0) throw std::invalid_argument("policy schedule starts at t = 1");
  const double td = static_cast<double>(t);
  const double tau = cfg_.tau0 * std::pow(td, -cfg_.tau_power);
  const double eps = cfg_.eps0 / std::sqrt(td);
  Profile p;
  for (const auto& qi : q_) {
    Strategy s;
    for (const auto& row : qi) {
      const double top = *std::max_element(row.begin(), row.end());
      std::vector<double> d(row.size());
      double z = 0.0;
      for (std::size_t a = 0; a < row.size(); ++a) z += d[a] = std::exp((row[a] - top) / tau);
      const double u = 1.0 / static_cast<double>(row.size());
      for (auto& x : d) x = (1.0 - eps) * x / z + eps * u;
      s.push_back(std::move(d));
    }
    p.push_back(std::move(s));
  }
  return p;
}

std::size_t EconLearners::greedy(std::size_t i, std::size_t type) const {
  const auto& row = q_.at(i).at(type);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

StepResult econ_learner_step(const FiniteBayesianGame& game, EconLearners& learners, std::size_t t) {
  const Profile pi = learners.policy(t);
  StepResult r;
  r.types = sample_types(game, learners.rng());
  for (std::size_t i = 0; i < game.players(); ++i)
    r.actions.push_back(sample_index(pi[i][r.types[i]], learners.rng()));
  r.payoffs = sampled_payoffs(game, r.types, r.actions);
  r.regret = regret_increment(game, pi);

  const double eta = learning_rate(learners.config().eta0, t);
  auto& q = learners.mutable_q();
  for (std::size_t i = 0; i < game.players(); ++i) {
    const std::size_t ti = r.types[i];
    const auto values = action_values(game, pi, i);
    const double pt = game.type_marginal(i, ti);
    for (std::size_t a = 0; a < game.actions(i); ++a) {
      const double target = values[ti][a] / pt;
      q[i][ti][a] += eta * (target - q[i][ti][a]);
    }
  }
  return r;
}

DebateLearners::DebateLearners(const FiniteBayesianGame& game, std::uint64_t seed, std::size_t window)
    : window_(window), history_(game.players()), rng_(seed) {
  if (window == 0) throw std::invalid_argument("debate window must be positive");
  if (!game.is_constant_sum()) throw ContractViolation("debate baseline needs a constant-sum game");
  for (std::size_t i = 0; i < game.players(); ++i) n_actions_.push_back(game.actions(i));
}

Profile DebateLearners::policy(const FiniteBayesianGame& game) const {
  // Opponents are modelled by their empirical action frequencies, the same
  // for every type; with no history every action is equally likely.
  Profile empirical;
  for (std::size_t j = 0; j < game.players(); ++j) {
    std::vector<double> freq(n_actions_[j], 0.0);
    if (history_[j].empty()) {
      std::fill(freq.begin(), freq.end(), 1.0 / static_cast<double>(n_actions_[j]));
    } else {
      for (auto a : history_[j]) freq[a] += 1.0;
      for (auto& f : freq) f /= static_cast<double>(history_[j].size());
    }
    empirical.push_back(Strategy(game.types(j), freq));
  }
  Profile p;
  for (std::size_t i = 0; i < game.players(); ++i) p.push_back(best_response(game, i, empirical).strategy);
  return p;
}

void DebateLearners::observe(const std::vector<std::size_t>& actions) {
  for (std::size_t i = 0; i < history_.size(); ++i) {
    history_[i].push_back(actions.at(i));
    if (history_[i].size() > window_) history_[i].erase(history_[i].begin());
  }
}

StepResult debate_baseline_step(const FiniteBayesianGame& game, DebateLearners& learners, std::size_t t) {
  if (t == 0) throw std::invalid_argument("steps start at t = 1");
  const Profile pi = learners.policy(game);
  StepResult r;
  r.types = sample_types(game, learners.rng());
  for (std::size_t i = 0; i < game.players(); ++i) r.actions.push_back(sample_index(pi[i][r.types[i]], learners.rng()));
  r.payoffs = sampled_payoffs(game, r.types, r.actions);
  r.regret = regret_increment(game, pi);
  learners.observe(r.actions);
  return r;
}

// ---------------------------------------------------------------------------
// Traces

void RegretTrace::push(const std::vector<double>& increment) {
  std::vector<double> next = cumulative.empty() ? std::vector<double>(increment.size(), 0.0) : cumulative.back();
  if (next.size() != increment.size()) throw std::invalid_argument("regret increment has the wrong width");
  double sum = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    if (increment[i] < 0.0) throw std::invalid_argument("regret increments must be non-negative");
    next[i] += increment[i];
    sum += next[i];
  }
  cumulative.push_back(std::move(next));
  total.push_back(sum);
}

LearnerKind parse_learner(const std::string& name) {
  if (name == "econ") return LearnerKind::kEcon;
  if (name == "debate") return LearnerKind::kDebate;
  throw std::invalid_argument("unknown learner '" + name + "' (expected econ or debate)");
}

GameRun run_learner(const FiniteBayesianGame& game, LearnerKind kind, std::size_t steps, std::uint64_t seed,
                    const EconLearnerConfig& cfg, bool keep_steps) {
  GameRun run;
  run.trace.learner = kind == LearnerKind::kEcon ? "econ" : "debate";
  run.trace.seed = seed;
  if (kind == LearnerKind::kEcon) {
    EconLearners learners(game, cfg, seed);
    for (std::size_t t = 1; t <= steps; ++t) {
      auto r = econ_learner_step(game, learners, t);
      run.trace.push(r.regret);
      if (keep_steps) run.steps.push_back(std::move(r));
    }
    run.final_policy = learners.policy(std::max<std::size_t>(steps, 1));
  } else {
    DebateLearners learners(game, seed);
    for (std::size_t t = 1; t <= steps; ++t) {
      auto r = debate_baseline_step(game, learners, t);
      run.trace.push(r.regret);
      if (keep_steps) run.steps.push_back(std::move(r));
    }
    run.final_policy = learners.policy(game);
  }
  return run;
}

void write_regret_csv(const RegretTrace& trace, std::ostream& out) {
  const std::size_t n = trace.cumulative.empty() ? 0 : trace.cumulative.front().size();
  out << "t";
  for (std::size_t i = 0; i < n; ++i) out << ",regret_" << i;
  out << ",total\n";
  out.precision(17);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    out << t + 1;
    for (double v : trace.cumulative[t]) out << ',' << v;
    out << ',' << trace.total[t] << '\n';
  }
}

RegretFit fit_regret_exponent(const std::vector<double>& cumulative) {
  if (cumulative.size() < 100) throw std::invalid_argument("regret trace needs at least 100 steps");
  const std::size_t start = cumulative.size() / 5;
  RegretFit fit;
  const double lo = *std::min_element(cumulative.begin() + static_cast<std::ptrdiff_t>(start), cumulative.end());
  if (!(lo > 0.0)) {
    fit.shifted = true;
    fit.shift = 1.0 - lo;
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(cumulative.size() - start);
  for (std::size_t k = start; k < cumulative.size(); ++k) {
    const double x = std::log(static_cast<double>(k + 1));
    const double y = std::log(cumulative[k] + fit.shift);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.a = std::exp((sy - fit.b * sx) / n);
  return fit;
}

}  // namespace econ
