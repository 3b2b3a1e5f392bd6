#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace econ {

// Finite Bayesian game. Type and action profiles are flattened in mixed
// radix with the last player varying fastest.
class FiniteBayesianGame {
 public:
  FiniteBayesianGame(std::vector<std::size_t> types, std::vector<std::size_t> actions, std::vector<double> prior,
                     double r_max = 1.0);

  std::size_t players() const { return types_.size(); }
  std::size_t types(std::size_t i) const { return types_.at(i); }
  std::size_t actions(std::size_t i) const { return actions_.at(i); }
  std::size_t type_profiles() const { return prior_.size(); }
  std::size_t action_profiles() const { return n_action_profiles_; }
  double r_max() const { return r_max_; }
  double prior(std::size_t type_profile) const { return prior_[type_profile]; }
  const std::vector<double>& prior() const { return prior_; }
  // Marginal probability of type t for player i.
  double type_marginal(std::size_t i, std::size_t t) const;

  double payoff(std::size_t i, std::size_t type_profile, std::size_t action_profile) const {
    return payoff_[(i * type_profiles() + type_profile) * action_profiles() + action_profile];
  }
  void set_payoff(std::size_t i, std::size_t type_profile, std::size_t action_profile, double value);

  std::vector<std::size_t> type_profile(std::size_t index) const { return unflatten(index, types_); }
  std::vector<std::size_t> action_profile(std::size_t index) const { return unflatten(index, actions_); }
  std::size_t type_index(const std::vector<std::size_t>& profile) const { return flatten(profile, types_); }
  std::size_t action_index(const std::vector<std::size_t>& profile) const { return flatten(profile, actions_); }

  // True when the payoffs sum to the same constant at every entry.
  bool is_constant_sum(double tol = 1e-9) const;
  double constant_sum() const;

  // Throws std::invalid_argument when the prior is not a distribution (sum
  // 1 within 1e-9) or a payoff exceeds r_max in magnitude.
  void validate() const;

 private:
  static std::vector<std::size_t> unflatten(std::size_t index, const std::vector<std::size_t>& radix);
  static std::size_t flatten(const std::vector<std::size_t>& digits, const std::vector<std::size_t>& radix);

  std::vector<std::size_t> types_;
  std::vector<std::size_t> actions_;
  std::vector<double> prior_;
  std::size_t n_action_profiles_ = 1;
  double r_max_ = 1.0;
  std::vector<double> payoff_;
};

// Text format, one directive per line, '#' starts a comment:
//
//   players 2
//   types 2 2
//   actions 2 2
//   prior 0.4 0.1 0.1 0.4
//   r_max 1
//   payoff <type per player> | <action per player> : <payoff per player>
//
// Payoff indices accept '*' for "every value". Later lines override earlier
// ones; entries never listed are 0.
FiniteBayesianGame parse_game(std::istream& in);
FiniteBayesianGame load_game(const std::string& path);

// strategy[type][action]
using Strategy = std::vector<std::vector<double>>;
using Profile = std::vector<Strategy>;

Strategy uniform_strategy(std::size_t types, std::size_t actions);
Strategy pure_strategy(std::size_t types, std::size_t actions, const std::vector<std::size_t>& choice);
Profile uniform_profile(const FiniteBayesianGame& game);
// Throws std::invalid_argument unless every distribution is non-negative
// and sums to 1 within tol.
void validate_profile(const FiniteBayesianGame& game, const Profile& profile, double tol = 1e-9);

// values[t][a]: expected payoff to player i of playing a as type t against
// the others' strategies, weighted by the probability of type t.
std::vector<std::vector<double>> action_values(const FiniteBayesianGame& game, const Profile& profile,
                                               std::size_t i);

double expected_payoff(const FiniteBayesianGame& game, const Profile& profile, std::size_t i);

struct BestResponse {
  Strategy strategy;
  std::vector<std::size_t> actions;  // chosen pure action per type
  double value = 0.0;
};
// Per type the argmax pure action; ties go to the lowest index.
BestResponse best_response(const FiniteBayesianGame& game, std::size_t i, const Profile& profile);

struct ExploitabilityReport {
  std::vector<double> gains;
  double max_gain = 0.0;
  double total() const;
};
ExploitabilityReport exploitability(const FiniteBayesianGame& game, const Profile& profile);

struct BneResult {
  Profile profile;
  double certificate = 0.0;  // max best-response gain of `profile`
  double tolerance = 0.0;
  bool within_tolerance = false;
  std::size_t evaluated = 0;
};

// 2 * r_max * rho * sum_j (|A_j| - 1).
double bne_tolerance(const FiniteBayesianGame& game, double rho);

// Exhaustive search over every profile whose probabilities are multiples of
// rho, minimising the max best-response gain. Throws std::invalid_argument
// when rho is not 1/k or the grid holds more than max_profiles profiles.
BneResult brute_force_bne(const FiniteBayesianGame& game, double rho, double max_profiles = 2e9);

// eta_0 / sqrt(t), t >= 1.
double learning_rate(double eta0, std::size_t t);

struct StepResult {
  std::vector<std::size_t> types;
  std::vector<std::size_t> actions;
  std::vector<double> payoffs;  // sampled payoffs of this play
  std::vector<double> regret;   // per-player regret increment
};

// Regret increment of player i under profile: the best-response value
// against the others minus the current expected value.
std::vector<double> regret_increment(const FiniteBayesianGame& game, const Profile& profile);

struct EconLearnerConfig {
  double eta0 = 0.5;
  double tau0 = 1.0;
  double tau_power = 0.25;  // tau_t = tau0 * t^-tau_power
  double eps0 = 0.1;        // eps_t = eps0 / sqrt(t)
  double init_scale = 0.5;  // Q drawn from [-init_scale, init_scale]
};

// Discrete-action learners: one action-value head per player over a one-hot
// type input (one row of Q per type). Acts with an eps-mixed softmax.
class EconLearners {
 public:
  EconLearners(const FiniteBayesianGame& game, const EconLearnerConfig& cfg, std::uint64_t seed);

  const EconLearnerConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& q(std::size_t i) const { return q_.at(i); }
  Profile policy(std::size_t t) const;
  std::size_t greedy(std::size_t i, std::size_t type) const;

  std::mt19937_64& rng() { return rng_; }
  std::vector<std::vector<std::vector<double>>>& mutable_q() { return q_; }

 private:
  EconLearnerConfig cfg_;
  std::vector<std::vector<std::vector<double>>> q_;  // [player][type][action]
  std::mt19937_64 rng_;
};

// One round at step t: sample types, act, then move every visited Q row
// toward the expected payoff of each action against the others' current
// policy with rate eta_t. The regret is measured on the acting policy.
StepResult econ_learner_step(const FiniteBayesianGame& game, EconLearners& learners, std::size_t t);

// Competitive baseline: each player best-responds greedily to the others'
// empirical actions over the last `window` rounds. Requires a constant-sum
// game.
class DebateLearners {
 public:
  DebateLearners(const FiniteBayesianGame& game, std::uint64_t seed, std::size_t window = 10);

  Profile policy(const FiniteBayesianGame& game) const;
  void observe(const std::vector<std::size_t>& actions);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::size_t window_;
  std::vector<std::vector<std::size_t>> history_;  // [player] recent actions
  std::vector<std::size_t> n_actions_;
  std::mt19937_64 rng_;
};

StepResult debate_baseline_step(const FiniteBayesianGame& game, DebateLearners& learners, std::size_t t);

struct RegretTrace {
  std::string learner;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> cumulative;  // [t][player]
  std::vector<double> total;                    // [t]

  void push(const std::vector<double>& increment);
  std::size_t size() const { return total.size(); }
};

enum class LearnerKind { kEcon, kDebate };
LearnerKind parse_learner(const std::string& name);

struct GameRun {
  RegretTrace trace;
  std::vector<StepResult> steps;
  Profile final_policy;
};

GameRun run_learner(const FiniteBayesianGame& game, LearnerKind kind, std::size_t steps, std::uint64_t seed,
                    const EconLearnerConfig& cfg = {}, bool keep_steps = false);

// Columns: t, regret_<i> per player, total.
void write_regret_csv(const RegretTrace& trace, std::ostream& out);

struct RegretFit {
  double a = 0.0;
  double b = 0.0;
  double shift = 0.0;
  bool shifted = false;
};

// Least squares of log R(T) on log T over the last 80% of the trace. When a
// value in that range is not positive, every value is shifted up so the
// minimum becomes 1 and the result is flagged.
RegretFit fit_regret_exponent(const std::vector<double>& cumulative);

}  // namespace econ
