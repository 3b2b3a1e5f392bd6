#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace econ {

// Blend weights (alpha_1, alpha_2, alpha_3) on the probability simplex.
struct RewardWeights {
  std::array<double, 3> alpha{0.4, 0.4, 0.2};

  // Throws std::invalid_argument unless every weight is >= 0 and the sum is
  // 1 within tol.
  void validate(double tol = 1e-9) const;
  bool operator==(const RewardWeights&) const = default;
};

struct RewardBreakdown {
  double action_likelihood = 0.0;
  double task_specific = 0.0;
  double collaborative = 0.0;
  double blended = 0.0;
  bool al_clipped = false;
  bool ts_clipped = false;
  bool cc_clipped = false;

  std::array<double, 3> components() const { return {action_likelihood, task_specific, collaborative}; }
};

// Scoring contracts. Both must return values in [0, 1].
using TaskScorer = std::function<double(const std::string& utterance, const std::string& reference)>;
using PeerScorer = std::function<double(const std::string& utterance, std::span<const std::string> peers)>;

struct Evaluator {
  TaskScorer task;
  PeerScorer collab;
};

// min(R_max, cos(u, C)), floored at -R_max. A zero vector gives 0.
double reward_action_likelihood(std::span<const double> utterance, std::span<const double> final_output,
                                double r_max, bool* clipped = nullptr);
double reward_task_specific(const std::string& utterance, const std::string& reference, const Evaluator& ev,
                            double r_max, bool* clipped = nullptr);
double reward_collab(const std::string& utterance, std::span<const std::string> peers, const Evaluator& ev,
                     double r_max, bool* clipped = nullptr);

double blend(const std::array<double, 3>& components, const RewardWeights& w);

// Euclidean projection onto the probability simplex (sort and threshold).
std::array<double, 3> project_to_simplex(const std::array<double, 3>& v);

// L_dr = sum_i (alpha . r_i - expected_i)^2.
double reward_discrepancy(const RewardWeights& w, std::span<const std::array<double, 3>> components,
                          std::span<const double> expected);

// dL_dr / d alpha.
std::array<double, 3> reward_discrepancy_grad(const RewardWeights& w,
                                              std::span<const std::array<double, 3>> components,
                                              std::span<const double> expected);

// One projected gradient step on L_dr with step size eta_alpha.
RewardWeights update_reward_weights(const RewardWeights& w, std::span<const std::array<double, 3>> components,
                                    std::span<const double> expected, double eta_alpha);

// Per-agent exponential moving average of blended rewards, the baseline
// used as r_i^expected. The first observation initializes the average.
class ExpectedReward {
 public:
  explicit ExpectedReward(std::size_t agents = 0, double decay = 0.9);

  // Expected values before folding in `actual`.
  std::vector<double> expected() const { return values_; }
  void observe(std::span<const double> actual);
  bool initialized() const { return initialized_; }
  double decay() const { return decay_; }

 private:
  std::vector<double> values_;
  double decay_;
  bool initialized_ = false;
};

// Text of the form "... answer: X" yields "X"; otherwise the last token.
std::string extract_answer(const std::string& utterance);

// 1 when the extracted answer equals the reference, else 0.
double exact_match_score(const std::string& utterance, const std::string& reference);

// 1 - mean Jaccard similarity of token sets against the peers; `solo` when
// there are no peers.
double jaccard_distinctness(const std::string& utterance, std::span<const std::string> peers, double solo = 1.0);

Evaluator mock_evaluator(double solo_score = 1.0);

nlohmann::json reward_log_line(std::size_t agent, const RewardBreakdown& bd, const RewardWeights& w,
                               std::size_t episode);

}  // namespace econ
