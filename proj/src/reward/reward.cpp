#include "econ/reward/reward.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "econ/numeric/math.hpp"
#include "econ/numeric/tensor.hpp"

namespace econ {
namespace {

double clip(double x, double r_max, bool* clipped) {
  if (!(r_max > 0.0)) throw std::invalid_argument("reward: R_max must be positive");
  const double y = std::clamp(x, -r_max, r_max);
  if (clipped != nullptr) *clipped = y != x;
  return y;
}

double checked_score(double s, const char* what) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw ContractViolation(std::string(what) + " evaluator returned " + std::to_string(s) + ", outside [0, 1]");
  }
  return s;
}

std::set<std::string> token_set(const std::string& text) {
  std::istringstream is(text);
  std::set<std::string> out;
  for (std::string tok; is >> tok;) out.insert(tok);
  return out;
}

}  // namespace

void RewardWeights::validate(double tol) const {
  double sum = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0)) throw std::invalid_argument("reward weights must be non-negative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw std::invalid_argument("reward weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
}

double reward_action_likelihood(std::span<const double> utterance, std::span<const double> final_output,
                                double r_max, bool* clipped) {
  if (utterance.size() != final_output.size()) {
    throw ShapeError("reward_action_likelihood: embedding lengths " + std::to_string(utterance.size()) + " and " +
                     std::to_string(final_output.size()));
  }
  const CosineResult c = cosine_sim(utterance, final_output);
  if (c.degenerate) spdlog::warn("reward_action_likelihood: zero embedding, reward 0");
  return clip(c.value, r_max, clipped);
}

double reward_task_specific(const std::string& utterance, const std::string& reference, const Evaluator& ev,
                            double r_max, bool* clipped) {
  return clip(checked_score(ev.task(utterance, reference), "task-specific"), r_max, clipped);
}

double reward_collab(const std::string& utterance, std::span<const std::string> peers, const Evaluator& ev,
                     double r_max, bool* clipped) {
  return clip(checked_score(ev.collab(utterance, peers), "collaboration"), r_max, clipped);
}

double blend(const std::array<double, 3>& components, const RewardWeights& w) {
  w.validate();
  const double r = w.alpha[0] * components[0] + w.alpha[1] * components[1] + w.alpha[2] * components[2];
  // Rounding can push a convex combination a few ulps past its inputs.
  const auto [lo, hi] = std::minmax_element(components.begin(), components.end());
  return std::clamp(r, *lo, *hi);
}

std::array<double, 3> project_to_simplex(const std::array<double, 3>& v) {
  std::array<double, 3> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::array<double, 3> out{};
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    out[k] = std::max(v[k] - theta, 0.0);
    sum += out[k];
  }
  // Remove the rounding residue so the sum is 1 to the last bit we can get.
  for (double& x : out) x /= sum;
  return out;
}

double reward_discrepancy(const RewardWeights& w, std::span<const std::array<double, 3>> components,
                          std::span<const double> expected) {
  if (components.size() != expected.size()) throw std::invalid_argument("reward_discrepancy: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double d = blend(components[i], w) - expected[i];
    loss += d * d;
  }
  return loss;
}

std::array<double, 3> reward_discrepancy_grad(const RewardWeights& w,
                                              std::span<const std::array<double, 3>> components,
                                              std::span<const double> expected) {
  if (components.size() != expected.size()) throw std::invalid_argument("reward_discrepancy: length mismatch");
  std::array<double, 3> grad{};
  for (std::size_t i = 0; i < components.size(); ++i) {
    const double d = blend(components[i], w) - expected[i];
    for (std::size_t k = 0; k < 3; ++k) grad[k] += 2.0 * d * components[i][k];
  }
  return grad;
}

RewardWeights update_reward_weights(const RewardWeights& w, std::span<const std::array<double, 3>> components,
                                    std::span<const double> expected, double eta_alpha) {
  if (!(eta_alpha > 0.0)) throw std::invalid_argument("update_reward_weights: eta_alpha must be positive");
  const std::array<double, 3> grad = reward_discrepancy_grad(w, components, expected);
  if (grad == std::array<double, 3>{}) return w;
  std::array<double, 3> stepped{};
  for (std::size_t k = 0; k < 3; ++k) stepped[k] = w.alpha[k] - eta_alpha * grad[k];
  RewardWeights out;
  out.alpha = project_to_simplex(stepped);
  return out;
}

ExpectedReward::ExpectedReward(std::size_t agents, double decay) : values_(agents, 0.0), decay_(decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("expected reward decay must lie in [0, 1)");
}

void ExpectedReward::observe(std::span<const double> actual) {
  if (actual.size() != values_.size()) throw std::invalid_argument("ExpectedReward: agent count changed");
  for (std::size_t i = 0; i < actual.size(); ++i) {
    values_[i] = initialized_ ? decay_ * values_[i] + (1.0 - decay_) * actual[i] : actual[i];
  }
  initialized_ = true;
}

std::string extract_answer(const std::string& utterance) {
  const std::string key = "answer:";
  const auto pos = utterance.rfind(key);
  std::istringstream is(pos == std::string::npos ? utterance : utterance.substr(pos + key.size()));
  std::string tok, last;
  while (is >> tok) {
    last = tok;
    if (pos != std::string::npos) break;
  }
  return last;
}

double exact_match_score(const std::string& utterance, const std::string& reference) {
  return extract_answer(utterance) == reference ? 1.0 : 0.0;
}

double jaccard_distinctness(const std::string& utterance, std::span<const std::string> peers, double solo) {
  if (peers.empty()) return solo;
  const auto mine = token_set(utterance);
  double total = 0.0;
  for (const auto& p : peers) {
    const auto theirs = token_set(p);
    std::size_t common = 0;
    for (const auto& t : mine) common += theirs.count(t);
    const std::size_t uni = mine.size() + theirs.size() - common;
    total += uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
  }
  return 1.0 - total / static_cast<double>(peers.size());
}

Evaluator mock_evaluator(double solo_score) {
  return {exact_match_score, [solo_score](const std::string& u, std::span<const std::string> peers) {
            return jaccard_distinctness(u, peers, solo_score);
          }};
}

nlohmann::json reward_log_line(std::size_t agent, const RewardBreakdown& bd, const RewardWeights& w,
                               std::size_t episode) {
  return {{"agent", agent},
          {"r_al", bd.action_likelihood},
          {"r_ts", bd.task_specific},
          {"r_cc", bd.collaborative},
          {"alpha", w.alpha},
          {"blended", bd.blended},
          {"episode", episode}};
}

}  // namespace econ
