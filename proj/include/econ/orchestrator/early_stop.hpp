#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace econ {

struct EarlyStopConfig {
  double eps_c = 0.01;
  double r_threshold = 0.7;
  double eps_l = 1e-4;
  std::size_t patience = 5;

  void validate() const;
};

// What one episode contributes to the stopping rule. `valid` is false when
// a difference is undefined (first episode, no loss yet, degenerate output).
struct StopSignals {
  double delta_c = 0.0;
  double mean_reward = 0.0;
  double delta_loss = 0.0;
  bool valid = true;
};

struct StopDecision {
  bool stop = false;
  // All three criteria hold for the latest episode.
  bool criteria_met = false;
  // Consecutive episodes, ending at the latest, meeting all criteria.
  std::size_t streak = 0;
  // Failed criteria of the latest episode, or why the run stopped.
  std::vector<std::string> reasons;
};

bool criteria_met(const StopSignals& s, const EarlyStopConfig& cfg, std::vector<std::string>* reasons = nullptr);

// Stop iff the conjunction of criteria held for `patience` consecutive
// episodes ending at the last entry of `history`.
StopDecision check_early_stop(std::span<const StopSignals> history, const EarlyStopConfig& cfg);

// Incremental form of check_early_stop.
class EarlyStopper {
 public:
  explicit EarlyStopper(EarlyStopConfig cfg);
  StopDecision update(const StopSignals& s);
  std::size_t streak() const { return streak_; }
  const EarlyStopConfig& config() const { return cfg_; }

 private:
  EarlyStopConfig cfg_;
  std::size_t streak_ = 0;
};

}  // namespace econ
