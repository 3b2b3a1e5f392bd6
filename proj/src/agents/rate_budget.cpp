#include "econ/agents/rate_budget.hpp"

#include <algorithm>
#include <string>

namespace econ {

RateBudget::RateBudget(RateLimits limits, Clock& clock) : limits_(limits), clock_(clock) {
  if (limits_.rpm == 0 || limits_.tpm == 0 || !(limits_.window > 0))
    throw std::invalid_argument("RateBudget: rpm, tpm and window must be positive");
}

double RateBudget::acquire(std::size_t tokens, double max_wait) {
  if (tokens > limits_.tpm)
    throw BudgetTimeout("request of " + std::to_string(tokens) + " tokens exceeds the per-minute cap of " +
                        std::to_string(limits_.tpm));
  const double deadline = clock_.now() + max_wait;
  std::unique_lock lock(mu_);
  for (;;) {
    const double now = clock_.now();
    while (!window_.empty() && window_.front().time <= now - limits_.window) window_.pop_front();
    std::size_t used = 0;
    for (const auto& d : window_) used += d.tokens;
    if (window_.size() < limits_.rpm && used + tokens <= limits_.tpm) {
      window_.push_back({now, tokens});
      history_.push_back({now, tokens});
      return now;
    }
    // Earliest time at which enough old dispatches leave the window.
    double wake = window_.front().time + limits_.window;
    if (window_.size() < limits_.rpm) {
      std::size_t freed = 0;
      for (const auto& d : window_) {
        freed += d.tokens;
        wake = d.time + limits_.window;
        if (used - freed + tokens <= limits_.tpm) break;
      }
    }
    if (wake > deadline) throw BudgetTimeout("rate budget wait exceeds the deadline");
    lock.unlock();
    clock_.sleep_until(wake);
    lock.lock();
  }
}

std::vector<Dispatch> RateBudget::dispatches() const {
  std::lock_guard lock(mu_);
  return history_;
}

bool windows_respected(std::span<const Dispatch> dispatches, const RateLimits& limits) {
  std::vector<Dispatch> d(dispatches.begin(), dispatches.end());
  std::sort(d.begin(), d.end(), [](const Dispatch& a, const Dispatch& b) { return a.time < b.time; });
  std::size_t lo = 0, tokens = 0;
  for (std::size_t hi = 0; hi < d.size(); ++hi) {
    tokens += d[hi].tokens;
    while (d[lo].time <= d[hi].time - limits.window) tokens -= d[lo++].tokens;
    if (hi - lo + 1 > limits.rpm || tokens > limits.tpm) return false;
  }
  return true;
}

}  // namespace econ
