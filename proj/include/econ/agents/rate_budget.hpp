#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "econ/agents/clock.hpp"

namespace econ {

struct RateLimits {
  std::size_t rpm = 60;
  std::size_t tpm = 100000;
  double window = 60.0;
};

// Raised when a reservation can never be satisfied or would wait past its
// deadline.
class BudgetTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dispatch {
  double time = 0.0;
  std::size_t tokens = 0;
};

// Shared gate over rolling request and token windows. acquire() blocks on the
// clock until both windows admit the request, then records the dispatch.
class RateBudget {
 public:
  RateBudget(RateLimits limits, Clock& clock);

  // Returns the dispatch time.
  double acquire(std::size_t tokens, double max_wait = 600.0);

  const RateLimits& limits() const { return limits_; }
  std::vector<Dispatch> dispatches() const;

 private:
  RateLimits limits_;
  Clock& clock_;
  mutable std::mutex mu_;
  std::deque<Dispatch> window_;
  std::vector<Dispatch> history_;
};

// True when no window of the configured width holds more than rpm requests
// or tpm tokens.
bool windows_respected(std::span<const Dispatch> dispatches, const RateLimits& limits);

}  // namespace econ
