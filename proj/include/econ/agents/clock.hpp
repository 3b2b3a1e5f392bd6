#pragma once

#include <mutex>

namespace econ {

// Seconds since an arbitrary epoch.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void sleep_until(double t) = 0;
  void sleep_for(double seconds) { sleep_until(now() + seconds); }
};

class SystemClock final : public Clock {
 public:
  double now() const override;
  void sleep_until(double t) override;
};

// Time only moves when someone sleeps; a sleep returns at once after moving
// the shared time forward to its wake-up point. Thread-safe.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double start = 0.0) : now_(start) {}
  double now() const override;
  void sleep_until(double t) override;
  double total_slept() const;

 private:
  mutable std::mutex mu_;
  double now_;
  double slept_ = 0.0;
};

}  // namespace econ
