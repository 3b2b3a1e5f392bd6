#include "econ/agents/clock.hpp"

#include <chrono>
#include <thread>

namespace econ {

double SystemClock::now() const {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_until(double t) {
  const double d = t - now();
  if (d > 0) std::this_thread::sleep_for(std::chrono::duration<double>(d));
}

double VirtualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::sleep_until(double t) {
  std::lock_guard lock(mu_);
  if (t > now_) {
    slept_ += t - now_;
    now_ = t;
  }
}

double VirtualClock::total_slept() const {
  std::lock_guard lock(mu_);
  return slept_;
}

}  // namespace econ
