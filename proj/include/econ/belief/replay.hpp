#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <vector>

#include "econ/belief/belief_net.hpp"

namespace econ {

// FIFO buffer bounded at `capacity`; the oldest entry is dropped first.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  }

  void push(T item) {
    items_.push_back(std::move(item));
    while (items_.size() > capacity_) items_.pop_front();
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const std::deque<T>& items() const { return items_; }
  const T& operator[](std::size_t i) const { return items_[i]; }

  // The `n` newest entries, oldest first.
  std::vector<T> recent(std::size_t n) const {
    n = std::min(n, items_.size());
    return std::vector<T>(items_.end() - static_cast<std::ptrdiff_t>(n), items_.end());
  }

  // `n` distinct entries drawn uniformly without replacement, in buffer order.
  std::vector<T> sample(std::size_t n, std::mt19937_64& rng) const {
    if (n > items_.size()) throw std::invalid_argument("replay buffer: sample larger than contents");
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
      std::swap(idx[i], idx[d(rng)]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i : idx) out.push_back(items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

// Binary spill records: a little-endian u64 byte length followed by the
// payload (trajectories, observations, action, reward, terminal flag).
void write_transition(std::ostream& os, const Transition& t);
// Returns false on a clean end of stream; throws on a truncated record.
bool read_transition(std::istream& is, Transition& t);

}  // namespace econ
