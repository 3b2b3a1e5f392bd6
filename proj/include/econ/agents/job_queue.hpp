#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <future>
#include <stdexcept>
#include <vector>

namespace econ {

// Runs the jobs in mini-batches: every job of a batch is launched
// concurrently and the batch is joined before the next starts. Results keep
// the job order; the first exception is rethrown after the batch joins.
template <class T>
std::vector<T> run_in_batches(const std::vector<std::function<T()>>& jobs, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("run_in_batches: batch size must be positive");
  std::vector<T> out;
  out.reserve(jobs.size());
  for (std::size_t start = 0; start < jobs.size(); start += batch_size) {
    const std::size_t end = std::min(jobs.size(), start + batch_size);
    std::vector<std::future<T>> pending;
    for (std::size_t i = start; i < end; ++i) pending.push_back(std::async(std::launch::async, jobs[i]));
    std::exception_ptr err;
    for (auto& f : pending) {
      try {
        out.push_back(f.get());
      } catch (...) {
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }
  return out;
}

}  // namespace econ
