#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "econ/orchestrator/orchestrator.hpp"

namespace econ {

inline constexpr std::size_t kMaxClusterSize = 4;

struct Cluster {
  std::size_t id = 0;
  std::vector<std::size_t> members;
};

// Alternative partitioning rule; must cover every agent exactly once.
using ClusterPolicy = std::function<std::vector<Cluster>(std::size_t agents, std::size_t k)>;

// Round-robin by default (agent i joins cluster i mod K). Throws
// ContractViolation when K is 0 or exceeds N, when a cluster would exceed
// four members, or when a custom policy breaks the partition.
std::vector<Cluster> assign_clusters(std::size_t agents, std::size_t k, const ClusterPolicy& policy = {});

struct HierConfig {
  std::size_t agents = 9;
  std::size_t clusters = 3;
  // Template for every cluster; its agent count and seed are set per cluster.
  EconConfig base;
  // Global convergence thresholds.
  EarlyStopConfig stop;
  ClusterPolicy policy;

  void validate() const;
};

struct HierBackends {
  Backend* global = nullptr;
  // One local coordinator per cluster.
  std::vector<Backend*> local;
  // One backend per agent, indexed by global agent id.
  std::vector<Backend*> executors;
};

struct HierRound {
  std::size_t round = 0;
  Question question;
  std::string global_strategy;
  // Per-cluster inference records; each final_output is the cluster's c_k.
  std::vector<EpisodeRecord> clusters;
  Utterance final_output;
  // R_k = clip(cos(c_k, C), 0, R_max); 0 for an invalid c_k.
  std::vector<double> cluster_rewards;
  double mean_reward = 0.0;
  // Distinct worker threads that ran the cluster inference phases, and
  // whether all of them were observed in flight at the same time.
  std::size_t inference_threads = 0;
  bool inference_overlapped = false;

  LossReport losses;
  std::optional<LossReport> update;
  StopSignals signals;
  StopDecision stop;
};

nlohmann::json to_json(const HierRound& round);

class HierSystem {
 public:
  explicit HierSystem(HierConfig cfg, Evaluator evaluator = mock_evaluator());

  const HierConfig& config() const { return cfg_; }
  const std::vector<Cluster>& clusters() const { return clusters_; }
  EconSystem& cluster(std::size_t k) { return *systems_.at(k); }
  const EconSystem& cluster(std::size_t k) const { return *systems_.at(k); }
  MixingNet& global_mixing() { return global_; }
  const MixingNet& global_mixing() const { return global_; }
  std::size_t round() const { return round_; }
  std::uint64_t checksum() const;

  // Global strategy, then every cluster's inference phase in parallel, then
  // the global aggregation and cluster rewards. Never writes parameters.
  HierRound run_round(const Question& q, const HierBackends& backends, bool explore) const;

  // Commits each cluster episode with r_tot = R_k and queues the global
  // transition.
  void commit(const HierRound& round);

  // Cluster updates first, then the global mixing step. The order field
  // lists "cluster<k>" entries followed by "global".
  LossReport hier_optimize();
  LossReport evaluate_losses() const;

 private:
  MixingSample global_sample(const HierRound& round) const;

  HierConfig cfg_;
  std::vector<Cluster> clusters_;
  std::vector<std::unique_ptr<EconSystem>> systems_;
  MixingNet global_;
  ReplayBuffer<MixingSample> global_buffer_;
  std::optional<MixingSample> pending_;
  std::mt19937_64 replay_rng_;
  std::size_t round_ = 0;
};

// Conjunction of ||dC|| <= eps_C, mean R_k >= R_th and |dL_tot| <= eps_L
// held for `patience` consecutive rounds.
StopDecision hier_converged(std::span<const StopSignals> history, const EarlyStopConfig& cfg);

struct HierResult {
  std::vector<HierRound> rounds;
  bool stopped = false;
  std::vector<std::string> stop_reasons;
};

using RoundCallback = std::function<void(const HierRound&)>;

HierResult hier_train(HierSystem& sys, std::span<const Question> questions, const HierBackends& backends,
                      std::size_t rounds, const RoundCallback& on_round = {});

}  // namespace econ
