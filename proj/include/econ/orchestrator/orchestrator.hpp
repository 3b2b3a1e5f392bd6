#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "econ/agents/backend.hpp"
#include "econ/belief/belief_net.hpp"
#include "econ/belief/replay.hpp"
#include "econ/encoder/belief_encoder.hpp"
#include "econ/mixing/mixing_net.hpp"
#include "econ/numeric/optimizer.hpp"
#include "econ/orchestrator/early_stop.hpp"
#include "econ/reward/reward.hpp"

namespace econ {

struct EconConfig {
  std::size_t agents = 3;

  std::size_t episodes = 100;
  std::size_t buffer = 32;
  std::size_t batch = 16;
  std::size_t update_interval = 8;
  std::size_t steps_per_update = 1;
  // Belief networks.
  double lr = 1e-3;
  // Encoder and mixing network.
  double lr_coord = 5e-4;
  double gamma = 0.99;
  double tau = 0.01;

  BeliefNetConfig belief;
  EncoderConfig encoder;
  MixingConfig mixing;

  double r_max = 1.0;
  RewardWeights alpha;
  double eta_alpha = 0.01;
  double reward_decay = 0.9;
  double lambda_b = 0.1;
  double lambda_e = 0.1;
  double lambda_m = 0.1;

  EarlyStopConfig stop;
  // Consecutive episodes spent on each question.
  std::size_t max_rounds = 1;
  // Std-dev of the Gaussian action noise while training, as a fraction of
  // each action range.
  double explore_sigma = 0.1;
  std::size_t strategy_soft = 50;
  std::size_t strategy_hard = 70;
  std::size_t token_budget = 256;
  // Concurrent execution calls per mini-batch.
  std::size_t job_batch = 8;

  std::uint64_t seed = 0;

  // Copies the shared widths into the sub-configs (encoder input = belief
  // width, mixing group/feature widths = encoder/text widths, agent count).
  void resolve();
  void validate() const;
};

// Per-subsystem seeds derived from the master seed by fixed offsets.
struct SeedPlan {
  std::uint64_t init;
  std::uint64_t generation;
  std::uint64_t exploration;
  std::uint64_t replay;
};
SeedPlan split_seed(std::uint64_t master);

struct Question {
  std::string text;
  std::string reference;
};

// Non-owning; executors holds one backend per agent (entries may repeat).
struct Backends {
  Backend* coordinator = nullptr;
  std::vector<Backend*> executors;
};

struct LossReport {
  std::vector<double> local;
  double td_tot = 0.0;
  double sd = 0.0;
  double consistency = 0.0;
  double mixing = 0.0;
  double encoder = 0.0;
  double total = 0.0;
  std::size_t batch = 0;
  // False when nothing was evaluated or updated.
  bool valid = false;
  // Parameter families in the order they were stepped.
  std::vector<std::string> order;
  std::string notice;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t round = 0;
  Question question;
  std::string strategy;
  bool strategy_warned = false;
  bool strategy_regenerated = false;
  bool strategy_cut = false;

  std::vector<Observation> observations;
  std::vector<std::vector<double>> beliefs;
  std::vector<PromptEmbedding> actions;
  std::vector<double> local_q;
  std::vector<Utterance> utterances;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> expected;
  std::vector<double> group;
  Utterance final_output;
  double q_tot = 0.0;
  double mean_reward = 0.0;
  double r_tot = 0.0;
  double reward_discrepancy = 0.0;
  bool degenerate = false;

  // Filled by the training loop.
  LossReport losses;
  std::optional<LossReport> update;
  StopSignals signals;
  StopDecision stop;
};

nlohmann::json to_json(const EpisodeRecord& rec);
nlohmann::json to_json(const LossReport& rep);

// One joint step: the per-agent transitions plus what the mixing loss needs.
struct JointTransition {
  std::vector<Transition> agents;
  double r_tot = 0.0;
  std::vector<double> final_output;
  bool terminal = false;
};

// Everything that learns: belief networks, encoder, mixing network, reward
// weights and the bookkeeping linking consecutive episodes.
class EconSystem {
 public:
  explicit EconSystem(EconConfig cfg, Evaluator evaluator = mock_evaluator());

  const EconConfig& config() const { return cfg_; }
  std::size_t agents() const { return nets_.size(); }
  BeliefNet& net(std::size_t i) { return *nets_.at(i); }
  const BeliefNet& net(std::size_t i) const { return *nets_.at(i); }
  BeliefEncoder& encoder() { return encoder_; }
  const BeliefEncoder& encoder() const { return encoder_; }
  MixingNet& mixing() { return mixing_; }
  const MixingNet& mixing() const { return mixing_; }
  const RewardWeights& alpha() const { return alpha_; }
  const ReplayBuffer<JointTransition>& buffer() const { return buffer_; }
  std::size_t episode() const { return episode_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }

  // Every parameter store by a stable name, for checksums and checkpoints.
  std::map<std::string, const ParamStore*> stores() const;
  std::map<std::string, ParamStore*> mutable_stores();
  // Combined checksum over all stores.
  std::uint64_t checksum() const;

  // Inference phase for one question; reads parameters, never writes them.
  // With `explore` the actions receive seeded Gaussian noise.
  // `parent_strategy`, when non-empty, is handed to the coordinator as the
  // strategy to refine (hierarchical mode).
  EpisodeRecord run_inference(const Question& q, const Backends& backends, bool explore,
                              const std::string& parent_strategy = {}) const;

  // Global ids of the agents, used in generation requests and exploration
  // seeds; 0..N-1 unless set.
  void set_agent_ids(std::vector<std::size_t> ids);
  const std::vector<std::size_t>& agent_ids() const { return agent_ids_; }

  // Folds an episode into the state: completes the pending transition,
  // queues the new one, advances trajectories, priors and the reward
  // baseline.
  void commit(const EpisodeRecord& rec);

  // Loss values on the newest min(batch, size) transitions; no update.
  LossReport evaluate_losses() const;
  LossReport evaluate_losses(std::span<const JointTransition> batch) const;

  // One optimizer step per parameter family on a sampled batch, then the
  // non-negativity projection, target soft updates and the reward-weight
  // step. Skips, leaving the state untouched, while the buffer holds fewer
  // than `batch` transitions.
  LossReport run_optimization();
  LossReport run_optimization(std::span<const JointTransition> batch);

  MixingSample mixing_sample(const JointTransition& jt) const;

 private:
  EconConfig cfg_;
  Evaluator evaluator_;
  SeedPlan seeds_;
  // Init stream shared by the constructors below, in declaration order.
  std::mt19937_64 init_rng_;
  std::vector<std::unique_ptr<BeliefNet>> nets_;
  BeliefEncoder encoder_;
  MixingNet mixing_;
  RewardWeights alpha_;
  ExpectedReward expected_;
  ReplayBuffer<JointTransition> buffer_;
  std::optional<JointTransition> pending_;
  std::vector<Trajectory> trajectories_;
  std::vector<std::vector<double>> priors_;
  std::vector<std::array<double, 3>> last_components_;
  std::vector<double> last_expected_;
  std::mt19937_64 replay_rng_;
  std::vector<std::size_t> agent_ids_;
  std::size_t episode_ = 0;
};

struct TrainResult {
  std::vector<EpisodeRecord> episodes;
  bool stopped = false;
  std::vector<std::string> stop_reasons;
  // Inference phases whose parameter checksum was compared before/after.
  std::size_t checksum_checks = 0;
};

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

// Inference, buffer append, optimization every update_interval episodes and
// the early-stop check, until the stop rule fires or cfg.episodes run out.
// Throws std::logic_error if an inference phase changes any parameter.
TrainResult train(EconSystem& sys, std::span<const Question> questions, const Backends& backends,
                  const EpisodeCallback& on_episode = {});

// Inference-only pass over the questions (no exploration, no commit).
std::vector<EpisodeRecord> evaluate(const EconSystem& sys, std::span<const Question> questions,
                                    const Backends& backends);

}  // namespace econ
