#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "econ/agents/backend.hpp"
#include "econ/game/game.hpp"
#include "econ/io/config.hpp"
#include "econ/io/manifest.hpp"

namespace econ {

// Owns whatever backs a run: the mock model, or the HTTP client stack.
class BackendStack {
 public:
  // HTTP calls are logged to `call_log` when it is non-empty.
  BackendStack(const RunConfig& cfg, const std::string& call_log = {});
  ~BackendStack();
  BackendStack(const BackendStack&) = delete;
  BackendStack& operator=(const BackendStack&) = delete;

  Backend& backend();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Mock settings matching the run's widths and action box.
MockConfig mock_config_for(const RunConfig& cfg);

std::vector<Question> questions_for(const RunConfig& cfg);

struct RunSummary {
  std::string command;
  std::string out_dir;
  std::size_t episodes = 0;
  bool stopped = false;
  std::vector<std::string> stop_reasons;
  double accuracy = 0.0;  // share of final answers matching the reference
  Manifest manifest;
};

// Each run writes into out_dir (created if needed): the saved config,
// manifest.json, metrics.csv and plot data. train also writes
// episodes.jsonl and checkpoint.ckpt; hier writes rounds.jsonl.
RunSummary run_train(const RunConfig& cfg, const std::string& out_dir);
// Inference only; loads parameters from `checkpoint` when non-empty.
RunSummary run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir);
RunSummary run_hier(const RunConfig& cfg, const std::string& out_dir);

struct GameLabOptions {
  std::string game;
  LearnerKind learner = LearnerKind::kEcon;
  std::size_t steps = 10000;
  std::uint64_t seed = 0;
  // Grid step of the equilibrium oracle; 0 skips it.
  double oracle_rho = 0.0;
};

struct GameLabSummary {
  RegretFit fit;
  double final_regret = 0.0;
  double exploitability = 0.0;
  double oracle_certificate = -1.0;
  Manifest manifest;
};

// Writes regret.csv, regret-curve.dat and manifest.json.
GameLabSummary run_game_lab(const GameLabOptions& opt, const std::string& out_dir);

// Repeats the run a manifest describes, writing into out_dir.
void rerun_manifest(const Manifest& m, const std::string& out_dir);

}  // namespace econ
