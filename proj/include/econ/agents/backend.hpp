#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "econ/agents/text.hpp"
#include "econ/belief/belief_net.hpp"

namespace econ {

enum class Role { kCoordinatorStrategy, kCoordinatorFinal, kExecution };

const char* role_name(Role role);

struct GenerationRequest {
  Role role = Role::kExecution;
  std::string query;
  std::string strategy;
  // Present for execution requests only.
  std::optional<PromptEmbedding> embedding;
  std::size_t token_budget = 256;
  // Execution outputs handed to the coordinator for the final answer.
  std::vector<std::string> inputs;
  // Execution agent index, -1 for the coordinator.
  int agent = -1;
  // Distinguishes otherwise identical calls (episode, retry, ...). Mock and
  // scripted backends derive their sampling seed from it.
  std::uint64_t nonce = 0;

  // Throws ContractViolation when the embedding presence does not match the
  // role.
  void validate() const;
};

struct Utterance {
  std::string text;
  std::vector<double> embedding;
  std::size_t token_count = 0;
  bool valid = true;

  static Utterance invalid(std::size_t embed_dim);
};

// Implementations must allow concurrent generate/embed calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Utterance generate(const GenerationRequest& req) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

// Seeded vocabulary model standing in for an LLM. Tokens w0..w{V-1} have
// Zipf base logits -s log(k+1); each step samples from
// softmax((logit - penalty * p * count) / T), so entropy grows with T and
// repeats fall with p. Execution outputs end with "answer: X", correct with
// a probability that peaks at a preferred (T, p).
struct MockConfig {
  std::size_t vocab = 64;
  std::size_t length = 24;
  double zipf = 1.1;
  double penalty_strength = 3.0;
  std::size_t strategy_tokens = 40;
  std::size_t embed_dim = 256;
  double best_temperature = 0.7;
  double temperature_width = 0.5;
  double best_penalty = 0.5;
  double accuracy_floor = 0.05;
  double accuracy_peak = 0.95;
  ActionBounds bounds;
};

// Probability that a mock execution answer is correct.
double mock_accuracy(const MockConfig& cfg, const PromptEmbedding& e);

// Reference solution of a "a <op> b" question; falls back to a hash of the
// text when no such pattern is present.
std::string solve_question(const std::string& question);

// Shannon entropy (nats) of the first-token distribution at temperature t.
double mock_token_entropy(const MockConfig& cfg, double temperature);

Utterance mock_generate(const GenerationRequest& req, std::uint64_t seed, const MockConfig& cfg = {});

class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::uint64_t seed, MockConfig cfg = {}) : seed_(seed), cfg_(cfg) {}
  Utterance generate(const GenerationRequest& req) override { return mock_generate(req, seed_, cfg_); }
  std::vector<double> embed(const std::string& text) override { return embed_text(text, cfg_.embed_dim); }
  const MockConfig& config() const { return cfg_; }

 private:
  std::uint64_t seed_;
  MockConfig cfg_;
};

// Logits over the discrete game actions for one request.
using GamePolicy = std::function<std::vector<double>(const GenerationRequest&)>;

std::size_t sample_action(const std::vector<double>& logits, std::mt19937_64& rng);

// Text is the sampled action id, embedding its one-hot.
Utterance scripted_game_generate(const GenerationRequest& req, const GamePolicy& policy, std::uint64_t seed);

class ScriptedGameBackend final : public Backend {
 public:
  ScriptedGameBackend(GamePolicy policy, std::size_t actions, std::uint64_t seed)
      : policy_(std::move(policy)), actions_(actions), seed_(seed) {}
  Utterance generate(const GenerationRequest& req) override { return scripted_game_generate(req, policy_, seed_); }
  // One-hot of a numeric action id, zero otherwise.
  std::vector<double> embed(const std::string& text) override;

 private:
  GamePolicy policy_;
  std::size_t actions_;
  std::uint64_t seed_;
};

}  // namespace econ
