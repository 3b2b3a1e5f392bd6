#include "econ/agents/backend.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "econ/numeric/tensor.hpp"

namespace econ {

const char* role_name(Role role) {
  switch (role) {
    case Role::kCoordinatorStrategy: return "coordinator-strategy";
    case Role::kCoordinatorFinal: return "coordinator-final";
    case Role::kExecution: return "execution";
  }
  return "unknown";
}

void GenerationRequest::validate() const {
  if (role == Role::kExecution && !embedding)
    throw ContractViolation("execution request without a prompt embedding");
  if (role != Role::kExecution && embedding)
    throw ContractViolation("coordinator request must not carry a prompt embedding");
}

Utterance Utterance::invalid(std::size_t embed_dim) {
  Utterance u;
  u.text = kInvalidSentinel;
  u.embedding.assign(embed_dim, 0.0);
  u.token_count = 0;
  u.valid = false;
  return u;
}

double mock_accuracy(const MockConfig& cfg, const PromptEmbedding& e) {
  const double dt = (e.temperature - cfg.best_temperature) / cfg.temperature_width;
  const double shape = std::exp(-dt * dt) * (1.0 - 0.3 * std::abs(e.repetition_penalty - cfg.best_penalty));
  return cfg.accuracy_floor + (cfg.accuracy_peak - cfg.accuracy_floor) * shape;
}

std::string solve_question(const std::string& question) {
  static const std::regex pat(R"((-?\d+)\s*([-+*x])\s*(-?\d+))");
  std::smatch m;
  if (std::regex_search(question, m, pat)) {
    const long long a = std::stoll(m[1].str());
    const long long b = std::stoll(m[3].str());
    const char op = m[2].str()[0];
    const long long r = op == '+' ? a + b : op == '-' ? a - b : a * b;
    return std::to_string(r);
  }
  return std::to_string(fnv1a(question) % 100);
}

namespace {

std::vector<double> base_logits(const MockConfig& cfg) {
  std::vector<double> l(cfg.vocab);
  for (std::size_t k = 0; k < cfg.vocab; ++k) l[k] = -cfg.zipf * std::log(static_cast<double>(k + 1));
  return l;
}

std::vector<std::string> sample_tokens(const MockConfig& cfg, double temperature, double penalty, std::size_t n,
                                       std::mt19937_64& rng) {
  const auto base = base_logits(cfg);
  std::vector<int> counts(cfg.vocab, 0);
  std::vector<double> w(cfg.vocab);
  std::vector<std::string> out;
  out.reserve(n);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -1e300;
    for (std::size_t k = 0; k < cfg.vocab; ++k) {
      w[k] = (base[k] - cfg.penalty_strength * penalty * counts[k]) / temperature;
      top = std::max(top, w[k]);
    }
    double z = 0.0;
    for (double& x : w) z += (x = std::exp(x - top));
    double r = u01(rng) * z;
    std::size_t pick = cfg.vocab - 1;
    for (std::size_t k = 0; k < cfg.vocab; ++k) {
      r -= w[k];
      if (r <= 0) {
        pick = k;
        break;
      }
    }
    ++counts[pick];
    out.push_back("w" + std::to_string(pick));
  }
  return out;
}

std::string answer_of(const std::string& text) {
  const auto tokens = split_tokens(text);
  for (std::size_t i = tokens.size(); i-- > 1;)
    if (tokens[i - 1] == "answer:") return tokens[i];
  return tokens.empty() ? "" : tokens.back();
}

Utterance finish(std::string text, std::size_t embed_dim) {
  Utterance u;
  u.token_count = count_tokens(text);
  u.embedding = embed_text(text, embed_dim);
  u.text = std::move(text);
  return u;
}

}  // namespace

double mock_token_entropy(const MockConfig& cfg, double temperature) {
  auto l = base_logits(cfg);
  const double top = *std::max_element(l.begin(), l.end());
  double z = 0.0;
  for (double& x : l) z += (x = std::exp((x - top) / temperature));
  double h = 0.0;
  for (double x : l) {
    const double p = x / z;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

Utterance mock_generate(const GenerationRequest& req, std::uint64_t seed, const MockConfig& cfg) {
  req.validate();
  std::uint64_t s = mix_seed(seed, req.nonce);
  s = mix_seed(s, static_cast<std::uint64_t>(req.agent + 1));
  s = mix_seed(s, static_cast<std::uint64_t>(req.role));
  s = mix_seed(s, fnv1a(req.query));
  std::mt19937_64 rng(s);

  switch (req.role) {
    case Role::kCoordinatorStrategy: {
      auto tokens = sample_tokens(cfg, 1.0, 0.5, cfg.strategy_tokens, rng);
      if (!tokens.empty()) tokens[0] = "strategy:";
      return finish(join_tokens(tokens, req.token_budget), cfg.embed_dim);
    }
    case Role::kCoordinatorFinal: {
      // Majority answer among the valid inputs; the first input carrying it
      // becomes the final output.
      std::vector<std::string> answers;
      std::vector<const std::string*> sources;
      for (const auto& in : req.inputs) {
        if (in == kInvalidSentinel || count_tokens(in) == 0) continue;
        answers.push_back(answer_of(in));
        sources.push_back(&in);
      }
      if (answers.empty()) return Utterance::invalid(cfg.embed_dim);
      std::size_t best = 0, best_count = 0;
      for (std::size_t i = 0; i < answers.size(); ++i) {
        const auto c = static_cast<std::size_t>(std::count(answers.begin(), answers.end(), answers[i]));
        if (c > best_count) {
          best = i;
          best_count = c;
        }
      }
      return finish(join_tokens(split_tokens(*sources[best]), req.token_budget), cfg.embed_dim);
    }
    case Role::kExecution: {
      const PromptEmbedding e = *req.embedding;
      if (!cfg.bounds.contains(e)) throw ContractViolation("mock_generate: prompt embedding outside the action box");
      const std::size_t budget = req.token_budget > 2 ? req.token_budget - 2 : 0;
      auto tokens = sample_tokens(cfg, e.temperature, e.repetition_penalty, std::min(cfg.length, budget), rng);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::string answer = solve_question(req.query);
      if (u01(rng) >= mock_accuracy(cfg, e)) {
        std::uniform_int_distribution<int> off(1, 9);
        const int delta = (u01(rng) < 0.5 ? -1 : 1) * off(rng);
        try {
          answer = std::to_string(std::stoll(answer) + delta);
        } catch (const std::exception&) {
          answer += "x";
        }
      }
      tokens.push_back("answer:");
      tokens.push_back(answer);
      return finish(join_tokens(tokens), cfg.embed_dim);
    }
  }
  return Utterance::invalid(cfg.embed_dim);
}

std::size_t sample_action(const std::vector<double>& logits, std::mt19937_64& rng) {
  if (logits.empty()) throw ContractViolation("sample_action: no actions");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logits[i] - top);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return d(rng);
}

Utterance scripted_game_generate(const GenerationRequest& req, const GamePolicy& policy, std::uint64_t seed) {
  if (!policy) throw ContractViolation("scripted_game_generate: no action head configured");
  const auto logits = policy(req);
  std::mt19937_64 rng(mix_seed(mix_seed(seed, req.nonce), static_cast<std::uint64_t>(req.agent + 1)));
  const std::size_t a = sample_action(logits, rng);
  Utterance u;
  u.text = std::to_string(a);
  u.token_count = 1;
  u.embedding.assign(logits.size(), 0.0);
  u.embedding[a] = 1.0;
  return u;
}

std::vector<double> ScriptedGameBackend::embed(const std::string& text) {
  std::vector<double> v(actions_, 0.0);
  try {
    const auto a = std::stoul(text);
    if (a < actions_) v[a] = 1.0;
  } catch (const std::exception&) {
  }
  return v;
}

}  // namespace econ
