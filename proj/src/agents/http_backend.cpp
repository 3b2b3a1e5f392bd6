#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "econ/agents/http_backend.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <stdexcept>

#include "httplib.h"

namespace econ {

using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

bool retryable(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

EndpointConfig EndpointConfig::from_env(EndpointConfig base) {
  base.api_key = env_or("ECON_API_KEY", base.api_key);
  base.base_url = env_or("ECON_BASE_URL", base.base_url);
  base.model = env_or("ECON_MODEL", base.model);
  return base;
}

void EndpointConfig::validate() const {
  if (base_url.empty()) throw std::invalid_argument("endpoint: base_url is empty");
  if (max_context == 0) throw std::invalid_argument("endpoint: max_context must be positive");
  if (backoff.empty()) throw std::invalid_argument("endpoint: backoff schedule is empty");
  for (std::size_t i = 0; i < backoff.size(); ++i) {
    if (backoff[i] < 0) throw std::invalid_argument("endpoint: negative backoff");
    if (i && backoff[i] < backoff[i - 1]) throw std::invalid_argument("endpoint: backoff must be non-decreasing");
  }
}

RateLimits rate_limits_from_env(RateLimits base) {
  if (const char* v = std::getenv("ECON_RPM")) base.rpm = std::stoul(v);
  if (const char* v = std::getenv("ECON_TPM")) base.tpm = std::stoul(v);
  return base;
}

struct HttplibTransport::Impl {
  std::unique_ptr<httplib::Client> client;
  std::string prefix;
  std::string api_key;
};

HttplibTransport::HttplibTransport(const EndpointConfig& cfg) : impl_(std::make_unique<Impl>()) {
  // Split "scheme://host[:port]/prefix".
  const auto scheme_end = cfg.base_url.find("://");
  const auto path_start = cfg.base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = cfg.base_url.substr(0, path_start);
  impl_->prefix = path_start == std::string::npos ? "" : cfg.base_url.substr(path_start);
  while (!impl_->prefix.empty() && impl_->prefix.back() == '/') impl_->prefix.pop_back();
  impl_->client = std::make_unique<httplib::Client>(origin);
  const auto secs = static_cast<time_t>(cfg.timeout_s);
  impl_->client->set_connection_timeout(secs, 0);
  impl_->client->set_read_timeout(secs, 0);
  impl_->api_key = cfg.api_key;
}

HttplibTransport::~HttplibTransport() = default;

HttpResponse HttplibTransport::post(const std::string& path, const std::string& body) {
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);
  auto res = impl_->client->Post(impl_->prefix + path, headers, body, "application/json");
  if (!res) return {0, httplib::to_string(res.error())};
  return {res->status, res->body};
}

CallLog::CallLog(const std::string& path) : file_(path, std::ios::app) {
  if (!file_) throw std::runtime_error("cannot open call log " + path);
}

void CallLog::record(double ts, const std::string& role, std::size_t attempt, std::size_t tokens_in,
                     std::size_t tokens_out, int status) {
  json j = {{"ts", ts},           {"role", role},     {"attempt", attempt}, {"tokens_in", tokens_in},
            {"tokens_out", tokens_out}, {"status", status}};
  std::lock_guard lock(mu_);
  if (file_.is_open()) file_ << j.dump() << '\n' << std::flush;
  entries_.push_back(std::move(j));
}

std::vector<json> CallLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<Dispatch> CallLog::dispatches() const {
  std::lock_guard lock(mu_);
  std::vector<Dispatch> out;
  for (const auto& e : entries_)
    out.push_back({e["ts"].get<double>(), e["tokens_in"].get<std::size_t>() + e["tokens_out"].get<std::size_t>()});
  return out;
}

std::string render_prompt(const GenerationRequest& req) {
  switch (req.role) {
    case Role::kCoordinatorStrategy:
      if (!req.strategy.empty())
        return "Refine this strategy for your team (at most 50 words):\n" + req.strategy + "\nQuestion: " + req.query;
      return "Give a short strategy and answer format (at most 50 words) for solving:\n" + req.query;
    case Role::kCoordinatorFinal: {
      std::string p = "Question: " + req.query + "\nCandidate solutions:\n";
      for (std::size_t i = 0; i < req.inputs.size(); ++i)
        p += "[" + std::to_string(i + 1) + "] " + req.inputs[i] + "\n";
      return p + "Combine them into one final solution ending with 'answer: <value>'.";
    }
    case Role::kExecution:
      return "Strategy: " + req.strategy + "\nQuestion: " + req.query +
             "\nSolve step by step and end with 'answer: <value>'.";
  }
  return req.query;
}

std::string chat_request_body(const GenerationRequest& req, const EndpointConfig& cfg, std::size_t max_tokens) {
  json body = {{"model", cfg.model},
               {"messages", json::array({{{"role", "user"}, {"content", render_prompt(req)}}})},
               {"max_tokens", max_tokens}};
  if (req.embedding) {
    body["temperature"] = req.embedding->temperature;
    body["repetition_penalty"] = req.embedding->repetition_penalty;
  }
  return body.dump();
}

Utterance http_generate(const GenerationRequest& req, const EndpointConfig& cfg, RateBudget& budget,
                        Transport& transport, Clock& clock, CallLog* log) {
  req.validate();
  const std::string role = role_name(req.role);
  const std::size_t tokens_in = count_tokens(render_prompt(req));
  if (tokens_in >= cfg.max_context) {
    spdlog::warn("{} prompt of {} tokens leaves no room under the {}-token context cap", role, tokens_in,
                 cfg.max_context);
    return Utterance::invalid(cfg.embed_dim);
  }
  const std::size_t max_tokens = std::min(req.token_budget, cfg.max_context - tokens_in);
  const std::string body = chat_request_body(req, cfg, max_tokens);

  for (std::size_t attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
    const double ts = budget.acquire(tokens_in + max_tokens);
    const HttpResponse res = transport.post("/chat/completions", body);
    std::size_t tokens_out = 0;
    std::string text;
    bool malformed = false;
    if (res.status == 200) {
      try {
        const json j = json::parse(res.body);
        text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        tokens_out = j.contains("usage") && j["usage"].contains("completion_tokens")
                         ? j["usage"]["completion_tokens"].get<std::size_t>()
                         : count_tokens(text);
        malformed = count_tokens(text) == 0;
      } catch (const std::exception&) {
        malformed = true;
      }
    }
    if (log) log->record(ts, role, attempt, tokens_in, tokens_out, res.status);
    if (res.status == 200) {
      if (malformed) {
        spdlog::warn("{} call returned malformed output", role);
        return Utterance::invalid(cfg.embed_dim);
      }
      Utterance u;
      u.token_count = count_tokens(text);
      u.text = std::move(text);
      u.embedding = http_embed(u.text, cfg, budget, transport, log);
      return u;
    }
    if (!retryable(res.status)) {
      spdlog::warn("{} call failed with status {}", role, res.status);
      return Utterance::invalid(cfg.embed_dim);
    }
    if (attempt <= cfg.max_retries) {
      const double wait = cfg.backoff[std::min(attempt - 1, cfg.backoff.size() - 1)];
      spdlog::warn("{} call attempt {} failed (status {}), retrying in {}s", role, attempt, res.status, wait);
      clock.sleep_for(wait);
    }
  }
  spdlog::warn("{} call exhausted {} retries", role, cfg.max_retries);
  return Utterance::invalid(cfg.embed_dim);
}

std::vector<double> http_embed(const std::string& text, const EndpointConfig& cfg, RateBudget& budget,
                               Transport& transport, CallLog* log) {
  std::vector<double> zero(cfg.embed_dim, 0.0);
  if (count_tokens(text) == 0) {
    spdlog::warn("http_embed: empty text, returning the zero vector");
    return zero;
  }
  const std::size_t tokens = std::min(count_tokens(text), cfg.max_context);
  const double ts = budget.acquire(tokens);
  const json body = {{"model", cfg.embed_model}, {"input", text}};
  const HttpResponse res = transport.post("/embeddings", body.dump());
  if (log) log->record(ts, "embed", 1, tokens, 0, res.status);
  if (res.status != 200) {
    spdlog::warn("embedding call failed with status {}", res.status);
    return zero;
  }
  try {
    const auto v = json::parse(res.body).at("data").at(0).at("embedding").get<std::vector<double>>();
    if (v.size() == cfg.embed_dim) return v;
    // Fold a provider vector of another width onto embed_dim slots.
    for (std::size_t i = 0; i < v.size(); ++i) zero[i % cfg.embed_dim] += v[i];
    return zero;
  } catch (const std::exception& e) {
    spdlog::warn("malformed embedding response: {}", e.what());
    return zero;
  }
}

}  // namespace econ
