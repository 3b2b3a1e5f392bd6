#pragma once

#include <cstddef>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "econ/agents/backend.hpp"
#include "econ/agents/clock.hpp"
#include "econ/agents/rate_budget.hpp"

namespace econ {

struct HttpResponse {
  // 0 means the request never got a response.
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body) = 0;
};

struct EndpointConfig {
  std::string base_url = "https://api.together.xyz/v1";
  std::string api_key;
  std::string model = "meta-llama/Meta-Llama-3.1-8B-Instruct-Turbo";
  std::string embed_model = "togethercomputer/m2-bert-80M-8k-retrieval";
  std::size_t max_context = 2048;
  double timeout_s = 60.0;
  std::size_t max_retries = 3;
  // Wait before retry k is backoff[min(k, size - 1)] seconds.
  std::vector<double> backoff = {10.0, 20.0, 30.0};
  std::size_t embed_dim = 256;

  // Overrides from ECON_API_KEY, ECON_BASE_URL and ECON_MODEL when set.
  static EndpointConfig from_env(EndpointConfig base);
  void validate() const;
};

// Rate limits from ECON_RPM / ECON_TPM, falling back to `base`.
RateLimits rate_limits_from_env(RateLimits base);

// cpp-httplib client against base_url; https needs OpenSSL.
class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(const EndpointConfig& cfg);
  ~HttplibTransport() override;
  HttpResponse post(const std::string& path, const std::string& body) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Thread-safe JSON Lines call log {ts, role, attempt, tokens_in, tokens_out,
// status}, kept in memory and optionally appended to a file.
class CallLog {
 public:
  CallLog() = default;
  explicit CallLog(const std::string& path);

  void record(double ts, const std::string& role, std::size_t attempt, std::size_t tokens_in,
              std::size_t tokens_out, int status);
  std::vector<nlohmann::json> entries() const;
  // Dispatch view of the log for windows_respected().
  std::vector<Dispatch> dispatches() const;

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> entries_;
  std::ofstream file_;
};

std::string chat_request_body(const GenerationRequest& req, const EndpointConfig& cfg, std::size_t max_tokens);
std::string render_prompt(const GenerationRequest& req);

Utterance http_generate(const GenerationRequest& req, const EndpointConfig& cfg, RateBudget& budget,
                        Transport& transport, Clock& clock, CallLog* log = nullptr);

std::vector<double> http_embed(const std::string& text, const EndpointConfig& cfg, RateBudget& budget,
                               Transport& transport, CallLog* log = nullptr);

class HttpBackend final : public Backend {
 public:
  HttpBackend(EndpointConfig cfg, RateBudget& budget, Transport& transport, Clock& clock, CallLog* log = nullptr)
      : cfg_(std::move(cfg)), budget_(budget), transport_(transport), clock_(clock), log_(log) {}

  Utterance generate(const GenerationRequest& req) override {
    return http_generate(req, cfg_, budget_, transport_, clock_, log_);
  }
  std::vector<double> embed(const std::string& text) override {
    return http_embed(text, cfg_, budget_, transport_, log_);
  }

 private:
  EndpointConfig cfg_;
  RateBudget& budget_;
  Transport& transport_;
  Clock& clock_;
  CallLog* log_;
};

}  // namespace econ
