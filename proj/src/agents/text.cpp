#include "econ/agents/text.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace econ {

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::size_t count_tokens(const std::string& text) { return split_tokens(text).size(); }

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t limit) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size() && i < limit; ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

TruncateResult truncate_strategy(const std::string& text, const std::function<std::string()>& regenerate,
                                 std::size_t soft, std::size_t hard) {
  if (soft > hard) throw std::invalid_argument("truncate_strategy: soft limit above hard limit");
  TruncateResult r;
  r.text = text;
  std::size_t n = count_tokens(r.text);
  if (n > hard && regenerate) {
    r.text = regenerate();
    r.regenerated = true;
    n = count_tokens(r.text);
  }
  if (n > hard) {
    spdlog::warn("strategy of {} tokens cut at {}", n, hard);
    r.text = join_tokens(split_tokens(r.text), hard);
    r.hard_cut = true;
  } else if (n > soft) {
    spdlog::warn("strategy of {} tokens exceeds the {}-token budget", n, soft);
    r.warned = true;
  }
  return r;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t token_bucket(const std::string& token, std::size_t dim) { return fnv1a(token) % dim; }

std::vector<double> embed_text(const std::string& text, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("embed_text: dimension must be positive");
  std::vector<double> v(dim, 0.0);
  const auto tokens = split_tokens(text);
  if (tokens.empty()) {
    spdlog::warn("embed_text: empty text, returning the zero vector");
    return v;
  }
  for (const auto& t : tokens) v[token_bucket(t, dim)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace econ
