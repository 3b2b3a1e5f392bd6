#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace econ {

inline constexpr const char* kInvalidSentinel = "<INVALID>";

// Whitespace tokenization, used for every mock-mode token budget.
std::vector<std::string> split_tokens(const std::string& text);
std::size_t count_tokens(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens, std::size_t limit = SIZE_MAX);

struct TruncateResult {
  std::string text;
  // Length fell in (soft, hard].
  bool warned = false;
  bool regenerated = false;
  bool hard_cut = false;
};

// Strategies up to `soft` tokens pass; up to `hard` pass with a warning;
// longer ones are regenerated once and then cut at `hard` tokens if still
// too long.
TruncateResult truncate_strategy(const std::string& text, const std::function<std::string()>& regenerate,
                                 std::size_t soft = 50, std::size_t hard = 70);

std::uint64_t fnv1a(const std::string& s);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// L2-normalized hashed bag of tokens; an empty text gives the zero vector.
std::vector<double> embed_text(const std::string& text, std::size_t dim = 256);
std::size_t token_bucket(const std::string& token, std::size_t dim);

}  // namespace econ
