#include "econ/io/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace econ {

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}

RunConfig::RunConfig() { econ.resolve(); }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (text.empty() || pos != text.size() || !std::isfinite(v))
    throw ConfigError(key, "expected a number, got '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (text.empty() || text[0] == '-' || pos != text.size())
    throw ConfigError(key, "expected a non-negative integer, got '" + text + "'");
  return static_cast<std::size_t>(v);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Field count_field(std::string section, std::string key, std::size_t lo, std::size_t hi, Ref ref) {
  Field f{std::move(section), key, {}, {}};
  f.set = [key, lo, hi, ref](RunConfig& c, const std::string& text) {
    const std::size_t v = parse_count(key, text);
    if (v < lo || v > hi)
      throw ConfigError(key, "value " + text + " outside [" + std::to_string(lo) + ", " +
                                 (hi == std::numeric_limits<std::size_t>::max() ? std::string("inf")
                                                                               : std::to_string(hi)) +
                                 "]");
    ref(c) = v;
  };
  f.get = [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); };
  return f;
}

// Interval with open or closed ends, e.g. "[0, 1)".
struct Range {
  double lo;
  double hi;
  bool lo_open;
  bool hi_open;

  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string text() const {
    auto num = [](double x) {
      if (std::isinf(x)) return std::string(x > 0 ? "inf" : "-inf");
      std::ostringstream os;
      os << x;
      return os.str();
    };
    return std::string(lo_open ? "(" : "[") + num(lo) + ", " + num(hi) + (hi_open ? ")" : "]");
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename Ref>
Field real_field(std::string section, std::string key, Range range, Ref ref) {
  Field f{std::move(section), key, {}, {}};
  f.set = [key, range, ref](RunConfig& c, const std::string& text) {
    const double v = parse_real(key, text);
    if (!range.contains(v)) throw ConfigError(key, "value " + text + " outside " + range.text());
    ref(c) = v;
  };
  f.get = [ref](const RunConfig& c) { return format_real(ref(const_cast<RunConfig&>(c))); };
  return f;
}

template <typename Ref>
Field bool_field(std::string section, std::string key, Ref ref) {
  Field f{std::move(section), key, {}, {}};
  f.set = [key, ref](RunConfig& c, const std::string& text) {
    if (text == "true" || text == "1") {
      ref(c) = true;
    } else if (text == "false" || text == "0") {
      ref(c) = false;
    } else {
      throw ConfigError(key, "expected true or false, got '" + text + "'");
    }
  };
  f.get = [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); };
  return f;
}

template <typename Ref>
Field text_field(std::string section, std::string key, std::vector<std::string> allowed, Ref ref) {
  Field f{std::move(section), key, {}, {}};
  f.set = [key, allowed, ref](RunConfig& c, const std::string& text) {
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), text) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(key, "'" + text + "' is not one of {" + list + "}");
    }
    ref(c) = text;
  };
  f.get = [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); };
  return f;
}

Field alpha_field() {
  Field f{"reward", "alpha", {}, {}};
  f.set = [](RunConfig& c, const std::string& text) {
    std::string body = trim(text);
    if (body.size() < 2 || body.front() != '(' || body.back() != ')')
      throw ConfigError("alpha", "expected a triple (a1, a2, a3), got '" + text + "'");
    body = body.substr(1, body.size() - 2);
    std::vector<double> parts;
    std::stringstream ss(body);
    for (std::string item; std::getline(ss, item, ',');) parts.push_back(parse_real("alpha", trim(item)));
    if (parts.size() != 3) throw ConfigError("alpha", "expected three weights, got " + std::to_string(parts.size()));
    RewardWeights w;
    w.alpha = {parts[0], parts[1], parts[2]};
    try {
      w.validate();
    } catch (const std::invalid_argument&) {
      throw ConfigError("alpha", "weights must be non-negative and sum to 1, got '" + text + "'");
    }
    c.econ.alpha = w;
  };
  f.get = [](const RunConfig& c) {
    const auto& a = c.econ.alpha.alpha;
    return "(" + format_real(a[0]) + ", " + format_real(a[1]) + ", " + format_real(a[2]) + ")";
  };
  return f;
}

Field seed_field() {
  Field f{"run", "seed", {}, {}};
  f.set = [](RunConfig& c, const std::string& text) { c.econ.seed = parse_count("seed", text); };
  f.get = [](const RunConfig& c) { return std::to_string(c.econ.seed); };
  return f;
}

const std::vector<Field>& schema() {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    // [run]
    f.push_back(count_field("run", "agents", 1, 64, [](RunConfig& c) -> std::size_t& { return c.econ.agents; }));
    f.push_back(count_field("run", "episodes", 1, 1000000, [](RunConfig& c) -> std::size_t& { return c.econ.episodes; }));
    f.push_back(seed_field());
    f.push_back(text_field("run", "backend", {"mock", "http"}, [](RunConfig& c) -> std::string& { return c.backend; }));
    f.push_back(text_field("run", "model", {}, [](RunConfig& c) -> std::string& { return c.model; }));
    f.push_back(text_field("run", "questions", {}, [](RunConfig& c) -> std::string& { return c.questions; }));
    f.push_back(count_field("run", "clusters", 1, 64, [](RunConfig& c) -> std::size_t& { return c.clusters; }));
    f.push_back(bool_field("run", "cumulative_tokens", [](RunConfig& c) -> bool& { return c.cumulative_tokens; }));
    // [train]
    f.push_back(count_field("train", "buffer", 1, 1000000, [](RunConfig& c) -> std::size_t& { return c.econ.buffer; }));
    f.push_back(count_field("train", "batch", 1, 1000000, [](RunConfig& c) -> std::size_t& { return c.econ.batch; }));
    f.push_back(count_field("train", "update_interval", 1, kMax,
                            [](RunConfig& c) -> std::size_t& { return c.econ.update_interval; }));
    f.push_back(count_field("train", "steps_per_update", 1, 1000,
                            [](RunConfig& c) -> std::size_t& { return c.econ.steps_per_update; }));
    f.push_back(real_field("train", "lr", {0, 1, true, false}, [](RunConfig& c) -> double& { return c.econ.lr; }));
    f.push_back(real_field("train", "lr_coord", {0, 1, true, false}, [](RunConfig& c) -> double& { return c.econ.lr_coord; }));
    f.push_back(real_field("train", "gamma", {0, 1, false, true}, [](RunConfig& c) -> double& { return c.econ.gamma; }));
    f.push_back(real_field("train", "tau_soft", {0, 1, true, false}, [](RunConfig& c) -> double& { return c.econ.tau; }));
    f.push_back(count_field("train", "max_rounds", 1, 1000, [](RunConfig& c) -> std::size_t& { return c.econ.max_rounds; }));
    f.push_back(real_field("train", "explore_sigma", {0, 1, false, false},
                           [](RunConfig& c) -> double& { return c.econ.explore_sigma; }));
    f.push_back(count_field("train", "job_batch", 1, 1024, [](RunConfig& c) -> std::size_t& { return c.econ.job_batch; }));
    // [network]
    f.push_back(count_field("network", "embed_dim", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.belief.embed_dim; }));
    f.push_back(count_field("network", "belief_dim", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.belief.belief_dim; }));
    f.push_back(count_field("network", "hidden_dim", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.belief.hidden_dim; }));
    f.push_back(count_field("network", "q_hidden", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.belief.q_hidden; }));
    f.push_back(count_field("network", "window", 1, 1024, [](RunConfig& c) -> std::size_t& { return c.econ.belief.window; }));
    f.push_back(count_field("network", "grid", 2, 64, [](RunConfig& c) -> std::size_t& { return c.econ.belief.grid; }));
    f.push_back(count_field("network", "model_dim", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.encoder.model_dim; }));
    f.push_back(count_field("network", "heads", 1, 64, [](RunConfig& c) -> std::size_t& { return c.econ.encoder.heads; }));
    f.push_back(count_field("network", "blocks", 1, 16, [](RunConfig& c) -> std::size_t& { return c.econ.encoder.blocks; }));
    f.push_back(count_field("network", "ff_dim", 1, 16384, [](RunConfig& c) -> std::size_t& { return c.econ.encoder.ff_dim; }));
    f.push_back(real_field("network", "dropout", {0, 1, false, true}, [](RunConfig& c) -> double& { return c.dropout; }));
    f.push_back(count_field("network", "mixing_heads", 1, 64,
                            [](RunConfig& c) -> std::size_t& { return c.econ.mixing.heads; }));
    f.push_back(count_field("network", "attn_dim", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.mixing.attn_dim; }));
    f.push_back(count_field("network", "mixing_hidden", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.mixing.hidden; }));
    f.push_back(bool_field("network", "concat_group", [](RunConfig& c) -> bool& { return c.econ.mixing.concat_group; }));
    // [sampling]
    f.push_back(real_field("sampling", "t_min", {0, kInf, true, true},
                           [](RunConfig& c) -> double& { return c.econ.belief.bounds.t_min; }));
    f.push_back(real_field("sampling", "t_max", {0, kInf, true, true},
                           [](RunConfig& c) -> double& { return c.econ.belief.bounds.t_max; }));
    f.push_back(real_field("sampling", "p_min", {0, 1, false, false},
                           [](RunConfig& c) -> double& { return c.econ.belief.bounds.p_min; }));
    f.push_back(real_field("sampling", "p_max", {0, 1, false, false},
                           [](RunConfig& c) -> double& { return c.econ.belief.bounds.p_max; }));
    f.push_back(count_field("sampling", "strategy_soft", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.strategy_soft; }));
    f.push_back(count_field("sampling", "strategy_hard", 1, 4096,
                            [](RunConfig& c) -> std::size_t& { return c.econ.strategy_hard; }));
    f.push_back(count_field("sampling", "token_budget", 1, 1000000,
                            [](RunConfig& c) -> std::size_t& { return c.econ.token_budget; }));
    // [reward]
    f.push_back(real_field("reward", "r_max", {0, kInf, true, true}, [](RunConfig& c) -> double& { return c.econ.r_max; }));
    f.push_back(alpha_field());
    f.push_back(real_field("reward", "eta_alpha", {0, 1, false, false},
                           [](RunConfig& c) -> double& { return c.econ.eta_alpha; }));
    f.push_back(real_field("reward", "reward_decay", {0, 1, false, true},
                           [](RunConfig& c) -> double& { return c.econ.reward_decay; }));
    f.push_back(real_field("reward", "lambda_b", {0, kInf, false, true}, [](RunConfig& c) -> double& { return c.econ.lambda_b; }));
    f.push_back(real_field("reward", "lambda_e", {0, kInf, false, true}, [](RunConfig& c) -> double& { return c.econ.lambda_e; }));
    f.push_back(real_field("reward", "lambda_m", {0, kInf, false, true}, [](RunConfig& c) -> double& { return c.econ.lambda_m; }));
    // [stop]
    f.push_back(real_field("stop", "eps_c", {0, kInf, true, true}, [](RunConfig& c) -> double& { return c.econ.stop.eps_c; }));
    f.push_back(real_field("stop", "eps_l", {0, kInf, true, true}, [](RunConfig& c) -> double& { return c.econ.stop.eps_l; }));
    f.push_back(real_field("stop", "r_threshold", {0, kInf, true, true},
                           [](RunConfig& c) -> double& { return c.econ.stop.r_threshold; }));
    f.push_back(count_field("stop", "patience", 1, 100000, [](RunConfig& c) -> std::size_t& { return c.econ.stop.patience; }));
    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : schema())
    if (f.key == key) return &f;
  return nullptr;
}

bool known_section(const std::string& s) {
  return std::any_of(schema().begin(), schema().end(), [&](const Field& f) { return f.section == s; });
}

// Checks spanning several keys; each error names the key a user would edit.
void cross_check(RunConfig& cfg) {
  auto& e = cfg.econ;
  if (e.batch > e.buffer)
    throw ConfigError("batch", "value " + std::to_string(e.batch) + " exceeds buffer " + std::to_string(e.buffer));
  if (e.strategy_soft > e.strategy_hard)
    throw ConfigError("strategy_soft", "value " + std::to_string(e.strategy_soft) + " exceeds strategy_hard " +
                                           std::to_string(e.strategy_hard));
  if (!(e.belief.bounds.t_min < e.belief.bounds.t_max)) throw ConfigError("t_min", "must be below t_max");
  if (!(e.belief.bounds.p_min < e.belief.bounds.p_max)) throw ConfigError("p_min", "must be below p_max");
  if (e.encoder.model_dim % e.encoder.heads != 0)
    throw ConfigError("heads", std::to_string(e.encoder.heads) + " does not divide model_dim " +
                                   std::to_string(e.encoder.model_dim));
  if (e.mixing.attn_dim % e.mixing.heads != 0)
    throw ConfigError("mixing_heads", std::to_string(e.mixing.heads) + " does not divide attn_dim " +
                                          std::to_string(e.mixing.attn_dim));
  if (cfg.clusters > e.agents)
    throw ConfigError("clusters", "value " + std::to_string(cfg.clusters) + " exceeds agents " +
                                      std::to_string(e.agents));
  e.resolve();
  e.validate();
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown key");
  f->set(cfg, value);
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("line " + std::to_string(line), "unterminated section header");
      section = trim(text.substr(1, text.size() - 2));
      if (!known_section(section)) throw ConfigError(section, "unknown section");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line), "expected key = value");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw ConfigError(key, "unknown key");
    if (!section.empty() && f->section != section)
      throw ConfigError(key, "belongs to section [" + f->section + "], found under [" + section + "]");
    f->set(cfg, value);
  }
  cross_check(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return parse_config(in);
}

std::string save_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : schema()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> config_fields(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : schema()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

bool same_fields(const RunConfig& a, const RunConfig& b) { return config_fields(a) == config_fields(b); }

std::vector<Question> parse_questions(std::istream& in) {
  std::vector<Question> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty() || trim(raw).front() == '#') continue;
    const auto tab = raw.find('\t');
    if (tab == std::string::npos)
      throw std::invalid_argument("questions line " + std::to_string(line) + ": expected question<TAB>reference");
    out.push_back({trim(raw.substr(0, tab)), trim(raw.substr(tab + 1))});
  }
  if (out.empty()) throw std::invalid_argument("question file holds no questions");
  return out;
}

std::vector<Question> load_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open questions " + path);
  return parse_questions(in);
}

std::vector<Question> builtin_questions() {
  return {{"What is 17 + 25?", "42"}, {"What is 9 * 9?", "81"}, {"What is 120 - 45?", "75"}};
}

}  // namespace econ
