#include "econ/app/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "econ/agents/clock.hpp"
#include "econ/agents/http_backend.hpp"
#include "econ/agents/rate_budget.hpp"
#include "econ/hierarchy/hierarchy.hpp"
#include "econ/io/metrics.hpp"
#include "econ/numeric/checkpoint.hpp"
#include "econ/reward/reward.hpp"

namespace econ {

namespace fs = std::filesystem;

struct BackendStack::Impl {
  std::optional<MockBackend> mock;
  SystemClock clock;
  std::unique_ptr<RateBudget> budget;
  std::unique_ptr<HttplibTransport> transport;
  std::unique_ptr<CallLog> log;
  std::unique_ptr<HttpBackend> http;
};

MockConfig mock_config_for(const RunConfig& cfg) {
  MockConfig m;
  m.embed_dim = cfg.econ.belief.embed_dim;
  m.bounds = cfg.econ.belief.bounds;
  return m;
}

BackendStack::BackendStack(const RunConfig& cfg, const std::string& call_log) : impl_(std::make_unique<Impl>()) {
  if (cfg.backend == "mock") {
    impl_->mock.emplace(split_seed(cfg.econ.seed).generation, mock_config_for(cfg));
    return;
  }
  EndpointConfig base;
  if (!cfg.model.empty()) base.model = cfg.model;
  base.embed_dim = cfg.econ.belief.embed_dim;
  EndpointConfig ep = EndpointConfig::from_env(base);
  ep.validate();
  impl_->budget = std::make_unique<RateBudget>(rate_limits_from_env(RateLimits{}), impl_->clock);
  impl_->transport = std::make_unique<HttplibTransport>(ep);
  impl_->log = call_log.empty() ? std::make_unique<CallLog>() : std::make_unique<CallLog>(call_log);
  impl_->http = std::make_unique<HttpBackend>(ep, *impl_->budget, *impl_->transport, impl_->clock, impl_->log.get());
}

BackendStack::~BackendStack() = default;

Backend& BackendStack::backend() {
  if (impl_->mock) return *impl_->mock;
  return *impl_->http;
}

std::vector<Question> questions_for(const RunConfig& cfg) {
  return cfg.questions.empty() ? builtin_questions() : load_questions(cfg.questions);
}

namespace {

using WallClock = std::chrono::steady_clock;

double seconds_since(WallClock::time_point t0) { return std::chrono::duration<double>(WallClock::now() - t0).count(); }

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

template <typename Fn>
void write_with(const std::string& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  fn(out);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

double accuracy_of(const std::vector<std::pair<std::string, std::string>>& outputs) {
  if (outputs.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& [text, ref] : outputs) hits += exact_match_score(text, ref);
  return hits / static_cast<double>(outputs.size());
}

Backends flat_backends(Backend& b, std::size_t agents) { return {&b, std::vector<Backend*>(agents, &b)}; }

void finish_metrics(std::vector<MetricsRow>& rows, const RunConfig& cfg, const std::string& dir, Manifest& m) {
  if (cfg.cumulative_tokens) accumulate_tokens(rows);
  const std::string metrics = join(dir, "metrics.csv");
  emit_metrics(rows, metrics);
  m.outputs["metrics.csv"] = file_digest(metrics);
  if (!rows.empty()) {
    write_with(join(dir, "loss-curve.dat"), [&](std::ostream& o) { export_plot_data(rows, "loss-curve", o); });
    write_with(join(dir, "reward-curve.dat"), [&](std::ostream& o) { export_plot_data(rows, "reward-curve", o); });
  }
}

}  // namespace

RunSummary run_train(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = WallClock::now();
  prepare_dir(out_dir);
  const std::string text = save_config(cfg);
  write_text(join(out_dir, "config.conf"), text);
  RunSummary s{"train", out_dir, 0, false, {}, 0.0, make_manifest("train", text, cfg.econ.seed, {})};

  const auto questions = questions_for(cfg);
  BackendStack stack(cfg, join(out_dir, "calls.jsonl"));
  EconSystem sys(cfg.econ);
  std::ofstream episodes(join(out_dir, "episodes.jsonl"));
  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::string, std::string>> answers;
  const TrainResult res =
      train(sys, questions, flat_backends(stack.backend(), cfg.econ.agents), [&](const EpisodeRecord& rec) {
        episodes << to_json(rec).dump() << '\n';
        rows.push_back(metrics_row(rec));
        answers.emplace_back(rec.final_output.text, rec.question.reference);
        spdlog::info("episode {} reward {:.4f} loss {:.6g}{}", rec.episode, rec.mean_reward, rec.losses.total,
                     rec.stop.stop ? " (stop)" : "");
      });
  s.episodes = res.episodes.size();
  s.stopped = res.stopped;
  s.stop_reasons = res.stop_reasons;
  s.accuracy = accuracy_of(answers);

  finish_metrics(rows, cfg, out_dir, s.manifest);
  save_checkpoint(join(out_dir, "checkpoint.ckpt"), sys.stores());
  s.manifest.outputs["checkpoint.ckpt"] = file_digest(join(out_dir, "checkpoint.ckpt"));
  s.manifest.wall_seconds = seconds_since(t0);
  write_manifest(s.manifest, join(out_dir, "manifest.json"));
  return s;
}

RunSummary run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& out_dir) {
  const auto t0 = WallClock::now();
  prepare_dir(out_dir);
  const std::string text = save_config(cfg);
  write_text(join(out_dir, "config.conf"), text);
  RunSummary s{"eval", out_dir, 0, false, {}, 0.0,
               make_manifest("eval", text, cfg.econ.seed, {{"checkpoint", checkpoint}})};

  EconSystem sys(cfg.econ);
  if (!checkpoint.empty()) {
    const auto loaded = load_checkpoint(checkpoint);
    auto stores = sys.mutable_stores();
    for (auto& [name, store] : stores) {
      const auto it = loaded.find(name);
      if (it == loaded.end()) throw std::invalid_argument("checkpoint lacks section " + name);
      restore_values(it->second, *store);
    }
  }
  const auto questions = questions_for(cfg);
  BackendStack stack(cfg, join(out_dir, "calls.jsonl"));
  const auto records = evaluate(sys, questions, flat_backends(stack.backend(), cfg.econ.agents));

  std::ofstream episodes(join(out_dir, "episodes.jsonl"));
  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::string, std::string>> answers;
  for (const auto& rec : records) {
    episodes << to_json(rec).dump() << '\n';
    rows.push_back(metrics_row(rec));
    answers.emplace_back(rec.final_output.text, rec.question.reference);
  }
  s.episodes = records.size();
  s.accuracy = accuracy_of(answers);
  finish_metrics(rows, cfg, out_dir, s.manifest);
  s.manifest.wall_seconds = seconds_since(t0);
  write_manifest(s.manifest, join(out_dir, "manifest.json"));
  return s;
}

RunSummary run_hier(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = WallClock::now();
  prepare_dir(out_dir);
  const std::string text = save_config(cfg);
  write_text(join(out_dir, "config.conf"), text);
  RunSummary s{"hier", out_dir, 0, false, {}, 0.0, make_manifest("hier", text, cfg.econ.seed, {})};

  HierConfig hc;
  hc.agents = cfg.econ.agents;
  hc.clusters = cfg.clusters;
  hc.base = cfg.econ;
  hc.stop = cfg.econ.stop;
  HierSystem sys(hc);
  const auto questions = questions_for(cfg);
  BackendStack stack(cfg, join(out_dir, "calls.jsonl"));
  Backend& b = stack.backend();
  const HierBackends backends{&b, std::vector<Backend*>(hc.clusters, &b), std::vector<Backend*>(hc.agents, &b)};

  std::ofstream log(join(out_dir, "rounds.jsonl"));
  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::string, std::string>> answers;
  const HierResult res = hier_train(sys, questions, backends, cfg.econ.episodes, [&](const HierRound& r) {
    log << to_json(r).dump() << '\n';
    rows.push_back(metrics_row(r));
    answers.emplace_back(r.final_output.text, r.question.reference);
    spdlog::info("round {} reward {:.4f}{}", r.round, r.mean_reward, r.stop.stop ? " (stop)" : "");
  });
  s.episodes = res.rounds.size();
  s.stopped = res.stopped;
  s.stop_reasons = res.stop_reasons;
  s.accuracy = accuracy_of(answers);
  finish_metrics(rows, cfg, out_dir, s.manifest);
  s.manifest.wall_seconds = seconds_since(t0);
  write_manifest(s.manifest, join(out_dir, "manifest.json"));
  return s;
}

GameLabSummary run_game_lab(const GameLabOptions& opt, const std::string& out_dir) {
  const auto t0 = WallClock::now();
  prepare_dir(out_dir);
  const FiniteBayesianGame game = load_game(opt.game);
  std::ifstream in(opt.game);
  std::stringstream game_text;
  game_text << in.rdbuf();

  GameLabSummary s;
  const std::string learner = opt.learner == LearnerKind::kEcon ? "econ" : "debate";
  s.manifest = make_manifest("game-lab", game_text.str(), opt.seed,
                             {{"game", opt.game}, {"learner", learner}, {"steps", opt.steps}, {"oracle_rho", opt.oracle_rho}});

  const GameRun run = run_learner(game, opt.learner, opt.steps, opt.seed);
  s.final_regret = run.trace.total.empty() ? 0.0 : run.trace.total.back();
  s.exploitability = exploitability(game, run.final_policy).max_gain;
  const std::string csv = join(out_dir, "regret.csv");
  write_with(csv, [&](std::ostream& o) { write_regret_csv(run.trace, o); });
  s.manifest.outputs["regret.csv"] = file_digest(csv);
  if (run.trace.size() >= 100) {
    s.fit = fit_regret_exponent(run.trace.total);
    write_with(join(out_dir, "regret-curve.dat"),
               [&](std::ostream& o) { export_plot_data(run.trace, "regret-curve", o); });
  }
  if (opt.oracle_rho > 0.0) s.oracle_certificate = brute_force_bne(game, opt.oracle_rho).certificate;
  s.manifest.wall_seconds = seconds_since(t0);
  write_manifest(s.manifest, join(out_dir, "manifest.json"));
  return s;
}

void rerun_manifest(const Manifest& m, const std::string& out_dir) {
  if (m.command == "game-lab") {
    GameLabOptions opt;
    opt.game = m.args.at("game").get<std::string>();
    std::ifstream in(opt.game);
    std::stringstream text;
    text << in.rdbuf();
    if (!in || text.str() != m.config) throw std::runtime_error("game file " + opt.game + " no longer matches the manifest");
    opt.learner = parse_learner(m.args.at("learner").get<std::string>());
    opt.steps = m.args.at("steps").get<std::size_t>();
    opt.seed = m.seed;
    opt.oracle_rho = m.args.value("oracle_rho", 0.0);
    run_game_lab(opt, out_dir);
    return;
  }
  std::istringstream in(m.config);
  const RunConfig cfg = parse_config(in);
  if (m.command == "train") {
    run_train(cfg, out_dir);
  } else if (m.command == "eval") {
    run_eval(cfg, m.args.value("checkpoint", std::string()), out_dir);
  } else if (m.command == "hier") {
    run_hier(cfg, out_dir);
  } else {
    throw std::invalid_argument("manifest names unknown command '" + m.command + "'");
  }
}

}  // namespace econ
