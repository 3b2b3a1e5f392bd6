#include <spdlog/spdlog.h>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "econ/app/checks.hpp"
#include "econ/app/pipeline.hpp"
#include "econ/io/config.hpp"
#include "econ/io/manifest.hpp"

namespace {

struct RunArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string manifest;
  std::string checkpoint;
};

void add_run_options(CLI::App* cmd, RunArgs& a, const std::string& default_out) {
  a.out = default_out;
  cmd->add_option("-c,--config", a.config, "config file");
  cmd->add_option("-s,--set", a.sets, "override one key, key=value (repeatable)");
  cmd->add_option("-o,--out", a.out, "output directory")->capture_default_str();
  cmd->add_option("-m,--manifest", a.manifest, "repeat the run recorded in a manifest.json");
}

econ::RunConfig build_config(const RunArgs& a) {
  econ::RunConfig cfg = a.config.empty() ? econ::RunConfig{} : econ::load_config(a.config);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw econ::ConfigError(kv, "expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    econ::set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  // Re-parse so the cross-key checks run on the final values.
  std::istringstream in(econ::save_config(cfg));
  return econ::parse_config(in);
}

void print_summary(const econ::RunSummary& s) {
  std::printf("%s: %zu %s, accuracy %.3f%s -> %s\n", s.command.c_str(), s.episodes,
              s.command == "hier" ? "rounds" : "episodes", s.accuracy, s.stopped ? ", stopped early" : "",
              s.out_dir.c_str());
  for (const auto& r : s.stop_reasons) std::printf("  %s\n", r.c_str());
}

bool replay(const RunArgs& a, const std::string& command) {
  if (a.manifest.empty()) return false;
  const econ::Manifest m = econ::read_manifest(a.manifest);
  if (m.command != command)
    throw std::invalid_argument("manifest records '" + m.command + "', not '" + command + "'");
  econ::rerun_manifest(m, a.out);
  std::printf("%s: replayed %s -> %s\n", command.c_str(), a.manifest.c_str(), a.out.c_str());
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent LLM coordination trainer and game lab"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, err or off")->capture_default_str();
  app.set_version_flag("--version", econ::code_version());

  RunArgs train_args, eval_args, hier_args;
  auto* train = app.add_subcommand("train", "train on the configured questions");
  add_run_options(train, train_args, "runs/train");
  auto* eval = app.add_subcommand("eval", "run inference only");
  add_run_options(eval, eval_args, "runs/eval");
  eval->add_option("-k,--checkpoint", eval_args.checkpoint, "checkpoint written by train");
  auto* hier = app.add_subcommand("hier", "hierarchical training over clusters");
  add_run_options(hier, hier_args, "runs/hier");

  econ::GameLabOptions game;
  std::string learner = "econ", game_out = "runs/game-lab", game_manifest;
  auto* lab = app.add_subcommand("game-lab", "learners on a finite Bayesian game");
  lab->add_option("-g,--game", game.game, "game file");
  lab->add_option("-l,--learner", learner, "econ or debate")->capture_default_str();
  lab->add_option("-n,--steps", game.steps, "rounds of play")->capture_default_str();
  lab->add_option("--seed", game.seed, "random seed")->capture_default_str();
  lab->add_option("--oracle-rho", game.oracle_rho, "grid step of the equilibrium oracle, 0 skips it")
      ->capture_default_str();
  lab->add_option("-o,--out", game_out, "output directory")->capture_default_str();
  lab->add_option("-m,--manifest", game_manifest, "repeat the run recorded in a manifest.json");

  econ::CheckOptions check_opt;
  check_opt.data_dir = ECON_DATA_DIR;
  check_opt.scratch_dir = "runs/check";
  std::vector<int> only;
  auto* check = app.add_subcommand("check", "run the acceptance checks");
  check->add_option("--data", check_opt.data_dir, "data directory")->capture_default_str();
  check->add_option("--scratch", check_opt.scratch_dir, "directory for replay runs")->capture_default_str();
  check->add_option("--only", only, "check numbers to run (repeatable)")->check(CLI::Range(1, econ::kCheckCount));

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(level));

  try {
    if (*train) {
      if (!replay(train_args, "train")) print_summary(econ::run_train(build_config(train_args), train_args.out));
    } else if (*eval) {
      if (!replay(eval_args, "eval"))
        print_summary(econ::run_eval(build_config(eval_args), eval_args.checkpoint, eval_args.out));
    } else if (*hier) {
      if (!replay(hier_args, "hier")) print_summary(econ::run_hier(build_config(hier_args), hier_args.out));
    } else if (*lab) {
      if (!game_manifest.empty()) {
        const econ::Manifest m = econ::read_manifest(game_manifest);
        if (m.command != "game-lab") throw std::invalid_argument("manifest records '" + m.command + "'");
        econ::rerun_manifest(m, game_out);
        std::printf("game-lab: replayed %s -> %s\n", game_manifest.c_str(), game_out.c_str());
      } else {
        if (game.game.empty()) throw std::invalid_argument("--game is required");
        game.learner = econ::parse_learner(learner);
        const econ::GameLabSummary s = econ::run_game_lab(game, game_out);
        std::printf("game-lab: %s, %zu steps, regret %.6g, fit R ~ %.4g T^%.4f, exploitability %.6g", learner.c_str(),
                    game.steps, s.final_regret, s.fit.a, s.fit.b, s.exploitability);
        if (s.oracle_certificate >= 0.0) std::printf(", oracle certificate %.6g", s.oracle_certificate);
        std::printf(" -> %s\n", game_out.c_str());
      }
    } else if (*check) {
      int failed = 0;
      auto report = [&](const econ::CheckResult& r) {
        std::printf("%s\n", econ::format_result(r).c_str());
        std::fflush(stdout);
        failed += !r.passed;
      };
      if (only.empty()) {
        econ::run_acceptance_checks(check_opt, report);
      } else {
        for (int id : only) report(econ::run_check(id, check_opt));
      }
      return failed == 0 ? 0 : 1;
    }
  } catch (const econ::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
