#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "econ/app/checks.hpp"

// With no arguments every check runs; otherwise only the numbered ones.
int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  econ::CheckOptions opt;
  opt.data_dir = ECON_DATA_DIR;
  opt.scratch_dir = (std::filesystem::temp_directory_path() / ("econ-acceptance-" + std::to_string(getpid()))).string();
  int failed = 0, ran = 0;
  auto report = [&](const econ::CheckResult& r) {
    std::printf("%s\n", econ::format_result(r).c_str());
    std::fflush(stdout);
    failed += !r.passed;
    ++ran;
  };
  if (argc == 1) {
    econ::run_acceptance_checks(opt, report);
  } else {
    for (int k = 1; k < argc; ++k) {
      const int id = std::atoi(argv[k]);
      if (id < 1 || id > econ::kCheckCount) {
        std::fprintf(stderr, "no criterion '%s'\n", argv[k]);
        return 2;
      }
      report(econ::run_check(id, opt));
    }
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
