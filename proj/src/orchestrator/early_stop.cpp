#include "econ/orchestrator/early_stop.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace econ {

void EarlyStopConfig::validate() const {
  if (!(eps_c > 0)) throw std::invalid_argument("eps_c must be positive");
  if (!(r_threshold > 0)) throw std::invalid_argument("r_threshold must be positive");
  if (!(eps_l > 0)) throw std::invalid_argument("eps_l must be positive");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
}

namespace {

std::string describe(const char* what, double value, const char* op, double bound) {
  std::ostringstream os;
  os << what << ' ' << value << ' ' << op << ' ' << bound;
  return os.str();
}

}  // namespace

bool criteria_met(const StopSignals& s, const EarlyStopConfig& cfg, std::vector<std::string>* reasons) {
  if (!s.valid) {
    if (reasons) reasons->push_back("signals undefined");
    return false;
  }
  bool ok = true;
  auto fail = [&](std::string r) {
    ok = false;
    if (reasons) reasons->push_back(std::move(r));
  };
  if (!(std::abs(s.delta_c) <= cfg.eps_c)) fail(describe("output change", s.delta_c, ">", cfg.eps_c));
  if (!(s.mean_reward >= cfg.r_threshold)) fail(describe("mean reward", s.mean_reward, "<", cfg.r_threshold));
  if (!(std::abs(s.delta_loss) <= cfg.eps_l)) fail(describe("loss change", s.delta_loss, ">", cfg.eps_l));
  return ok;
}

StopDecision check_early_stop(std::span<const StopSignals> history, const EarlyStopConfig& cfg) {
  EarlyStopper stopper(cfg);
  StopDecision d;
  for (const auto& s : history) d = stopper.update(s);
  return d;
}

EarlyStopper::EarlyStopper(EarlyStopConfig cfg) : cfg_(cfg) { cfg_.validate(); }

StopDecision EarlyStopper::update(const StopSignals& s) {
  StopDecision d;
  d.criteria_met = criteria_met(s, cfg_, &d.reasons);
  streak_ = d.criteria_met ? streak_ + 1 : 0;
  d.streak = streak_;
  d.stop = streak_ >= cfg_.patience;
  if (d.stop) {
    std::ostringstream os;
    os << "output, reward and loss criteria held for " << streak_ << " consecutive episodes";
    d.reasons.push_back(os.str());
  }
  return d;
}

}  // namespace econ
