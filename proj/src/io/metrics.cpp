#include "econ/io/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "econ/agents/text.hpp"

namespace econ {

namespace {

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_real(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("malformed number '" + s + "'");
  return v;
}

std::size_t to_count(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size() || s.empty() || s[0] == '-') throw std::invalid_argument("malformed count '" + s + "'");
  return static_cast<std::size_t>(v);
}

bool to_flag(const std::string& s) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw std::invalid_argument("malformed flag '" + s + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::size_t episode_tokens(const EpisodeRecord& rec) {
  std::size_t n = count_tokens(rec.strategy);
  for (const auto& u : rec.utterances) n += u.token_count;
  return n + rec.final_output.token_count;
}

MetricsRow metrics_row(const EpisodeRecord& rec) {
  MetricsRow r;
  r.episode = rec.episode;
  if (!rec.losses.local.empty())
    r.local_td = std::accumulate(rec.losses.local.begin(), rec.losses.local.end(), 0.0) /
                 static_cast<double>(rec.losses.local.size());
  r.td_tot = rec.losses.td_tot;
  r.mixing = rec.losses.mixing;
  r.encoder = rec.losses.encoder;
  r.total_loss = rec.losses.total;
  r.mean_reward = rec.mean_reward;
  r.r_tot = rec.r_tot;
  r.q_tot = rec.q_tot;
  r.delta_c = rec.signals.delta_c;
  r.signals_valid = rec.signals.valid;
  r.criteria_met = rec.stop.criteria_met;
  r.stop = rec.stop.stop;
  r.updated = rec.update.has_value() && rec.update->valid;
  r.tokens = episode_tokens(rec);
  return r;
}

MetricsRow metrics_row(const HierRound& round) {
  MetricsRow r;
  r.episode = round.round;
  if (!round.losses.local.empty())
    r.local_td = std::accumulate(round.losses.local.begin(), round.losses.local.end(), 0.0) /
                 static_cast<double>(round.losses.local.size());
  r.td_tot = round.losses.td_tot;
  r.mixing = round.losses.mixing;
  r.encoder = round.losses.encoder;
  r.total_loss = round.losses.total;
  r.mean_reward = round.mean_reward;
  r.r_tot = round.mean_reward;
  for (const auto& c : round.clusters) r.q_tot += c.q_tot;
  r.delta_c = round.signals.delta_c;
  r.signals_valid = round.signals.valid;
  r.criteria_met = round.stop.criteria_met;
  r.stop = round.stop.stop;
  r.updated = round.update.has_value() && round.update->valid;
  r.tokens = count_tokens(round.global_strategy) + round.final_output.token_count;
  for (const auto& c : round.clusters) r.tokens += episode_tokens(c);
  return r;
}

void accumulate_tokens(std::vector<MetricsRow>& rows) {
  std::size_t total = 0;
  for (auto& r : rows) r.tokens = total += r.tokens;
}

const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{"episode",     "local_td", "td_tot",        "mixing",
                                          "encoder",     "total_loss", "mean_reward", "r_tot",
                                          "q_tot",       "delta_c",  "signals_valid", "criteria_met",
                                          "stop",        "updated",  "tokens"};
  return h;
}

void write_metrics(std::span<const MetricsRow> rows, std::ostream& out, bool header) {
  if (header) {
    const auto& h = metrics_header();
    for (std::size_t k = 0; k < h.size(); ++k) out << (k ? "," : "") << h[k];
    out << '\n';
  }
  for (const auto& r : rows) {
    out << r.episode << ',' << real(r.local_td) << ',' << real(r.td_tot) << ',' << real(r.mixing) << ','
        << real(r.encoder) << ',' << real(r.total_loss) << ',' << real(r.mean_reward) << ',' << real(r.r_tot) << ','
        << real(r.q_tot) << ',' << real(r.delta_c) << ',' << r.signals_valid << ',' << r.criteria_met << ','
        << r.stop << ',' << r.updated << ',' << r.tokens << '\n';
  }
}

void emit_metrics(std::span<const MetricsRow> rows, const std::string& path, bool append) {
  std::error_code ec;
  const bool fresh = !append || !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics to " + path);
  write_metrics(rows, out, fresh);
  if (!out) throw std::runtime_error("failed writing metrics to " + path);
}

std::vector<MetricsRow> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("metrics file is empty");
  if (split_csv(line) != metrics_header()) throw std::invalid_argument("metrics header does not match");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != metrics_header().size())
      throw std::invalid_argument("metrics row has " + std::to_string(c.size()) + " columns");
    MetricsRow r;
    try {
      r.episode = to_count(c[0]);
      r.local_td = to_real(c[1]);
      r.td_tot = to_real(c[2]);
      r.mixing = to_real(c[3]);
      r.encoder = to_real(c[4]);
      r.total_loss = to_real(c[5]);
      r.mean_reward = to_real(c[6]);
      r.r_tot = to_real(c[7]);
      r.q_tot = to_real(c[8]);
      r.delta_c = to_real(c[9]);
      r.signals_valid = to_flag(c[10]);
      r.criteria_met = to_flag(c[11]);
      r.stop = to_flag(c[12]);
      r.updated = to_flag(c[13]);
      r.tokens = to_count(c[14]);
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("metrics value out of range in '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics " + path);
  return read_metrics(in);
}

namespace {

void check_kind(const std::string& kind) {
  if (kind != "loss-curve" && kind != "reward-curve" && kind != "regret-curve")
    throw std::invalid_argument("unknown plot kind '" + kind + "' (expected loss-curve, reward-curve or regret-curve)");
}

}  // namespace

void export_plot_data(std::span<const MetricsRow> rows, const std::string& kind, std::ostream& out) {
  check_kind(kind);
  if (kind == "regret-curve") throw std::invalid_argument("regret-curve needs a regret trace");
  if (rows.empty()) throw std::invalid_argument("no metrics rows to export");
  if (kind == "loss-curve") {
    out << "# episode local_td total_loss\n";
    for (const auto& r : rows) out << r.episode << ' ' << real(r.local_td) << ' ' << real(r.total_loss) << '\n';
  } else {
    out << "# episode mean_reward r_tot\n";
    for (const auto& r : rows) out << r.episode << ' ' << real(r.mean_reward) << ' ' << real(r.r_tot) << '\n';
  }
}

void export_plot_data(const RegretTrace& trace, const std::string& kind, std::ostream& out) {
  check_kind(kind);
  if (kind != "regret-curve") throw std::invalid_argument(kind + " needs metrics rows");
  if (trace.total.empty()) throw std::invalid_argument("empty regret trace");
  const RegretFit fit = fit_regret_exponent(trace.total);
  out << "# T R fit a=" << real(fit.a) << " b=" << real(fit.b) << '\n';
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double T = static_cast<double>(t + 1);
    out << t + 1 << ' ' << real(trace.total[t]) << ' ' << real(fit.a * std::pow(T, fit.b) - fit.shift) << '\n';
  }
}

}  // namespace econ
