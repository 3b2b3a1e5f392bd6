#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "econ/game/game.hpp"
#include "econ/hierarchy/hierarchy.hpp"
#include "econ/orchestrator/orchestrator.hpp"

namespace econ {

// One line of the per-episode metrics file. Wall-clock time is kept out so
// reruns give identical bytes; it goes to the run manifest instead.
struct MetricsRow {
  std::size_t episode = 0;
  double local_td = 0.0;  // mean over agents
  double td_tot = 0.0;
  double mixing = 0.0;
  double encoder = 0.0;
  double total_loss = 0.0;
  double mean_reward = 0.0;
  double r_tot = 0.0;
  double q_tot = 0.0;
  double delta_c = 0.0;
  bool signals_valid = false;
  bool criteria_met = false;
  bool stop = false;
  bool updated = false;
  std::size_t tokens = 0;

  bool operator==(const MetricsRow&) const = default;
};

// Tokens spent in one episode: strategy, executor outputs and final answer.
std::size_t episode_tokens(const EpisodeRecord& rec);

MetricsRow metrics_row(const EpisodeRecord& rec);
MetricsRow metrics_row(const HierRound& round);

// Replaces per-episode token counts with running totals.
void accumulate_tokens(std::vector<MetricsRow>& rows);

const std::vector<std::string>& metrics_header();

// Header-first CSV. With append, rows are added to an existing file and the
// header is written only when the file is new or empty. Throws
// std::runtime_error when the path cannot be written.
void emit_metrics(std::span<const MetricsRow> rows, const std::string& path, bool append = false);
void write_metrics(std::span<const MetricsRow> rows, std::ostream& out, bool header = true);
// Throws std::invalid_argument on a header mismatch or malformed row.
std::vector<MetricsRow> read_metrics(std::istream& in);
std::vector<MetricsRow> read_metrics(const std::string& path);

// Plot-ready columns separated by spaces, with a '#' header line.
//   loss-curve:   episode local_td total_loss
//   reward-curve: episode mean_reward r_tot
//   regret-curve: T R fit        (fit = a T^b over the trace)
// Throws std::invalid_argument for an unknown kind, a kind that does not
// match the input, or empty input.
void export_plot_data(std::span<const MetricsRow> rows, const std::string& kind, std::ostream& out);
void export_plot_data(const RegretTrace& trace, const std::string& kind, std::ostream& out);

}  // namespace econ
