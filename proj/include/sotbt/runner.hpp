#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sotbt/scenario.hpp"

namespace sotbt {

enum class Outcome { RootSuccess, RootFailure, Timeout, Error };
std::string_view to_string(Outcome o);

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ControlRow {
  double t = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;  // commanded at t
  std::uint64_t revision = 0;
  std::vector<std::string> active;  // snapshot order
  double clearance = kNaN;          // min over active PlaneAvoid tasks, signed distance to the plane itself
  std::vector<double> errors;       // per declared task, NaN when inactive
  std::vector<double> slacks;       // ||w_p|| per trace level, NaN when the level is empty
  bool singular = false;
};

struct TickRow {
  int index = 0;
  double t = 0.0;
  TickStatus root = TickStatus::Running;
  std::uint64_t revision = 0;  // stack revision committed by this tick
  std::vector<char> statuses;  // per node (flatten order); '-' when not ticked
  std::vector<std::string> notes;
};

struct Trace {
  std::vector<std::string> task_ids;  // declared order, e:<id> columns
  std::vector<int> levels;            // w<p> columns
  std::vector<std::string> node_ids;
  int dof = 0;
  std::vector<ControlRow> rows;
  std::vector<TickRow> ticks;
};

struct RunSummary {
  std::string scenario;
  Outcome outcome = Outcome::Timeout;
  std::string error;
  std::uint64_t seed = 0;
  int region = -1;
  double sim_time = 0.0;
  int ticks = 0;
  int control_steps = 0;
  double wall_per_step = 0.0;  // seconds, mean over control_step calls
  double max_wall_per_step = 0.0;
  double min_clearance = kNaN;
  std::map<std::string, double> final_errors;  // evaluated at the final state
  std::map<std::string, int> node_failures;  // Failure returns, conditions excluded
  int removal_violations = 0;
  int singular_steps = 0;
  int retry_failures = 0;  // failures absorbed by Retry decorators
  std::vector<std::string> notes;
};

struct RunResult {
  RunSummary summary;
  Trace trace;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // default: the scenario's seed
  int trial = 0;                      // picks the start region
  std::optional<Rates> rates;
  bool concurrent = false;
  bool randomize = true;  // apply the scenario's randomize section
};

RunResult run(const Scenario& scenario, const RunOptions& options = {});

struct BatchRow {
  int trials = 0;
  int success = 0;
  int first_attempt = 0;
  int failed_first = 0;   // trials whose first attempt failed
  int second_attempt = 0; // of those, recovered after exactly one failure
};

struct BatchReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<BatchRow> regions;
  BatchRow total;
  std::vector<RunSummary> runs;

  bool all_success() const { return total.success == total.trials; }
  std::string table() const;
};

/// Trial i uses seed trial_seed(seed, i) and start region i % regions.
BatchReport run_batch(const Scenario& scenario, int trials, std::uint64_t seed, const RunOptions& base = {});
std::uint64_t trial_seed(std::uint64_t seed, int trial);

// ---- export

std::string trace_csv(const Trace& trace);
std::string ticks_csv(const Trace& trace);
std::string plot_csv(const Trace& trace);
std::string summary_text(const RunSummary& summary);

enum class ExportFormat { Csv, Summary, Plotdata };
ExportFormat export_format_from_string(std::string_view name);
/// Writes files into `dir` (created if missing); returns the paths written.
std::vector<std::filesystem::path> export_run(const RunResult& result, ExportFormat format,
                                              const std::filesystem::path& dir);

/// Removal-completeness check over a finished trace: for every SoT-Control node
/// that returned Success/Failure or was halted at a tick, none of its direct
/// children's task ids may appear in the next control row.
int count_removal_violations(const Trace& trace, const Node& tree);

}  // namespace sotbt
