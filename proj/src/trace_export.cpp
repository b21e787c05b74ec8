#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sotbt/errors.hpp"
#include "sotbt/runner.hpp"

namespace sotbt {

namespace {

void num(std::ostream& o, double v) {
  if (!std::isnan(v)) o << v;
}

std::ostringstream stream17() {
  std::ostringstream o;
  o << std::setprecision(17);
  return o;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

std::string trace_csv(const Trace& trace) {
  auto o = stream17();
  o << "t";
  for (int i = 0; i < trace.dof; ++i) o << ",q" << i;
  for (int i = 0; i < trace.dof; ++i) o << ",qd" << i;
  o << ",revision,active,clearance";
  for (const auto& id : trace.task_ids) o << ",e:" << id;
  for (int p : trace.levels) o << ",w" << p;
  o << "\n";
  for (const auto& r : trace.rows) {
    o << r.t;
    for (Eigen::Index i = 0; i < r.q.size(); ++i) o << "," << r.q(i);
    for (Eigen::Index i = 0; i < r.qdot.size(); ++i) o << "," << r.qdot(i);
    o << "," << r.revision << "," << join(r.active, ';') << ",";
    num(o, r.clearance);
    for (double e : r.errors) {
      o << ",";
      num(o, e);
    }
    for (double w : r.slacks) {
      o << ",";
      num(o, w);
    }
    o << "\n";
  }
  return o.str();
}

std::string ticks_csv(const Trace& trace) {
  auto o = stream17();
  o << "tick,t,root,revision";
  for (const auto& id : trace.node_ids) o << ",node:" << id;
  o << ",notes\n";
  for (const auto& k : trace.ticks) {
    o << k.index << "," << k.t << "," << to_string(k.root) << "," << k.revision;
    for (char c : k.statuses) o << "," << c;
    std::string notes = join(k.notes, ';');
    for (char& c : notes)
      if (c == ',' || c == '\n') c = ' ';
    o << "," << notes << "\n";
  }
  return o.str();
}

std::string plot_csv(const Trace& trace) {
  auto o = stream17();
  o << "t";
  for (const auto& id : trace.task_ids) o << ",e:" << id;
  o << ",clearance\n";
  for (const auto& r : trace.rows) {
    o << r.t;
    for (double e : r.errors) {
      o << ",";
      num(o, e);
    }
    o << ",";
    num(o, r.clearance);
    o << "\n";
  }
  return o.str();
}

std::string summary_text(const RunSummary& s) {
  auto o = stream17();
  o << "scenario: " << s.scenario << "\n";
  o << "outcome: " << to_string(s.outcome) << "\n";
  if (!s.error.empty()) o << "error: " << s.error << "\n";
  o << "seed: " << s.seed << "\n";
  if (s.region >= 0) o << "start_region: " << s.region + 1 << "\n";
  o << "sim_time_s: " << s.sim_time << "\n";
  o << "ticks: " << s.ticks << "\n";
  o << "control_steps: " << s.control_steps << "\n";
  o << std::setprecision(6);
  o << "control_step_wall_mean_ms: " << s.wall_per_step * 1e3 << "\n";
  o << "control_step_wall_max_ms: " << s.max_wall_per_step * 1e3 << "\n";
  o << std::setprecision(17);
  o << "min_clearance_m: ";
  if (std::isnan(s.min_clearance)) o << "n/a";
  else o << s.min_clearance;
  o << "\n";
  o << "removal_violations: " << s.removal_violations << "\n";
  o << "singular_steps: " << s.singular_steps << "\n";
  o << "retry_failures: " << s.retry_failures << "\n";
  o << "final_errors:\n";
  for (const auto& [id, e] : s.final_errors) o << "  " << id << ": " << e << "\n";
  o << "node_failures:\n";
  for (const auto& [id, n] : s.node_failures) o << "  " << id << ": " << n << "\n";
  return o.str();
}

ExportFormat export_format_from_string(std::string_view name) {
  if (name == "csv") return ExportFormat::Csv;
  if (name == "summary") return ExportFormat::Summary;
  if (name == "plotdata") return ExportFormat::Plotdata;
  throw ValidationError("unknown export format '" + std::string(name) + "' (csv, summary, plotdata)");
}

std::vector<std::filesystem::path> export_run(const RunResult& result, ExportFormat format,
                                              const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    written.push_back(path);
  };
  switch (format) {
    case ExportFormat::Csv:
      put("trace.csv", trace_csv(result.trace));
      put("ticks.csv", ticks_csv(result.trace));
      break;
    case ExportFormat::Summary:
      put("summary.txt", summary_text(result.summary));
      break;
    case ExportFormat::Plotdata:
      put("plot.csv", plot_csv(result.trace));
      break;
  }
  return written;
}

}  // namespace sotbt
