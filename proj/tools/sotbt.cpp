// Command-line front end: run / validate / list-scenarios.
// Exit codes: 0 success, 1 failure outcome, 2 usage or document errors.

#include <cstdlib>
#include <iostream>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "sotbt/errors.hpp"
#include "sotbt/runner.hpp"
#include "sotbt/scenario.hpp"

using namespace sotbt;

namespace {

std::filesystem::path scenario_dir() {
  const char* env = std::getenv("SOTBT_SCENARIO_DIR");
  return env ? env : SOTBT_SCENARIO_DIR;
}

// Accepts a path, or the bare name of a shipped scenario.
std::filesystem::path find_scenario(const std::string& arg) {
  if (std::filesystem::exists(arg)) return arg;
  for (const auto& info : list_scenarios(scenario_dir()))
    if (info.name == arg || info.path.stem() == arg) return info.path;
  return arg;  // let the loader report it
}

Rates parse_rates(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--rates", "expected dt,R");
  Rates r;
  try {
    std::size_t used = 0;
    r.control_dt = std::stod(text.substr(0, comma), &used);
    r.ticks_ratio = std::stoi(text.substr(comma + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--rates", "expected dt,R");
  }
  if (!(r.control_dt > 0.0) || r.ticks_ratio < 1) throw CLI::ValidationError("--rates", "need dt > 0 and R >= 1");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Behavior-tree driven stack-of-tasks simulator"};
  app.require_subcommand(1);

  std::string run_file;
  int trials = 1;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> exports;
  std::string rates_text;
  bool concurrent = false;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario (or a randomized batch)");
  run_cmd->add_option("scenario", run_file, "Scenario file or shipped scenario name")->required();
  run_cmd->add_option("--trials", trials, "Randomized trials (batch report when > 1)")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed, "Seed (default: the scenario's)");
  run_cmd->add_option("--out", out_dir, "Output directory for exports");
  run_cmd->add_option("--export", exports, "csv, summary or plotdata (repeatable)")
      ->check(CLI::IsMember({"csv", "summary", "plotdata"}));
  run_cmd->add_option("--rates", rates_text, "control_dt,R");
  run_cmd->add_flag("--concurrent", concurrent, "Two-thread mode (not bit-reproducible)");

  std::string validate_file;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario document");
  validate_cmd->add_option("scenario", validate_file, "Scenario file")->required();

  auto* list_cmd = app.add_subcommand("list-scenarios", "List shipped scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*list_cmd) {
      for (const auto& info : list_scenarios(scenario_dir())) {
        std::cout << info.name << "\t" << info.description << "\n";
      }
      return 0;
    }
    if (*validate_cmd) {
      const Scenario sc = load_scenario(validate_file);
      std::cout << "ok: " << sc.name << " (" << sc.tasks.size() << " tasks, " << sc.model->dof() << " joints)\n";
      return 0;
    }

    RunOptions opt;
    opt.concurrent = concurrent;
    if (!rates_text.empty()) opt.rates = parse_rates(rates_text);
    const Scenario sc = load_scenario(find_scenario(run_file));
    const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path("out") / sc.name : std::filesystem::path(out_dir);

    if (trials > 1) {
      const BatchReport rep = run_batch(sc, trials, seed.value_or(sc.seed), opt);
      std::cout << rep.table();
      double wall = 0;
      for (const auto& r : rep.runs) wall += r.wall_per_step;
      std::cout << "mean control_step wall time: " << wall / static_cast<double>(rep.runs.size()) * 1e3 << " ms\n";
      if (!out_dir.empty() || !exports.empty()) {
        std::filesystem::create_directories(dir);
        std::ofstream(dir / "batch.txt") << rep.table();
      }
      return rep.all_success() ? 0 : 1;
    }

    opt.seed = seed;
    const RunResult res = run(sc, opt);
    std::cout << summary_text(res.summary);
    for (const auto& e : exports) {
      for (const auto& p : export_run(res, export_format_from_string(e), dir)) std::cout << "wrote " << p.string() << "\n";
    }
    return res.summary.outcome == Outcome::RootSuccess ? 0 : 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return 2;
  } catch (const UnknownKind& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
