#include "sotbt/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sotbt/errors.hpp"

namespace sotbt {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::RootSuccess: return "RootSuccess";
    case Outcome::RootFailure: return "RootFailure";
    case Outcome::Timeout: return "Timeout";
    case Outcome::Error: return "Error";
  }
  return "?";
}

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

constexpr double kAttachDistance = 5e-3;

struct WorldState {
  std::map<std::string, Eigen::Vector3d> points;
  std::map<std::string, Eigen::Vector3d> objects;
  std::optional<std::string> held;
  Eigen::Vector3d grasp_offset = Eigen::Vector3d::Zero();
};

Eigen::Vector3d draw(const Placement& p, std::mt19937_64& rng) {
  if (p.fixed) return *p.fixed;
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v(i) = p.box->lower(i) + (p.box->upper(i) - p.box->lower(i)) * unit_draw(rng());
  return v;
}

// Space separated so notes stay one CSV cell.
std::string spaced(const Eigen::Vector3d& v) {
  std::ostringstream o;
  o.precision(17);
  o << v.x() << ' ' << v.y() << ' ' << v.z();
  return o.str();
}

class SimEnvironment : public Environment {
public:
  SimEnvironment(const Scenario& sc, WorldState& ws, const JointState& state) : sc_(sc), ws_(ws), state_(state) {}

  TaskSpec resolve(const TaskSpec& spec) const override {
    auto it = sc_.bindings.find(spec.id);
    if (it == sc_.bindings.end() || it->second.goal.empty()) return spec;
    TaskSpec out = spec;
    const Eigen::Vector3d goal = locate(it->second.goal);
    if (auto* p = std::get_if<PointGoal>(&out.params)) p->position = goal;
    if (auto* p = std::get_if<Pose>(&out.params)) p->position = goal;
    return out;
  }

  double error_norm(const TaskSpec& spec) const override {
    return evaluate(spec, *sc_.model, state_).error_norm;
  }

  bool attach(const std::string& label) override {
    if (!ws_.objects.count(label)) return false;
    if (ws_.held && *ws_.held != label) return false;
    const Eigen::Vector3d ee = forward_kinematics(*sc_.model, state_.q).position;
    const Eigen::Vector3d off = ws_.objects[label] - ee;
    if (off.norm() >= kAttachDistance) return false;
    ws_.held = label;
    ws_.grasp_offset = off;
    return true;
  }

  void detach(const std::string& label) override {
    if (ws_.held == label) ws_.held.reset();
  }

private:
  Eigen::Vector3d locate(const std::string& label) const {
    if (auto it = ws_.points.find(label); it != ws_.points.end()) return it->second;
    return ws_.objects.at(label);
  }

  const Scenario& sc_;
  WorldState& ws_;
  const JointState& state_;
};

struct PendingDisturbance {
  const DisturbanceEvent* event;
  std::optional<double> due;
  bool fired = false;
};

// Everything one run needs, independent of how the loops are scheduled.
struct Sim {
  const Scenario& sc;
  Rates rates;
  std::mt19937_64 rng;
  WorldState world;
  Blackboard bb;
  JointState state;
  std::unique_ptr<Node> tree;
  std::vector<const Node*> nodes;
  std::map<std::string, std::size_t> node_index;
  std::map<std::string, std::size_t> task_index;
  std::map<int, std::size_t> level_index;
  std::vector<PendingDisturbance> pending;
  RunResult result;
  double wall_total = 0.0;

  Sim(const Scenario& s, const RunOptions& opt) : sc(s), rates(opt.rates.value_or(s.rates)) {
    const std::uint64_t seed = opt.seed.value_or(s.seed);
    rng.seed(seed);
    result.summary.scenario = s.name;
    result.summary.seed = seed;
    for (const auto& [k, v] : s.world.points) world.points[k] = v;
    for (const auto& [k, v] : s.world.objects) world.objects[k] = v;
    bb = s.world.blackboard;
    Eigen::VectorXd q0 = s.initial_q;
    if (opt.randomize) {
      if (!s.randomize.regions.empty()) {
        const int r = opt.trial % static_cast<int>(s.randomize.regions.size());
        const StartRegion& reg = s.randomize.regions[static_cast<std::size_t>(r)];
        for (Eigen::Index i = 0; i < q0.size(); ++i) q0(i) = reg.lower(i) + (reg.upper(i) - reg.lower(i)) * unit_draw(rng());
        result.summary.region = r;
      }
      for (const auto& [label, box] : s.randomize.points) world.points[label] = draw(Placement{{}, box}, rng);
      for (const auto& [label, box] : s.randomize.objects) world.objects[label] = draw(Placement{{}, box}, rng);
    }
    state = JointState::at_rest(q0);
    tree = s.build_tree();
    nodes = flatten(*tree);

    Trace& tr = result.trace;
    tr.dof = s.model->dof();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      tr.node_ids.push_back(nodes[i]->id());
      node_index[nodes[i]->id()] = i;
    }
    std::set<int> levels;
    for (std::size_t i = 0; i < s.tasks.size(); ++i) {
      tr.task_ids.push_back(s.tasks[i].id);
      task_index[s.tasks[i].id] = i;
      levels.insert(s.tasks[i].priority);
    }
    tr.levels.assign(levels.begin(), levels.end());
    for (std::size_t i = 0; i < tr.levels.size(); ++i) level_index[tr.levels[i]] = i;
    for (const auto& d : s.disturbances) pending.push_back({&d, d.at, false});
  }

  void fire_disturbances(double t, TickRow& row) {
    for (auto& p : pending) {
      if (p.fired) continue;
      if (!p.due && p.event->when_flag && bb.has(*p.event->when_flag) &&
          bb.get_bool(*p.event->when_flag) == p.event->when_value) {
        p.due = t + p.event->delay;
      }
      if (!p.due || t < *p.due - 1e-12) continue;
      p.fired = true;
      for (const auto& a : p.event->actions) {
        switch (a.kind) {
          case DisturbanceAction::Kind::MoveGoal:
            world.points[a.target] = draw(a.to, rng);
            row.notes.push_back("disturbance: move_goal " + a.target + " to " + spaced(world.points[a.target]));
            break;
          case DisturbanceAction::Kind::MoveObject:
            if (world.held == a.target) world.held.reset();
            world.objects[a.target] = draw(a.to, rng);
            row.notes.push_back("disturbance: move_object " + a.target + " to " + spaced(world.objects[a.target]));
            break;
          case DisturbanceAction::Kind::SetFlag:
            bb.set(a.target, a.value);
            row.notes.push_back("disturbance: set_flag " + a.target);
            break;
        }
      }
    }
  }

  // Ticks `tree` against `stack` (edited in place), returns the tick row.
  TickRow tick(TaskStack& stack, const JointState& at, int index) {
    TickRow row;
    row.index = index;
    row.t = at.t;
    fire_disturbances(at.t, row);
    SimEnvironment env(sc, world, at);
    TickTrace tt;
    TickContext ctx{stack, bb, at.t, &env, &tt};
    row.root = tree->tick(ctx);
    row.revision = stack.revision();
    row.statuses.assign(nodes.size(), '-');
    for (const auto& e : tt.events) {
      const std::size_t i = node_index.at(e.node);
      row.statuses[i] = e.status;
      // A false condition is ordinary branching, not a failure worth reporting.
      if (e.status == 'F' && nodes[i]->kind() != NodeKind::Condition) ++result.summary.node_failures[e.node];
    }
    for (auto& n : tt.notes) row.notes.push_back(std::move(n));
    return row;
  }

  ControlRow row_for(const JointState& st, const StepResult& res, const TaskSnapshot& snap) {
    ControlRow row;
    row.t = st.t;
    row.q = st.q;
    row.qdot = res.solution.qdot;
    row.revision = snap.revision;
    row.active = snap.ids();
    row.errors.assign(task_index.size(), kNaN);
    row.slacks.assign(level_index.size(), kNaN);
    row.singular = res.singular;
    for (std::size_t i = 0; i < res.evaluations.size(); ++i) {
      const TaskEvaluation& ev = res.evaluations[i];
      const TaskSpec& spec = snap.tasks[i].spec;
      if (auto it = task_index.find(ev.task_id); it != task_index.end()) row.errors[it->second] = ev.error_norm;
      if (spec.kind == TaskKind::PlaneAvoid) {
        const double c = std::get<Plane>(spec.params).margin - ev.e(0);
        row.clearance = std::isnan(row.clearance) ? c : std::min(row.clearance, c);
      }
    }
    for (std::size_t i = 0; i < res.solution.levels.size(); ++i) {
      if (auto it = level_index.find(res.solution.levels[i]); it != level_index.end()) {
        row.slacks[it->second] = res.solution.objective_per_level[i];
      }
    }
    if (!std::isnan(row.clearance)) {
      double& m = result.summary.min_clearance;
      m = std::isnan(m) ? row.clearance : std::min(m, row.clearance);
    }
    result.summary.singular_steps += res.singular;
    return row;
  }

  StepResult timed_step(const JointState& st, const TaskSnapshot& snap) {
    const auto t0 = std::chrono::steady_clock::now();
    StepResult res = control_step(*sc.model, st, snap, rates.control_dt);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    wall_total += wall;
    result.summary.max_wall_per_step = std::max(result.summary.max_wall_per_step, wall);
    return res;
  }

  void carry_held(const JointState& st) {
    if (world.held) world.objects[*world.held] = forward_kinematics(*sc.model, st.q).position + world.grasp_offset;
  }

  void finish(Outcome o) {
    RunSummary& s = result.summary;
    s.outcome = o;
    s.ticks = static_cast<int>(result.trace.ticks.size());
    s.sim_time = state.t;
    s.wall_per_step = s.control_steps > 0 ? wall_total / s.control_steps : 0.0;
    for (const Node* n : nodes) {
      if (auto* d = dynamic_cast<const DecoratorNode*>(n); d && d->policy() == DecoratorPolicy::Retry) {
        s.retry_failures += d->failures();
      }
    }
    s.removal_violations = count_removal_violations(result.trace, *tree);
    // Every declared task against the final state and the final world.
    const SimEnvironment env(sc, world, state);
    for (const TaskSpec& t : sc.tasks) {
      if (t.kind == TaskKind::JointVelocityBox) continue;
      try {
        const TaskSpec spec = env.resolve(t);
        // Inequalities report their violation; a satisfied plane reads 0.
        s.final_errors[t.id] = t.kind == TaskKind::PlaneAvoid
                                   ? std::max(0.0, evaluate(spec, *sc.model, state).e(0))
                                   : env.error_norm(spec);
      } catch (const Error&) {
      }
    }
  }
};

Outcome outcome_of(TickStatus s) { return s == TickStatus::Success ? Outcome::RootSuccess : Outcome::RootFailure; }

RunResult run_deterministic(Sim& sim) {
  TaskStack stack;
  const int R = sim.rates.ticks_ratio;
  const double dt = sim.rates.control_dt;
  long step = 0;
  try {
    for (int k = 0;; ++k) {
      sim.state.t = static_cast<double>(step) * dt;
      if (sim.state.t >= sim.sc.max_time - 1e-12) {
        sim.finish(Outcome::Timeout);
        break;
      }
      TaskStack work = stack;
      TickRow tick = sim.tick(work, sim.state, k);
      stack = std::move(work);
      const TickStatus root = tick.root;
      sim.result.trace.ticks.push_back(std::move(tick));
      if (root != TickStatus::Running) {
        const TaskSnapshot snap = stack.snapshot();
        const StepResult res = control_step(*sim.sc.model, sim.state, snap, dt);
        sim.result.trace.rows.push_back(sim.row_for(sim.state, res, snap));
        sim.finish(outcome_of(root));
        break;
      }
      for (int r = 0; r < R; ++r) {
        const TaskSnapshot snap = stack.snapshot();
        StepResult res = sim.timed_step(sim.state, snap);
        sim.result.trace.rows.push_back(sim.row_for(sim.state, res, snap));
        ++step;
        ++sim.result.summary.control_steps;
        sim.state = std::move(res.state);
        sim.state.t = static_cast<double>(step) * dt;
        sim.carry_held(sim.state);
      }
    }
  } catch (const Error& e) {
    sim.result.summary.error = e.what();
    sim.finish(Outcome::Error);
  }
  return std::move(sim.result);
}

// BT and control loops on two threads. The BT thread ticks on a copy of the
// latest state and commits the stack as one batch; the control thread steps
// from snapshots. Only the world/blackboard handoff is serialized.
RunResult run_concurrent(Sim& sim) {
  SharedTaskStack shared;
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  long steps = 0;
  std::optional<Outcome> outcome;
  std::string error;
  const double dt = sim.rates.control_dt;

  std::thread bt([&] {
    long last_seen = -1;
    int k = 0;
    try {
      while (true) {
        JointState at;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return done || steps != last_seen; });
          if (done) return;
          last_seen = steps;
          at = sim.state;
          TaskStack work = shared.working_copy();
          TickRow row = sim.tick(work, at, k++);
          shared.commit(std::move(work));
          const TickStatus root = row.root;
          sim.result.trace.ticks.push_back(std::move(row));
          if (root != TickStatus::Running) {
            outcome = outcome_of(root);
            done = true;
            cv.notify_all();
            return;
          }
        }
        cv.notify_all();
        std::this_thread::yield();
      }
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      error = e.what();
      outcome = Outcome::Error;
      done = true;
      cv.notify_all();
    }
  });

  try {
    while (true) {
      JointState st;
      {
        std::unique_lock lock(mu);
        // Do not run ahead of the first tick.
        cv.wait(lock, [&] { return done || !sim.result.trace.ticks.empty(); });
        if (done) break;
        st = sim.state;
        if (st.t >= sim.sc.max_time - 1e-12) {
          outcome = Outcome::Timeout;
          done = true;
          cv.notify_all();
          break;
        }
      }
      const TaskSnapshot snap = shared.snapshot();
      StepResult res = sim.timed_step(st, snap);
      std::lock_guard lock(mu);
      if (done) break;
      sim.result.trace.rows.push_back(sim.row_for(st, res, snap));
      ++steps;
      ++sim.result.summary.control_steps;
      sim.state = std::move(res.state);
      sim.state.t = static_cast<double>(steps) * dt;
      sim.carry_held(sim.state);
      cv.notify_all();
    }
  } catch (const Error& e) {
    std::lock_guard lock(mu);
    error = e.what();
    outcome = Outcome::Error;
    done = true;
    cv.notify_all();
  }
  bt.join();
  // Final row with the committed stack, as in the deterministic loop.
  if (outcome && *outcome != Outcome::Error && *outcome != Outcome::Timeout) {
    const TaskSnapshot snap = shared.snapshot();
    try {
      const StepResult res = control_step(*sim.sc.model, sim.state, snap, dt);
      sim.result.trace.rows.push_back(sim.row_for(sim.state, res, snap));
    } catch (const Error& e) {
      error = e.what();
      outcome = Outcome::Error;
    }
  }
  sim.result.summary.error = error;
  sim.finish(outcome.value_or(Outcome::Timeout));
  return std::move(sim.result);
}

}  // namespace

RunResult run(const Scenario& scenario, const RunOptions& options) {
  if (options.rates) {
    if (!(options.rates->control_dt > 0.0) || options.rates->ticks_ratio < 1) {
      throw ValidationError("rates need control_dt > 0 and ticks_ratio >= 1");
    }
  }
  Sim sim(scenario, options);
  return options.concurrent ? run_concurrent(sim) : run_deterministic(sim);
}

BatchReport run_batch(const Scenario& scenario, int trials, std::uint64_t seed, const RunOptions& base) {
  if (trials < 1) throw ValidationError("trials must be >= 1");
  BatchReport rep;
  rep.scenario = scenario.name;
  rep.seed = seed;
  const int nregions = std::max<int>(1, static_cast<int>(scenario.randomize.regions.size()));
  rep.regions.resize(static_cast<std::size_t>(nregions));
  for (int i = 0; i < trials; ++i) {
    RunOptions opt = base;
    opt.trial = i;
    opt.seed = trial_seed(seed, i);
    RunResult r = run(scenario, opt);
    RunSummary& s = r.summary;
    const bool ok = s.outcome == Outcome::RootSuccess;
    for (BatchRow* row : {&rep.regions[static_cast<std::size_t>(i % nregions)], &rep.total}) {
      ++row->trials;
      row->success += ok;
      row->first_attempt += ok && s.retry_failures == 0;
      row->failed_first += !(ok && s.retry_failures == 0);
      row->second_attempt += ok && s.retry_failures == 1;
    }
    rep.runs.push_back(std::move(s));
  }
  return rep;
}

std::string BatchReport::table() const {
  auto cell = [](int num, int den) {
    if (den == 0) return std::string("-");
    std::ostringstream o;
    o << num << "/" << den << " (" << std::fixed << std::setprecision(0) << 100.0 * num / den << "%)";
    return o.str();
  };
  std::ostringstream out;
  out << "scenario " << scenario << ", seed " << seed << "\n";
  out << std::left << std::setw(10) << "Position" << std::setw(8) << "Trials" << std::setw(16) << "Overall"
      << std::setw(16) << "Attempt 1" << "Attempt 2\n";
  auto line = [&](const std::string& name, const BatchRow& r) {
    out << std::left << std::setw(10) << name << std::setw(8) << r.trials << std::setw(16) << cell(r.success, r.trials)
        << std::setw(16) << cell(r.first_attempt, r.trials) << cell(r.second_attempt, r.failed_first) << "\n";
  };
  for (std::size_t i = 0; i < regions.size(); ++i) line(std::to_string(i + 1), regions[i]);
  line("Total", total);
  return out.str();
}

int count_removal_violations(const Trace& trace, const Node& tree) {
  const std::vector<const Node*> nodes = flatten(tree);
  // Direct action-children task ids of each SoT-Control node, by flatten index.
  std::vector<std::vector<std::string>> owned(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!is_sot(nodes[i]->kind())) continue;
    for (const auto& c : nodes[i]->children()) {
      if (auto* a = dynamic_cast<const ActionNode*>(c.get())) owned[i].push_back(a->task().id);
    }
  }
  int violations = 0;
  for (const TickRow& tick : trace.ticks) {
    // First row that both follows the tick and sees its committed batch.
    auto from = std::lower_bound(trace.rows.begin(), trace.rows.end(), tick.t - 1e-12,
                                 [](const ControlRow& r, double t) { return r.t < t; });
    auto it = std::find_if(from, trace.rows.end(), [&](const ControlRow& r) { return r.revision >= tick.revision; });
    if (it == trace.rows.end()) continue;
    for (std::size_t i = 0; i < nodes.size() && i < tick.statuses.size(); ++i) {
      const char s = tick.statuses[i];
      if (owned[i].empty() || !(s == 'S' || s == 'F' || s == 'H')) continue;
      for (const auto& id : owned[i]) {
        violations += std::find(it->active.begin(), it->active.end(), id) != it->active.end();
      }
    }
  }
  return violations;
}

}  // namespace sotbt
