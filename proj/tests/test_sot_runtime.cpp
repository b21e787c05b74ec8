#include <doctest.h>

#include <atomic>
#include <random>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "sotbt/errors.hpp"
#include "sotbt/sot_runtime.hpp"

using namespace sotbt;

namespace {

TaskSpec reach(const std::string& id, const Eigen::Vector3d& goal, int priority = 1, double kp = 1.0) {
  TaskSpec t{id, TaskKind::PointReach, PointGoal{goal}, priority};
  t.gain = Eigen::VectorXd::Constant(1, kp);
  return t;
}

Eigen::VectorXd arm_home() {
  Eigen::VectorXd q(7);
  q << 0.1, -0.3, 0.05, -2.1, 0.05, 1.9, 0.75;
  return q;
}

}  // namespace

TEST_CASE("task stack") {
  TaskStack s;
  SUBCASE("insert and execution time") {
    s.set_task(reach("a", {1, 0, 0}), 2.0);
    CHECK(s.size() == 1);
    CHECK(s.find("a")->execution_time(2.0) == 0.0);
  }
  SUBCASE("upsert keeps t_set, replaces parameters") {
    s.set_task(reach("a", {1, 0, 0}), 0.0);
    s.set_task(reach("a", {0, 1, 0}), 1.0);
    CHECK(s.size() == 1);
    CHECK(s.find("a")->t_set == 0.0);
    CHECK(std::get<PointGoal>(s.find("a")->spec.params).position == Eigen::Vector3d(0, 1, 0));
  }
  SUBCASE("removal") {
    s.set_task(reach("a", {1, 0, 0}), 0.0);
    s.set_task(reach("b", {1, 0, 0}), 0.0);
    const auto rev = s.revision();
    s.remove_tasks(std::vector<std::string>{});
    CHECK(s.revision() == rev);
    s.remove_tasks(std::set<std::string>{"zzz"});
    CHECK(s.revision() == rev);
    s.remove_tasks(std::set<std::string>{"a"});
    CHECK(s.revision() > rev);
    CHECK(s.snapshot().ids() == std::vector<std::string>{"b"});
    s.remove_tasks(std::set<std::string>{"b"});
    CHECK(s.empty());
  }
  SUBCASE("revision strictly increases on mutation") {
    std::uint64_t last = s.revision();
    for (int i = 0; i < 5; ++i) {
      s.set_task(reach("t" + std::to_string(i % 2), {1, 0, 0}), i);
      CHECK(s.revision() > last);
      last = s.revision();
    }
  }
  SUBCASE("snapshot order is priority then insertion") {
    s.set_task(reach("low", {0, 0, 0}, 3), 0);
    s.set_task(reach("first", {0, 0, 0}, 1), 0);
    s.set_task(reach("mid", {0, 0, 0}, 2), 0);
    s.set_task(reach("second", {0, 0, 0}, 1), 0);
    s.set_task(reach("first", {1, 1, 1}, 1), 0);  // upsert keeps its place
    CHECK(s.snapshot().ids() == std::vector<std::string>{"first", "second", "mid", "low"});
    CHECK(s.snapshot().revision == s.revision());
  }
  SUBCASE("equal priorities share one level") {
    const ManipulatorModel m = fixture::model("arm7");
    s.set_task(reach("a", {0.5, 0, 0.3}), 0);
    s.set_task(reach("b", {0.4, 0.1, 0.3}), 0);
    const CascadeProblem p = assemble(m, JointState::at_rest(arm_home()), s.snapshot());
    REQUIRE(p.levels.size() == 1);
    CHECK(p.levels[0].A.rows() == 12);  // two equalities of 3 rows, each as two upper bounds
  }
}

TEST_CASE("control_step") {
  const ManipulatorModel m = fixture::model("arm7");
  const JointState s0 = JointState::at_rest(arm_home(), 0.5);

  SUBCASE("empty stack holds still") {
    const StepResult r = control_step(m, s0, TaskSnapshot{}, 1e-3);
    CHECK(r.state.q == s0.q);
    CHECK(r.state.qdot == Eigen::VectorXd::Zero(7));
    CHECK(r.state.t == 0.5 + 1e-3);
  }
  SUBCASE("first-order decay") {
    const Eigen::Vector3d x = forward_kinematics(m, s0.q).position;
    TaskStack s;
    s.set_task(reach("r", x + Eigen::Vector3d(0.05, 0.03, -0.02)), 0);
    const double e0 = evaluate(s.find("r")->spec, m, s0).error_norm;
    const StepResult r = control_step(m, s0, s.snapshot(), 1e-3);
    const double e1 = evaluate(s.find("r")->spec, m, r.state).error_norm;
    const double expected = e0 * (1 - 1e-3);
    CHECK(std::abs((e0 - e1) - (e0 - expected)) <= 0.05 * (e0 - expected));
    CHECK_FALSE(r.singular);
  }
  SUBCASE("reach behind a plane settles on the boundary") {
    const Eigen::Vector3d x = forward_kinematics(m, s0.q).position;
    TaskStack s;
    TaskSpec plane{"table", TaskKind::PlaneAvoid, Plane{{0, 0, 1}, x.z() - 0.08, 0.02}, 1};
    plane.gain = Eigen::VectorXd::Constant(1, 5.0);
    s.set_task(plane, 0);
    const Eigen::Vector3d goal = x + Eigen::Vector3d(0.05, 0.0, -0.2);
    s.set_task(reach("reach", goal, 2, 2.0), 0);
    JointState st = s0;
    for (int k = 0; k < 6000; ++k) st = control_step(m, st, s.snapshot(), 1e-3).state;
    const Eigen::Vector3d xf = forward_kinematics(m, st.q).position;
    // Plane row is held at its bound (error 0 on the margin surface).
    CHECK(std::abs(evaluate(plane, m, st).e(0)) <= 1e-6);
    CHECK(evaluate(s.find("reach")->spec, m, st).error_norm > 0.01);
    // Constrained least-squares fixed point: closest point to the goal on z >= d + margin
    // is the goal lifted onto that surface.
    const double zs = x.z() - 0.08 + 0.02;
    CHECK((xf - Eigen::Vector3d(goal.x(), goal.y(), zs)).norm() < 1e-4);
  }
  SUBCASE("clamps to position limits") {
    const ManipulatorModel p = fixture::model("planar1");
    TaskStack s;
    s.set_task(reach("r", {-1, -0.001, 0}, 1, 50.0), 0);
    JointState st = JointState::at_rest(Eigen::VectorXd::Constant(1, 3.1));
    for (int k = 0; k < 50; ++k) st = control_step(p, st, s.snapshot(), 1e-2).state;
    CHECK(st.q(0) <= 3.14159);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(control_step(m, s0, TaskSnapshot{}, 0.0), ValidationError);
    CHECK_THROWS_AS(control_step(m, JointState::at_rest(Eigen::VectorXd::Zero(3)), TaskSnapshot{}, 1e-3),
                    DimensionMismatch);
  }
  SUBCASE("stretched arm is flagged") {
    const ManipulatorModel p = fixture::model("planar3");
    TaskStack s;
    s.set_task(reach("r", {2.0, 0.3, 0}), 0);
    CHECK(control_step(p, JointState::at_rest(Eigen::Vector3d(0, 1e-5, 0)), s.snapshot(), 1e-3).singular);
  }
}

TEST_CASE("runtime properties") {
  const ManipulatorModel m = fixture::model("arm7");
  std::mt19937_64 rng(4242);

  SUBCASE("priority dominance over random reaches") {
    double worst = -1;
    for (int trial = 0; trial < 10; ++trial) {
      JointState st = JointState::at_rest(arm_home());
      const Eigen::Vector3d x = forward_kinematics(m, st.q).position;
      const Eigen::Vector3d n = fixture::random_unit(rng);
      TaskSpec plane{"plane", TaskKind::PlaneAvoid, Plane{n, n.dot(x) - 0.05, 0.02}, 1};
      plane.gain = Eigen::VectorXd::Constant(1, 5.0);
      TaskStack s;
      s.set_task(plane, 0);
      s.set_task(reach("r", x - 0.3 * n + 0.1 * fixture::random_unit(rng), 2, 3.0), 0);
      for (int k = 0; k < 1500; ++k) {
        st = control_step(m, st, s.snapshot(), 1e-3).state;
        const auto& pl = std::get<Plane>(plane.params);
        worst = std::max(worst, -pl.clearance(forward_kinematics(m, st.q).position));
      }
    }
    MESSAGE("worst plane violation " << worst);
    CHECK(worst <= 1e-6);
  }
  SUBCASE("velocity box is respected") {
    TaskStack s;
    TaskSpec box{"box", TaskKind::JointVelocityBox, VelocityBox{Eigen::VectorXd::Constant(7, -0.2),
                                                                Eigen::VectorXd::Constant(7, 0.2), false}};
    s.set_task(box, 0);
    JointState st = JointState::at_rest(arm_home());
    const Eigen::Vector3d x = forward_kinematics(m, st.q).position;
    s.set_task(reach("r", x + Eigen::Vector3d(0.2, -0.3, 0.1), 2, 10.0), 0);
    double worst = 0;
    for (int k = 0; k < 500; ++k) {
      const StepResult r = control_step(m, st, s.snapshot(), 1e-3);
      worst = std::max(worst, r.solution.qdot.cwiseAbs().maxCoeff());
      st = r.state;
    }
    CHECK(worst <= 0.2 + 1e-9);
    CHECK(worst > 0.19);
  }
  SUBCASE("bit-identical repeats") {
    auto roll = [&] {
      TaskStack s;
      JointState st = JointState::at_rest(arm_home());
      const Eigen::Vector3d x = forward_kinematics(m, st.q).position;
      s.set_task(TaskSpec{"plane", TaskKind::PlaneAvoid, Plane{{0, 0, 1}, x.z() - 0.05, 0.02}}, 0);
      s.set_task(reach("r", x + Eigen::Vector3d(0.1, 0.1, -0.2), 2, 2.0), 0);
      std::vector<Eigen::VectorXd> qs;
      for (int k = 0; k < 300; ++k) {
        st = control_step(m, st, s.snapshot(), 1e-3).state;
        qs.push_back(st.q);
      }
      return qs;
    };
    CHECK(roll() == roll());
  }
  SUBCASE("a step sees exactly one revision") {
    SharedTaskStack shared;
    const Eigen::Vector3d x = forward_kinematics(m, arm_home()).position;
    std::atomic<bool> stop{false};
    // Writer flips between two consistent batches: {a} alone, or {b, c}.
    std::thread writer([&] {
      int i = 0;
      while (!stop) {
        TaskStack next = shared.working_copy();
        if (i++ % 2 == 0) {
          next.remove_tasks(std::set<std::string>{"b", "c"});
          next.set_task(reach("a", x + Eigen::Vector3d(0.1, 0, 0)), 0);
        } else {
          next.remove_tasks(std::set<std::string>{"a"});
          next.set_task(reach("b", x + Eigen::Vector3d(0, 0.1, 0)), 0);
          next.set_task(reach("c", x + Eigen::Vector3d(0, 0, 0.1), 2), 0);
        }
        shared.commit(std::move(next));
      }
    });
    while (shared.revision() == 0) std::this_thread::yield();
    int mixed = 0;
    int checked = 0;
    for (int k = 0; k < 400; ++k) {
      const TaskSnapshot snap = shared.snapshot();
      const StepResult r = control_step(m, JointState::at_rest(arm_home()), snap, 1e-3);
      std::set<std::string> ids;
      for (const auto& ev : r.evaluations) ids.insert(ev.task_id);
      if (ids.empty()) continue;
      ++checked;
      const bool batch_a = ids == std::set<std::string>{"a"};
      const bool batch_bc = ids == std::set<std::string>{"b", "c"};
      if (!(batch_a || batch_bc) || r.revision != snap.revision) ++mixed;
      // Repeating the step on the same snapshot reproduces it exactly.
      CHECK(control_step(m, JointState::at_rest(arm_home()), snap, 1e-3).state.q == r.state.q);
    }
    stop = true;
    writer.join();
    CHECK(checked > 0);
    CHECK(mixed == 0);
  }
}
