#include <catch2/catch_amalgamated.hpp>

#include "oscrl/osc.hpp"
#include "oscrl/rng.hpp"
#include "test_helpers.hpp"

using namespace oscrl;
using namespace testutil;

namespace {

Pose make_pose(const Vector3d& p, const Eigen::Quaterniond& q) {
  Pose out;
  out.position = p;
  out.orientation = q;
  out.canonicalize();
  return out;
}

ChainModel six_dof_arm() {
  ChainModel m = load_arm7();
  m.joints.pop_back();
  m.links.pop_back();
  m.joint_damping.conservativeResize(6);
  m.flange_offset.translation() = Vector3d(0, 0, 0.126);
  return m;
}

TaskSpec xyza_spec() {
  Pose ref;
  ref.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, Vector3d::UnitY()));
  ref.canonicalize();
  return make_task_spec({Dim::X, Dim::Y, Dim::Z, Dim::A}, ref);
}

}  // namespace

TEST_CASE("pose error: identical poses give zero") {
  const Pose p = make_pose(Vector3d(0.1, 0.2, 0.3),
                           Eigen::Quaterniond(Eigen::AngleAxisd(
                               0.7, Vector3d(1, 2, 3).normalized())));
  const VectorXd e = pose_error(p, p, {Dim::X, Dim::Y, Dim::Z, Dim::A, Dim::B,
                                       Dim::C});
  CHECK(e.norm() < 1e-12);
}

TEST_CASE("pose error: pure z offset") {
  const Pose cur = make_pose(Vector3d(0, 0, 0), Eigen::Quaterniond::Identity());
  const Pose des = make_pose(Vector3d(0, 0, 0.05), Eigen::Quaterniond::Identity());
  const VectorXd e = pose_error(cur, des, {Dim::X, Dim::Y, Dim::Z});
  CHECK(e.isApprox(Vector3d(0, 0, 0.05), 1e-12));
}

TEST_CASE("pose error: 30 degree rotation about z on the A dim") {
  const Pose cur = make_pose(Vector3d::Zero(), Eigen::Quaterniond::Identity());
  const Pose des = make_pose(
      Vector3d::Zero(),
      Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 6, Vector3d::UnitZ())));
  const VectorXd e = pose_error(cur, des, {Dim::A});
  // Quaternion-log oracle: angle = 2 atan2(|vec|, w).
  const Eigen::Quaterniond rel =
      des.orientation * cur.orientation.conjugate();
  const double oracle = 2.0 * std::atan2(rel.vec().norm(), rel.w());
  CHECK(e[0] == Catch::Approx(oracle).margin(1e-12));
  CHECK(e[0] == Catch::Approx(0.5236).margin(1e-4));
}

TEST_CASE("pose error: antisymmetry") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Pose a = make_pose(
        Vector3d(rng.normal(), rng.normal(), rng.normal()),
        Eigen::Quaterniond(Eigen::AngleAxisd(
            rng.uniform(-2.0, 2.0),
            Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized())));
    const Pose b = make_pose(
        Vector3d(rng.normal(), rng.normal(), rng.normal()),
        Eigen::Quaterniond(Eigen::AngleAxisd(
            rng.uniform(-2.0, 2.0),
            Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized())));
    const std::vector<Dim> dims = {Dim::X, Dim::Y, Dim::Z, Dim::A, Dim::B,
                                   Dim::C};
    const VectorXd eab = pose_error(a, b, dims);
    const VectorXd eba = pose_error(b, a, dims);
    CHECK((eab.head(3) + eba.head(3)).norm() < 1e-12);
    CHECK((eab.tail(3) + eba.tail(3)).norm() < 1e-9);
  }
}

TEST_CASE("impedance force: zero error and velocity") {
  TaskSpec spec = xyza_spec();
  const VectorXd z = VectorXd::Zero(4);
  CHECK(impedance_force(spec, z, z).f_star.norm() == 0.0);
}

TEST_CASE("impedance force: direct arithmetic") {
  TaskSpec spec = xyza_spec();
  spec.stiffness.setConstant(500.0);
  spec.damping.setConstant(40.0);
  VectorXd e = VectorXd::Zero(4), xd = VectorXd::Zero(4);
  e[0] = 0.01;
  xd[0] = 0.1;
  const CommandVector cmd = impedance_force(spec, e, xd);
  CHECK(cmd.f_star[0] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("impedance force: matches componentwise recomputation") {
  TaskSpec spec = xyza_spec();
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const VectorXd e = rng.normal_vector(4);
    const VectorXd xd = rng.normal_vector(4);
    const CommandVector cmd = impedance_force(spec, e, xd);
    for (int i = 0; i < 4; ++i) {
      const double want = spec.stiffness[i] * e[i] - spec.damping[i] * xd[i];
      CHECK(cmd.f_star[i] == Catch::Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("nullspace projector: vanishes for a full 6-dof task") {
  const ChainModel m = six_dof_arm();
  Rng rng(7);
  int checked = 0;
  while (checked < 10) {
    const VectorXd q = random_q(m, rng);
    const MatrixXd J = jacobian(m, q);
    Eigen::JacobiSVD<MatrixXd> svd(J);
    if (svd.singularValues().minCoeff() < 5e-2) continue;
    ++checked;
    const MatrixXd N = nullspace_projector(m, q, {0, 1, 2, 3, 4, 5});
    CHECK(N.norm() < 1e-8);
  }
}

TEST_CASE("nullspace projector: idempotent and dynamically consistent") {
  const ChainModel m = load_arm7();
  Rng rng(11);
  const std::vector<int> rows = {0, 1, 2, 3, 4, 5};
  int checked = 0;
  while (checked < 100) {
    const VectorXd q = random_q(m, rng);
    const MatrixXd J = jacobian(m, q);
    Eigen::JacobiSVD<MatrixXd> svd(J);
    if (svd.singularValues().minCoeff() < kSingularSigmaMin) continue;
    ++checked;
    const MatrixXd M = mass_matrix(m, q);
    const MatrixXd Minv = M.llt().solve(MatrixXd::Identity(m.n(), m.n()));
    const MatrixXd N = nullspace_projector_from(select_rows(J, rows), Minv);
    CHECK((N * N - N).norm() < 1e-8);
    const VectorXd y = rng.normal_vector(m.n());
    CHECK((J * (Minv * (N * y))).norm() <= 1e-8 * std::max(1.0, y.norm()));
  }
}

TEST_CASE("joint damping torque: formula") {
  const VectorXd qd0 = VectorXd::Zero(7);
  CHECK(joint_damping_torque(MatrixXd::Identity(7, 7), qd0, 2.0).norm() == 0.0);
  const VectorXd qd = VectorXd::Ones(7);
  const VectorXd tau = joint_damping_torque(MatrixXd::Identity(7, 7), qd, 2.0);
  CHECK((tau + 2.0 * VectorXd::Ones(7)).norm() < 1e-12);
}

TEST_CASE("joint damping torque: null-space rollout reduces kinetic energy") {
  ChainModel m = load_arm7();
  m.gravity.setZero();
  Rng rng(13);
  VectorXd q = random_q(m, rng, 0.8);
  VectorXd qd = rng.uniform_vector(m.n(), -0.5, 0.5);
  const std::vector<int> rows = {0, 1, 2, 5};
  const double dt = 0.001;
  const double ke_start = kinetic_energy(m, q, qd);
  for (int step = 0; step < 100; ++step) {
    const MatrixXd M = mass_matrix(m, q);
    const MatrixXd Minv = M.llt().solve(MatrixXd::Identity(m.n(), m.n()));
    const MatrixXd J = select_rows(jacobian(m, q), rows);
    const MatrixXd N = nullspace_projector_from(J, Minv);
    const VectorXd tau = N * joint_damping_torque(M, qd, 2.0);
    const VectorXd qdd = Minv * (tau - coriolis_torque(m, q, qd));
    qd += qdd * dt;
    q += qd * dt;
  }
  const double ke_end = kinetic_energy(m, q, qd);
  CHECK(ke_end < ke_start);
}

TEST_CASE("osc torque: zero command at rest gives zero torque") {
  const ChainModel m = load_arm7();
  Rng rng(17);
  RobotState s;
  s.q = random_q(m, rng);
  s.qdot = VectorXd::Zero(m.n());
  const TaskSpec spec = xyza_spec();
  const OscTorque t = osc_torque(m, s, spec, VectorXd::Zero(4));
  CHECK(t.tau.norm() < 1e-12);
}

TEST_CASE("osc torque: one-link scalar case") {
  const ChainModel m = one_link_arm();
  RobotState s;
  s.q = VectorXd::Zero(1);
  s.qdot = VectorXd::Zero(1);
  TaskSpec spec;
  spec.dims = {Dim::Y};
  spec.stiffness = VectorXd::Constant(1, 500.0);
  spec.damping = VectorXd::Constant(1, 40.0);
  VectorXd f(1);
  f << 2.0;
  const OscTorque t = osc_torque(m, s, spec, f);
  CHECK(t.tau[0] == Catch::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("osc torque: achieves commanded task acceleration from rest") {
  const ChainModel m = load_arm7();
  const TaskSpec spec = xyza_spec();
  const auto rows = spec.task_rows();
  Rng rng(19);
  int checked = 0;
  while (checked < 100) {
    const VectorXd q = random_q(m, rng);
    const MatrixXd J = select_rows(jacobian(m, q), rows);
    Eigen::JacobiSVD<MatrixXd> svd(J);
    if (svd.singularValues().minCoeff() < kSingularSigmaMin) continue;
    ++checked;
    RobotState s;
    s.q = q;
    s.qdot = VectorXd::Zero(m.n());
    const VectorXd f = rng.normal_vector(4) * 5.0;
    const OscTorque t = osc_torque(m, s, spec, f);
    CHECK_FALSE(t.near_singular);
    // Compensated plant at rest: qdd = M^-1 tau, task acc = J qdd.
    const MatrixXd M = mass_matrix(m, q);
    const VectorXd qdd = M.llt().solve(t.tau);
    const VectorXd acc = J * qdd;
    CHECK((acc - f).norm() <= 1e-6 * std::max(1.0, f.norm()));
  }
}

TEST_CASE("osc torque: positively homogeneous in the command at rest") {
  const ChainModel m = load_arm7();
  const TaskSpec spec = xyza_spec();
  Rng rng(23);
  RobotState s;
  s.q = random_q(m, rng);
  s.qdot = VectorXd::Zero(m.n());  // tau_any = 0
  const VectorXd f = rng.normal_vector(4);
  const VectorXd t1 = osc_torque(m, s, spec, f).tau;
  const VectorXd t3 = osc_torque(m, s, spec, (3.7 * f).eval()).tau;
  CHECK((t3 - 3.7 * t1).norm() < 1e-9 * std::max(1.0, t1.norm()));
}

TEST_CASE("build task: passthrough forces, zero theta error") {
  const ChainModel m = load_arm7();
  const TaskSpec spec = xyza_spec();
  Rng rng(29);
  const VectorXd q = random_q(m, rng);
  const DynCache cache = build_dyn_cache(m, q, VectorXd::Zero(m.n()));
  const Vector3d rot =
      rotation_coords(cache.flange.orientation, spec.reference.orientation);

  Eigen::Vector4d a0(0, 0, 0, rot.z());
  CHECK(build_task(a0, spec, cache.flange, cache.twist).f_star.norm() < 1e-12);

  Eigen::Vector4d a1(1, 2, 3, rot.z());
  const VectorXd f = build_task(a1, spec, cache.flange, cache.twist).f_star;
  CHECK(f[0] == Catch::Approx(1.0));
  CHECK(f[1] == Catch::Approx(2.0));
  CHECK(f[2] == Catch::Approx(3.0));
  CHECK(std::abs(f[3]) < 1e-12);
}

TEST_CASE("build task: theta impedance arithmetic") {
  const ChainModel m = load_arm7();
  TaskSpec spec = xyza_spec();
  spec.stiffness[3] = 50.0;
  spec.damping[3] = 5.0;
  Rng rng(31);
  const VectorXd q = random_q(m, rng);
  const DynCache cache = build_dyn_cache(m, q, VectorXd::Zero(m.n()));
  const Vector3d rot =
      rotation_coords(cache.flange.orientation, spec.reference.orientation);
  Eigen::Vector4d a(0, 0, 0, rot.z() + 0.1);
  const VectorXd f = build_task(a, spec, cache.flange, cache.twist).f_star;
  CHECK(f[3] == Catch::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("build task: held dims regulated toward fixed targets") {
  const ChainModel m = load_arm7();
  Pose ref;
  ref.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI, Vector3d::UnitY()));
  ref.canonicalize();
  TaskSpec spec = make_task_spec(
      {Dim::X, Dim::Y, Dim::Z, Dim::A, Dim::B, Dim::C}, ref, {Dim::B, Dim::C});
  Rng rng(37);
  // A configuration whose flange orientation is tilted away from ref.
  const VectorXd q = random_q(m, rng, 0.6);
  const DynCache cache = build_dyn_cache(m, q, VectorXd::Zero(m.n()));
  const Vector3d rot =
      rotation_coords(cache.flange.orientation, spec.reference.orientation);
  Eigen::Vector4d a(0, 0, 0, rot.z());
  const VectorXd f = build_task(a, spec, cache.flange, cache.twist).f_star;
  // Held entries push against the tilt: f_B = -K*rot_y, f_C = -K*rot_x.
  const int ib = spec.index_of(Dim::B), ic = spec.index_of(Dim::C);
  CHECK(f[ib] == Catch::Approx(-spec.stiffness[ib] * rot.y()).margin(1e-9));
  CHECK(f[ic] == Catch::Approx(-spec.stiffness[ic] * rot.x()).margin(1e-9));
}

TEST_CASE("task spec validation") {
  TaskSpec spec = xyza_spec();
  spec.dims.push_back(Dim::X);
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  TaskSpec s2 = xyza_spec();
  s2.stiffness[0] = -1;
  CHECK_THROWS_AS(s2.validate(), ConfigError);
}
