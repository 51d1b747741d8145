// Operational-space control: impedance law f* = K e - D xdot, torque mapping
// tau = J^T (Lambda f*) + N tau_any, task-dimension selection and the 4-dim
// action-to-command conversion. Gravity is never added here; the plant's
// lowest torque level compensates it. Coriolis terms are left out of the
// control law on purpose (they remain in the simulator dynamics).
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "oscrl/chain_model.hpp"
#include "oscrl/error.hpp"

namespace oscrl {

// Controlled cartesian dimensions. A rotates about world Z, B about Y,
// C about X (fixed-world euler convention).
enum class Dim { X = 0, Y = 1, Z = 2, A = 3, B = 4, C = 5 };

// Row of the 6xn Jacobian (linear rows first) carrying a dimension.
inline int jacobian_row(Dim d) {
  switch (d) {
    case Dim::X: return 0;
    case Dim::Y: return 1;
    case Dim::Z: return 2;
    case Dim::A: return 5;  // wz
    case Dim::B: return 4;  // wy
    case Dim::C: return 3;  // wx
  }
  return -1;
}

inline bool is_rotation(Dim d) {
  return d == Dim::A || d == Dim::B || d == Dim::C;
}

struct TaskSpec {
  std::vector<Dim> dims;   // ordered, no duplicates, non-empty
  VectorXd stiffness;      // per dim, N/m or N*m/rad
  VectorXd damping;        // per dim, N*s/m or N*m*s/rad
  // Dims regulated by the controller at a fixed target rather than learned.
  // Targets are coordinates relative to `reference`: meters along the world
  // axis for X/Y/Z, rotation-vector components (rad) for A/B/C.
  std::vector<Dim> held_dims;
  VectorXd held_targets;
  Pose reference;               // pose defining the rotation coordinates
  double k_joint_damp = 2.0;    // null-space joint damper, 1/s

  int m() const { return static_cast<int>(dims.size()); }

  std::vector<int> task_rows() const {
    std::vector<int> rows;
    rows.reserve(dims.size());
    for (Dim d : dims) rows.push_back(jacobian_row(d));
    return rows;
  }

  int index_of(Dim d) const {
    for (int i = 0; i < m(); ++i)
      if (dims[i] == d) return i;
    return -1;
  }

  void validate() const {
    if (dims.empty()) throw ConfigError("task: selected dims must be non-empty");
    for (size_t i = 0; i < dims.size(); ++i)
      for (size_t j = i + 1; j < dims.size(); ++j)
        if (dims[i] == dims[j]) throw ConfigError("task: duplicate dim");
    if (stiffness.size() != m() || damping.size() != m())
      throw ConfigError("task: gain sizes must match dims");
    if ((stiffness.array() < 0).any() || (damping.array() < 0).any())
      throw ConfigError("task: gains must be >= 0");
    if (held_targets.size() != static_cast<int>(held_dims.size()))
      throw ConfigError("task: held target size mismatch");
    for (Dim d : held_dims)
      if (index_of(d) < 0) throw ConfigError("task: held dim not selected");
  }
};

struct CommandVector {
  VectorXd f_star;  // operational-space command, one entry per selected dim
};

// Rotation-vector (axis * angle) of q_rel = q_cur * q_ref^-1, world frame.
inline Vector3d rotation_coords(const Quaterniond& current,
                                const Quaterniond& reference) {
  Quaterniond rel = current * reference.conjugate();
  rel.normalize();
  if (rel.w() < 0) rel.coeffs() = -rel.coeffs();
  const Eigen::AngleAxisd aa(rel);
  return aa.angle() * aa.axis();
}

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

// Error between current and desired pose projected onto the selected dims:
// translation entries are desired - current, rotation entries are the
// components of the rotation vector of q_des * q_cur^-1.
inline VectorXd pose_error(const Pose& current, const Pose& desired,
                           const std::vector<Dim>& dims) {
  const Vector3d dp = desired.position - current.position;
  const Vector3d dr = rotation_coords(desired.orientation, current.orientation);
  VectorXd e(static_cast<int>(dims.size()));
  for (size_t i = 0; i < dims.size(); ++i) {
    switch (dims[i]) {
      case Dim::X: e[i] = dp.x(); break;
      case Dim::Y: e[i] = dp.y(); break;
      case Dim::Z: e[i] = dp.z(); break;
      case Dim::A: e[i] = dr.z(); break;
      case Dim::B: e[i] = dr.y(); break;
      case Dim::C: e[i] = dr.x(); break;
    }
  }
  return e;
}

// f* = K e - D xdot (unit-mass spring damper).
inline CommandVector impedance_force(const TaskSpec& spec, const VectorXd& e,
                                     const VectorXd& xdot) {
  if (e.size() != spec.m() || xdot.size() != spec.m())
    throw DimensionError("impedance_force: dimension mismatch");
  CommandVector cmd;
  cmd.f_star =
      spec.stiffness.cwiseProduct(e) - spec.damping.cwiseProduct(xdot);
  return cmd;
}

// N = I - J^T Jbar^T over the selected task rows.
inline MatrixXd nullspace_projector_from(const MatrixXd& J_sel,
                                         const MatrixXd& Minv,
                                         bool* near_singular = nullptr) {
  const DynConsistentPinv p = dyn_consistent_pinv_from(J_sel, Minv);
  if (near_singular) *near_singular = p.near_singular;
  const int n = static_cast<int>(J_sel.cols());
  return MatrixXd::Identity(n, n) - J_sel.transpose() * p.jbar.transpose();
}

inline MatrixXd nullspace_projector(const ChainModel& model, const VectorXd& q,
                                    const std::vector<int>& task_rows) {
  const MatrixXd J = jacobian(model, q);
  const MatrixXd M = mass_matrix(model, q);
  const MatrixXd Minv = M.llt().solve(MatrixXd::Identity(model.n(), model.n()));
  return nullspace_projector_from(select_rows(J, task_rows), Minv);
}

// tau_any = M (-k qdot): damps kinetic energy without task acceleration.
inline VectorXd joint_damping_torque(const MatrixXd& M, const VectorXd& qdot,
                                     double k_joint_damp) {
  if (k_joint_damp < 0) throw ConfigError("joint damping gain must be >= 0");
  return M * (-k_joint_damp * qdot);
}

inline VectorXd joint_damping_torque(const ChainModel& model, const VectorXd& q,
                                     const VectorXd& qdot,
                                     double k_joint_damp) {
  return joint_damping_torque(mass_matrix(model, q), qdot, k_joint_damp);
}

struct OscTorque {
  VectorXd tau;
  bool near_singular = false;
};

// tau = J^T (Lambda f*) + N tau_any.
inline OscTorque osc_torque(const DynCache& cache, const TaskSpec& spec,
                            const VectorXd& f_star) {
  if (f_star.size() != spec.m())
    throw DimensionError("osc_torque: command dimension mismatch");
  if (!f_star.allFinite()) throw Error("osc_torque: non-finite command");
  const MatrixXd J_sel = select_rows(cache.J, spec.task_rows());
  const TaskInertia ti = task_inertia_from(J_sel, cache.Minv);
  OscTorque out;
  out.near_singular = ti.near_singular;
  out.tau = J_sel.transpose() * (ti.lambda * f_star);
  const int n = static_cast<int>(cache.q.size());
  if (spec.m() < n) {
    bool ns = false;
    const MatrixXd N = nullspace_projector_from(J_sel, cache.Minv, &ns);
    out.near_singular = out.near_singular || ns;
    out.tau += N * joint_damping_torque(cache.M, cache.qdot, spec.k_joint_damp);
  }
  return out;
}

inline OscTorque osc_torque(const ChainModel& model, const RobotState& state,
                            const TaskSpec& spec, const VectorXd& f_star) {
  const DynCache cache = build_dyn_cache(model, state.q, state.qdot);
  return osc_torque(cache, spec, f_star);
}

// Task-space velocity of the flange in the selected dims.
inline VectorXd task_velocity(const Vec6& twist, const TaskSpec& spec) {
  VectorXd xd(spec.m());
  const auto rows = spec.task_rows();
  for (int i = 0; i < spec.m(); ++i) xd[i] = twist[rows[i]];
  return xd;
}

// Converts the 4-dim learned action [f*_x, f*_y, f*_z, theta_des] into the
// full operational-space command: forces pass through, the theta entry and
// any held dims go through the impedance law against the current pose.
inline CommandVector build_task(const Eigen::Vector4d& action,
                                const TaskSpec& spec, const Pose& current,
                                const Vec6& twist) {
  if (!action.allFinite()) throw Error("build_task: non-finite action");
  const int ix = spec.index_of(Dim::X);
  const int iy = spec.index_of(Dim::Y);
  const int iz = spec.index_of(Dim::Z);
  const int ia = spec.index_of(Dim::A);
  if (ix < 0 || iy < 0 || iz < 0 || ia < 0)
    throw ConfigError("build_task: task must select X, Y, Z and A");

  const Vector3d rot =
      rotation_coords(current.orientation, spec.reference.orientation);
  const VectorXd xd = task_velocity(twist, spec);

  CommandVector cmd;
  cmd.f_star = VectorXd::Zero(spec.m());
  cmd.f_star[ix] = action[0];
  cmd.f_star[iy] = action[1];
  cmd.f_star[iz] = action[2];
  const double e_theta = wrap_angle(action[3] - rot.z());
  cmd.f_star[ia] = spec.stiffness[ia] * e_theta - spec.damping[ia] * xd[ia];

  for (size_t h = 0; h < spec.held_dims.size(); ++h) {
    const Dim d = spec.held_dims[h];
    const int i = spec.index_of(d);
    double e = 0.0;
    switch (d) {
      case Dim::X: e = spec.reference.position.x() + spec.held_targets[h] -
                       current.position.x(); break;
      case Dim::Y: e = spec.reference.position.y() + spec.held_targets[h] -
                       current.position.y(); break;
      case Dim::Z: e = spec.reference.position.z() + spec.held_targets[h] -
                       current.position.z(); break;
      case Dim::A: e = wrap_angle(spec.held_targets[h] - rot.z()); break;
      case Dim::B: e = spec.held_targets[h] - rot.y(); break;
      case Dim::C: e = spec.held_targets[h] - rot.x(); break;
    }
    cmd.f_star[i] = spec.stiffness[i] * e - spec.damping[i] * xd[i];
  }
  return cmd;
}

// Default gain set: K_trans = 500 N/m, K_rot = 50 N*m/rad, D = 2 sqrt(K)
// (critical damping for a unit mass).
inline TaskSpec make_task_spec(const std::vector<Dim>& dims,
                               const Pose& reference,
                               const std::vector<Dim>& held_dims = {},
                               const VectorXd& held_targets = VectorXd()) {
  TaskSpec spec;
  spec.dims = dims;
  spec.reference = reference;
  spec.held_dims = held_dims;
  spec.held_targets = held_targets.size()
                          ? held_targets
                          : VectorXd::Zero(static_cast<int>(held_dims.size()));
  spec.stiffness.resize(spec.m());
  spec.damping.resize(spec.m());
  for (int i = 0; i < spec.m(); ++i) {
    spec.stiffness[i] = is_rotation(dims[i]) ? 50.0 : 500.0;
    spec.damping[i] = 2.0 * std::sqrt(spec.stiffness[i]);
  }
  spec.validate();
  return spec;
}

}  // namespace oscrl
