// Rigid-body kinematics and dynamics of an n-joint revolute serial chain.
//
// All public quantities are world-frame. Jacobians are 6xn with rows ordered
// (vx, vy, vz, wx, wy, wz). Inverse dynamics uses recursive Newton-Euler with
// 6D spatial vectors expressed at the world origin; the mass matrix uses the
// composite-rigid-body algorithm over the same quantities.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <utility>
#include <vector>

#include "oscrl/error.hpp"
#include "oscrl/spatial.hpp"

namespace oscrl {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Quaterniond;
using Eigen::Vector3d;
using Eigen::VectorXd;

// Near-singularity handling for operational-space inertia: damping is
// activated when the smallest singular value of the selected Jacobian drops
// below kSingularSigmaMin; the damped inverse uses lambda = kSingularDamping.
inline constexpr double kSingularSigmaMin = 1e-2;
inline constexpr double kSingularDamping = 1e-3;

struct Pose {
  Vector3d position = Vector3d::Zero();
  Quaterniond orientation = Quaterniond::Identity();

  // Unit norm, w >= 0. Keeps the representation unique for error computation.
  void canonicalize() {
    orientation.normalize();
    if (orientation.w() < 0) orientation.coeffs() = -orientation.coeffs();
  }
};

struct JointDesc {
  Eigen::Isometry3d parent_to_joint = Eigen::Isometry3d::Identity();
  Vector3d axis = Vector3d::UnitZ();  // unit, in the joint frame
};

struct LinkInertia {
  double mass = 1.0;
  Vector3d com = Vector3d::Zero();         // in the link (= joint) frame
  Matrix3d inertia = Matrix3d::Identity();  // about the com, link frame
};

struct ChainModel {
  std::vector<JointDesc> joints;
  std::vector<LinkInertia> links;
  Vector3d gravity{0.0, 0.0, -9.81};
  VectorXd joint_damping;  // viscous, N*m*s/rad
  Eigen::Isometry3d flange_offset = Eigen::Isometry3d::Identity();

  int n() const { return static_cast<int>(joints.size()); }

  void validate() const {
    if (joints.empty()) throw ConfigError("chain: needs at least one joint");
    if (links.size() != joints.size())
      throw ConfigError("chain: one link per joint required");
    if (joint_damping.size() != n())
      throw ConfigError("chain: joint_damping size mismatch");
    for (const auto& j : joints) {
      if (std::abs(j.axis.norm() - 1.0) > 1e-9)
        throw ConfigError("chain: joint axis must be unit norm");
    }
    for (const auto& l : links) {
      if (!(l.mass > 0)) throw ConfigError("chain: link mass must be > 0");
      if ((l.inertia - l.inertia.transpose()).norm() > 1e-9)
        throw ConfigError("chain: link inertia must be symmetric");
      Eigen::SelfAdjointEigenSolver<Matrix3d> es(l.inertia);
      if (es.eigenvalues().minCoeff() < -1e-12)
        throw ConfigError("chain: link inertia must be positive definite");
    }
  }
};

struct RobotState {
  VectorXd q;
  VectorXd qdot;
  double time = 0.0;
};

inline void check_dims(const ChainModel& model, const VectorXd& q) {
  if (q.size() != model.n())
    throw DimensionError("joint vector size does not match chain");
}

// World-frame joint frames after applying q.
struct Kinematics {
  std::vector<Matrix3d> rot;   // joint frame orientation
  std::vector<Vector3d> org;   // joint frame origin
  std::vector<Vector3d> axis;  // joint axis, world frame
  Eigen::Isometry3d flange;
};

inline Kinematics chain_frames(const ChainModel& model, const VectorXd& q) {
  check_dims(model, q);
  const int n = model.n();
  Kinematics k;
  k.rot.resize(n);
  k.org.resize(n);
  k.axis.resize(n);
  Eigen::Isometry3d X = Eigen::Isometry3d::Identity();
  for (int i = 0; i < n; ++i) {
    X = X * model.joints[i].parent_to_joint;
    k.org[i] = X.translation();
    k.axis[i] = X.linear() * model.joints[i].axis;
    X = X * Eigen::AngleAxisd(q[i], model.joints[i].axis);
    k.rot[i] = X.linear();
  }
  k.flange = X * model.flange_offset;
  return k;
}

inline Pose forward_kinematics(const ChainModel& model, const VectorXd& q) {
  const Kinematics k = chain_frames(model, q);
  Pose p;
  p.position = k.flange.translation();
  p.orientation = Quaterniond(k.flange.linear());
  p.canonicalize();
  return p;
}

inline MatrixXd jacobian_at(const Kinematics& k, const Vector3d& point) {
  const int n = static_cast<int>(k.org.size());
  MatrixXd J(6, n);
  for (int i = 0; i < n; ++i) {
    J.col(i).head<3>() = k.axis[i].cross(point - k.org[i]);
    J.col(i).tail<3>() = k.axis[i];
  }
  return J;
}

inline MatrixXd jacobian(const ChainModel& model, const VectorXd& q) {
  const Kinematics k = chain_frames(model, q);
  return jacobian_at(k, k.flange.translation());
}

// Time derivative of the geometric Jacobian along qdot.
inline MatrixXd jacobian_dot(const ChainModel& model, const VectorXd& q,
                             const VectorXd& qdot) {
  check_dims(model, q);
  check_dims(model, qdot);
  const Kinematics k = chain_frames(model, q);
  const int n = model.n();
  const Vector3d p = k.flange.translation();

  std::vector<Vector3d> omega(n), odot(n), zdot(n);
  Vector3d w = Vector3d::Zero();      // angular velocity of parent link
  Vector3d ov = Vector3d::Zero();     // velocity of parent joint origin
  Vector3d prev_org = Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    odot[i] = ov + w.cross(k.org[i] - prev_org);
    zdot[i] = w.cross(k.axis[i]);  // axis fixed in the parent link
    w += k.axis[i] * qdot[i];
    omega[i] = w;
    ov = odot[i];
    prev_org = k.org[i];
  }
  Vector3d pdot = Vector3d::Zero();
  for (int i = 0; i < n; ++i)
    pdot += k.axis[i].cross(p - k.org[i]) * qdot[i];

  MatrixXd Jd(6, n);
  for (int i = 0; i < n; ++i) {
    Jd.col(i).head<3>() =
        zdot[i].cross(p - k.org[i]) + k.axis[i].cross(pdot - odot[i]);
    Jd.col(i).tail<3>() = zdot[i];
  }
  return Jd;
}

namespace detail {

// Motion subspace of joint i at the world origin (angular on top).
inline Vec6 motion_subspace(const Kinematics& k, int i) {
  Vec6 s;
  s.head<3>() = k.axis[i];
  s.tail<3>() = k.org[i].cross(k.axis[i]);
  return s;
}

inline Mat6 link_spatial_inertia(const ChainModel& model, const Kinematics& k,
                                 int i) {
  const Vector3d com_w = k.rot[i] * model.links[i].com + k.org[i];
  const Matrix3d I_w = k.rot[i] * model.links[i].inertia * k.rot[i].transpose();
  return spatial_inertia(model.links[i].mass, com_w, I_w);
}

}  // namespace detail

// Recursive Newton-Euler: torque required to realize (q, qdot, qddot).
inline VectorXd inverse_dynamics(const ChainModel& model, const VectorXd& q,
                                 const VectorXd& qdot, const VectorXd& qddot,
                                 bool with_gravity) {
  check_dims(model, q);
  check_dims(model, qdot);
  check_dims(model, qddot);
  const Kinematics k = chain_frames(model, q);
  const int n = model.n();

  Vec6 v = Vec6::Zero();
  Vec6 a = Vec6::Zero();
  if (with_gravity) a.tail<3>() = -model.gravity;  // fictitious base accel

  std::vector<Vec6> S(n), f(n);
  for (int i = 0; i < n; ++i) {
    S[i] = detail::motion_subspace(k, i);
    const Vec6 vj = S[i] * qdot[i];
    a += S[i] * qddot[i] + crm(v + vj) * vj;
    v += vj;
    const Mat6 I = detail::link_spatial_inertia(model, k, i);
    f[i] = I * a + crf(v) * (I * v);
  }
  VectorXd tau(n);
  Vec6 ftot = Vec6::Zero();
  for (int i = n - 1; i >= 0; --i) {
    ftot += f[i];
    tau[i] = S[i].dot(ftot);
  }
  return tau;
}

inline VectorXd gravity_torque(const ChainModel& model, const VectorXd& q) {
  const VectorXd zero = VectorXd::Zero(model.n());
  return inverse_dynamics(model, q, zero, zero, true);
}

inline VectorXd coriolis_torque(const ChainModel& model, const VectorXd& q,
                                const VectorXd& qdot) {
  const VectorXd zero = VectorXd::Zero(model.n());
  return inverse_dynamics(model, q, qdot, zero, false);
}

// Composite-rigid-body algorithm.
inline MatrixXd mass_matrix(const ChainModel& model, const VectorXd& q) {
  check_dims(model, q);
  const Kinematics k = chain_frames(model, q);
  const int n = model.n();
  std::vector<Vec6> S(n);
  std::vector<Mat6> Ic(n);
  for (int i = 0; i < n; ++i) {
    S[i] = detail::motion_subspace(k, i);
    Ic[i] = detail::link_spatial_inertia(model, k, i);
  }
  for (int i = n - 2; i >= 0; --i) Ic[i] += Ic[i + 1];
  MatrixXd M(n, n);
  for (int j = 0; j < n; ++j) {
    const Vec6 F = Ic[j] * S[j];
    M(j, j) = S[j].dot(F);
    for (int i = 0; i < j; ++i) {
      M(i, j) = S[i].dot(F);
      M(j, i) = M(i, j);
    }
  }
  return M;
}

inline double kinetic_energy(const ChainModel& model, const VectorXd& q,
                             const VectorXd& qdot) {
  const MatrixXd M = mass_matrix(model, q);
  return 0.5 * qdot.dot(M * qdot);
}

inline double potential_energy(const ChainModel& model, const VectorXd& q) {
  const Kinematics k = chain_frames(model, q);
  double V = 0.0;
  for (int i = 0; i < model.n(); ++i) {
    const Vector3d com_w = k.rot[i] * model.links[i].com + k.org[i];
    V -= model.links[i].mass * model.gravity.dot(com_w);
  }
  return V;
}

inline MatrixXd select_rows(const MatrixXd& J, const std::vector<int>& rows) {
  MatrixXd out(static_cast<int>(rows.size()), J.cols());
  for (int r = 0; r < out.rows(); ++r) out.row(r) = J.row(rows[r]);
  return out;
}

struct TaskInertia {
  MatrixXd lambda;     // m x m operational-space inertia
  bool near_singular;  // true when the damped inverse was used
  double sigma_min;    // smallest singular value of the selected Jacobian
};

// Lambda = (J_sel M^-1 J_sel^T)^-1, damped near singularities.
inline TaskInertia task_inertia_from(const MatrixXd& J_sel,
                                     const MatrixXd& Minv) {
  const MatrixXd A = J_sel * Minv * J_sel.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(J_sel);
  const double sigma_min = svd.singularValues().minCoeff();
  TaskInertia out;
  out.sigma_min = sigma_min;
  out.near_singular = sigma_min < kSingularSigmaMin;
  MatrixXd A_reg = A;
  if (out.near_singular) {
    A_reg += kSingularDamping * kSingularDamping *
             MatrixXd::Identity(A.rows(), A.cols());
  }
  out.lambda = A_reg.llt().solve(MatrixXd::Identity(A.rows(), A.cols()));
  return out;
}

inline TaskInertia task_inertia(const ChainModel& model, const VectorXd& q,
                                const std::vector<int>& task_rows) {
  const MatrixXd J = jacobian(model, q);
  const MatrixXd M = mass_matrix(model, q);
  const MatrixXd Minv = M.llt().solve(MatrixXd::Identity(model.n(), model.n()));
  return task_inertia_from(select_rows(J, task_rows), Minv);
}

struct DynConsistentPinv {
  MatrixXd jbar;  // n x m
  bool near_singular;
};

// Jbar = M^-1 J^T Lambda.
inline DynConsistentPinv dyn_consistent_pinv_from(const MatrixXd& J_sel,
                                                  const MatrixXd& Minv) {
  const TaskInertia ti = task_inertia_from(J_sel, Minv);
  return {Minv * J_sel.transpose() * ti.lambda, ti.near_singular};
}

inline DynConsistentPinv dyn_consistent_pinv(const ChainModel& model,
                                             const VectorXd& q,
                                             const std::vector<int>& task_rows) {
  const MatrixXd J = jacobian(model, q);
  const MatrixXd M = mass_matrix(model, q);
  const MatrixXd Minv = M.llt().solve(MatrixXd::Identity(model.n(), model.n()));
  return dyn_consistent_pinv_from(select_rows(J, task_rows), Minv);
}

// Everything the 5 ms control tick needs, computed once per state.
struct DynCache {
  VectorXd q, qdot;
  Kinematics kin;
  Pose flange;
  Vec6 twist;  // (v; w) of the flange, world frame
  MatrixXd J, Jdot;
  MatrixXd M, Minv;
  VectorXd gravity, coriolis;
};

inline DynCache build_dyn_cache(const ChainModel& model, const VectorXd& q,
                                const VectorXd& qdot) {
  DynCache c;
  c.q = q;
  c.qdot = qdot;
  c.kin = chain_frames(model, q);
  c.flange.position = c.kin.flange.translation();
  c.flange.orientation = Quaterniond(c.kin.flange.linear());
  c.flange.canonicalize();
  c.J = jacobian_at(c.kin, c.flange.position);
  c.Jdot = jacobian_dot(model, q, qdot);
  c.twist = c.J * qdot;
  c.M = mass_matrix(model, q);
  c.Minv = c.M.llt().solve(MatrixXd::Identity(model.n(), model.n()));
  c.gravity = gravity_torque(model, q);
  c.coriolis = coriolis_torque(model, q, qdot);
  return c;
}

}  // namespace oscrl
