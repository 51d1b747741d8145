// Shared fixtures and independent oracles for the test suites. Everything in
// here deliberately avoids the library's own computation paths where it
// serves as an oracle.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "oscrl/chain_io.hpp"
#include "oscrl/chain_model.hpp"
#include "oscrl/rng.hpp"

namespace testutil {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

inline std::string asset_path(const std::string& name) {
  return std::string(OSCRL_ASSET_DIR) + "/" + name;
}

inline oscrl::ChainModel load_arm7() {
  return oscrl::load_chain(asset_path("arm7.json")).model;
}

inline oscrl::ChainDescription load_arm7_desc() {
  return oscrl::load_chain(asset_path("arm7.json"));
}

// Single revolute joint about world z, flange at +x distance `length`,
// point mass at the flange.
inline oscrl::ChainModel one_link_arm(double length = 1.0, double mass = 1.0) {
  oscrl::ChainModel m;
  oscrl::JointDesc j;
  j.axis = Vector3d::UnitZ();
  m.joints.push_back(j);
  oscrl::LinkInertia li;
  li.mass = mass;
  li.com = Vector3d(length, 0, 0);
  li.inertia = 1e-9 * Matrix3d::Identity();
  m.links.push_back(li);
  m.flange_offset.translation() = Vector3d(length, 0, 0);
  m.joint_damping = VectorXd::Zero(1);
  m.gravity.setZero();
  return m;
}

// Planar 2R chain in the xy-plane, both joints about z.
inline oscrl::ChainModel two_link_planar(double l1 = 1.0, double l2 = 1.0) {
  oscrl::ChainModel m;
  oscrl::JointDesc j1;
  j1.axis = Vector3d::UnitZ();
  m.joints.push_back(j1);
  oscrl::JointDesc j2;
  j2.axis = Vector3d::UnitZ();
  j2.parent_to_joint.translation() = Vector3d(l1, 0, 0);
  m.joints.push_back(j2);
  for (double l : {l1, l2}) {
    oscrl::LinkInertia li;
    li.mass = 1.0;
    li.com = Vector3d(l / 2, 0, 0);
    li.inertia = 0.01 * Matrix3d::Identity();
    m.links.push_back(li);
  }
  m.flange_offset.translation() = Vector3d(l2, 0, 0);
  m.joint_damping = VectorXd::Zero(2);
  m.gravity.setZero();
  return m;
}

// One revolute joint about world Y at the origin; gravity can then load the
// horizontal arm.
inline oscrl::ChainModel one_link_pendulum(double length = 1.0,
                                           double mass = 1.0) {
  oscrl::ChainModel m = one_link_arm(length, mass);
  m.joints[0].axis = Vector3d::UnitY();
  m.gravity = Vector3d(0, 0, -9.81);
  return m;
}

inline VectorXd random_q(const oscrl::ChainModel& m, oscrl::Rng& rng,
                         double range = 1.5) {
  return rng.uniform_vector(m.n(), -range, range);
}

// --- Independent oracles -------------------------------------------------

// Product of exponentials: compose each joint's screw motion about its
// zero-configuration axis line, then the zero-configuration flange pose.
inline oscrl::Pose poe_forward_kinematics(const oscrl::ChainModel& m,
                                          const VectorXd& q) {
  const int n = m.n();
  std::vector<Vector3d> origin(n), axis(n);
  Eigen::Isometry3d X = Eigen::Isometry3d::Identity();
  for (int i = 0; i < n; ++i) {
    X = X * m.joints[i].parent_to_joint;
    origin[i] = X.translation();
    axis[i] = X.linear() * m.joints[i].axis;
  }
  const Eigen::Isometry3d home = X * m.flange_offset;

  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  for (int i = 0; i < n; ++i) {
    Eigen::Isometry3d screw = Eigen::Isometry3d::Identity();
    const Eigen::AngleAxisd rot(q[i], axis[i]);
    screw.linear() = rot.toRotationMatrix();
    screw.translation() = origin[i] - rot.toRotationMatrix() * origin[i];
    T = T * screw;
  }
  const Eigen::Isometry3d flange = T * home;
  oscrl::Pose p;
  p.position = flange.translation();
  p.orientation = Eigen::Quaterniond(flange.linear());
  p.canonicalize();
  return p;
}

// Central finite-difference Jacobian of the flange position/orientation.
inline MatrixXd fd_jacobian(const oscrl::ChainModel& m, const VectorXd& q,
                            double h = 1e-6) {
  const int n = m.n();
  MatrixXd J(6, n);
  for (int i = 0; i < n; ++i) {
    VectorXd qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    const oscrl::Pose pp = oscrl::forward_kinematics(m, qp);
    const oscrl::Pose pm = oscrl::forward_kinematics(m, qm);
    J.col(i).head<3>() = (pp.position - pm.position) / (2 * h);
    // w = 2 * (dq/dt * q^-1) vector part for small rotations
    Eigen::Quaterniond dq = pp.orientation * pm.orientation.conjugate();
    if (dq.w() < 0) dq.coeffs() = -dq.coeffs();
    const Eigen::AngleAxisd aa(dq);
    J.col(i).tail<3>() = aa.angle() * aa.axis() / (2 * h);
  }
  return J;
}

inline MatrixXd fd_jacobian_dot(const oscrl::ChainModel& m, const VectorXd& q,
                                const VectorXd& qdot, double h = 1e-6) {
  const VectorXd qp = q + qdot * h;
  const VectorXd qm = q - qdot * h;
  return (oscrl::jacobian(m, qp) - oscrl::jacobian(m, qm)) / (2 * h);
}

inline VectorXd fd_gravity_torque(const oscrl::ChainModel& m, const VectorXd& q,
                                  double h = 1e-6) {
  const int n = m.n();
  VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    VectorXd qp = q, qm = q;
    qp[i] += h;
    qm[i] -= h;
    g[i] = (oscrl::potential_energy(m, qp) - oscrl::potential_energy(m, qm)) /
           (2 * h);
  }
  return g;
}

// Mass matrix column probe: tau for unit qddot basis vectors with zero
// velocity and zero gravity equals the corresponding column of M.
inline MatrixXd probe_mass_matrix(const oscrl::ChainModel& m,
                                  const VectorXd& q) {
  const int n = m.n();
  MatrixXd M(n, n);
  const VectorXd zero = VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    VectorXd e = VectorXd::Zero(n);
    e[k] = 1.0;
    M.col(k) = oscrl::inverse_dynamics(m, q, zero, e, false);
  }
  return M;
}

inline double rel_error(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max(1.0, b.norm());
  return (a - b).norm() / scale;
}

// KKT solution of: min 0.5 ||tau' - tau||^2_{M^-1} s.t. the saturated
// accelerations equal their clamped targets. Independent of the library's
// saturation loop.
inline VectorXd qp_saturation_oracle(const MatrixXd& Minv, const VectorXd& tau,
                                     const VectorXd& bias,
                                     const std::vector<int>& sat,
                                     const VectorXd& targets) {
  const int s = static_cast<int>(sat.size());
  if (s == 0) return tau;
  const int n = static_cast<int>(tau.size());
  const VectorXd qdd_un = Minv * (tau - bias);
  MatrixXd P_SS(s, s);
  VectorXd resid(s);
  for (int a = 0; a < s; ++a) {
    resid[a] = targets[a] - qdd_un[sat[a]];
    for (int b = 0; b < s; ++b) P_SS(a, b) = Minv(sat[a], sat[b]);
  }
  const VectorXd mult = P_SS.ldlt().solve(resid);
  VectorXd dtau = VectorXd::Zero(n);
  for (int a = 0; a < s; ++a) dtau[sat[a]] = mult[a];
  return tau + dtau;
}

// Pearson chi-squared upper tail via the regularized incomplete gamma
// function (series/continued-fraction forms).
inline double chi2_sf(double x, int dof) {
  const double a = dof / 2.0, x2 = x / 2.0;
  if (x2 <= 0) return 1.0;
  auto gammap = [](double a, double x) {
    if (x < a + 1.0) {
      double sum = 1.0 / a, term = sum, aa = a;
      for (int i = 0; i < 500; ++i) {
        aa += 1.0;
        term *= x / aa;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-14) break;
      }
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
      const double an = -i * (i - a);
      b += 2.0;
      d = an * d + b;
      if (std::abs(d) < 1e-300) d = 1e-300;
      c = b + an / c;
      if (std::abs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-14) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  };
  return 1.0 - gammap(a, x2);
}

// Kolmogorov-Smirnov asymptotic p-value.
inline double ks_pvalue(double d, int n) {
  const double en = std::sqrt(static_cast<double>(n));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    sum += (k % 2 == 1 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace testutil
