// Torque saturation against joint and cartesian position/velocity/acceleration
// limits: an iterative scheme that pins violating accelerations to their
// bounds through a dynamically consistent projection and re-achieves the task
// with what remains. Joint-space saturation runs last and therefore has the
// highest priority.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "oscrl/chain_model.hpp"
#include "oscrl/error.hpp"

namespace oscrl {

struct JointLimits {
  VectorXd q_min, q_max;  // rad
  VectorXd v_min, v_max;  // rad/s
  VectorXd a_min, a_max;  // rad/s^2

  void validate(int n) const {
    auto chk = [n](const VectorXd& lo, const VectorXd& hi, const char* what) {
      if (lo.size() != n || hi.size() != n)
        throw ConfigError(std::string("joint limits: bad size for ") + what);
      if (((hi - lo).array() <= 0).any())
        throw ConfigError(std::string("joint limits: min >= max for ") + what);
      if (!lo.allFinite() || !hi.allFinite())
        throw ConfigError(std::string("joint limits: non-finite ") + what);
    };
    chk(q_min, q_max, "position");
    chk(v_min, v_max, "velocity");
    chk(a_min, a_max, "acceleration");
  }
};

// Axis-aligned walls on translational flange coordinates. `rows` selects
// which world axes (0=x, 1=y, 2=z) are limited.
struct CartLimits {
  std::vector<int> rows;
  VectorXd x_min, x_max;  // m
  VectorXd v_min, v_max;  // m/s
  VectorXd a_min, a_max;  // m/s^2

  int l() const { return static_cast<int>(rows.size()); }

  void validate() const {
    const int m = l();
    for (int r : rows)
      if (r < 0 || r > 2) throw ConfigError("cart limits: rows must be in {0,1,2}");
    if (x_min.size() != m || x_max.size() != m || v_min.size() != m ||
        v_max.size() != m || a_min.size() != m || a_max.size() != m)
      throw ConfigError("cart limits: size mismatch");
    if (m > 0 && (((x_max - x_min).array() <= 0).any() ||
                  ((v_max - v_min).array() <= 0).any() ||
                  ((a_max - a_min).array() <= 0).any()))
      throw ConfigError("cart limits: min >= max");
  }
};

struct AccelBounds {
  VectorXd lo, hi;
  bool relaxed = false;  // a position/velocity conflict forced relaxation
};

struct SaturationReport {
  std::vector<int> saturated;  // joint indices, or cartesian row ids
  int iterations = 0;
  bool bounds_relaxed = false;
  bool near_singular = false;  // cartesian saturation hit a damped inverse
};

namespace detail {

// One-dimensional acceleration interval from position, velocity and static
// acceleration limits. The position term takes the paper's braking form
// 2(P - p - v dt)/dt^2 capped by the one-step-exact term (P - p - v dt)/dt^2,
// so the next semi-implicit Euler step can touch but never cross the bound.
// On an empty interval the static acceleration term is dropped first
// (position wins); a remaining conflict collapses to the midpoint.
inline void accel_interval(double p, double v, double dt, double p_min,
                           double p_max, double v_min, double v_max,
                           double a_min, double a_max, double* lo, double* hi,
                           bool* relaxed) {
  const double dt2 = dt * dt;
  const double dhi = p_max - p - v * dt;
  const double dlo = p_min - p - v * dt;
  const double pos_hi = std::min(2.0 * dhi, dhi) / dt2;
  const double pos_lo = std::max(2.0 * dlo, dlo) / dt2;
  const double vel_hi = (v_max - v) / dt;
  const double vel_lo = (v_min - v) / dt;
  *hi = std::min({pos_hi, vel_hi, a_max});
  *lo = std::max({pos_lo, vel_lo, a_min});
  if (*lo > *hi) {
    *relaxed = true;
    *hi = std::min(pos_hi, vel_hi);
    *lo = std::max(pos_lo, vel_lo);
    if (*lo > *hi) {
      const double mid = 0.5 * (*lo + *hi);
      *lo = mid;
      *hi = mid;
    }
  }
}

}  // namespace detail

inline AccelBounds accel_bounds_joint(const VectorXd& q, const VectorXd& qdot,
                                      double dt, const JointLimits& lims) {
  if (dt <= 0) throw ConfigError("accel_bounds_joint: dt must be > 0");
  const int n = static_cast<int>(q.size());
  AccelBounds b;
  b.lo.resize(n);
  b.hi.resize(n);
  for (int i = 0; i < n; ++i) {
    detail::accel_interval(q[i], qdot[i], dt, lims.q_min[i], lims.q_max[i],
                           lims.v_min[i], lims.v_max[i], lims.a_min[i],
                           lims.a_max[i], &b.lo[i], &b.hi[i], &b.relaxed);
  }
  return b;
}

inline AccelBounds accel_bounds_cart(const VectorXd& x, const VectorXd& xdot,
                                     double dt, const CartLimits& lims) {
  if (dt <= 0) throw ConfigError("accel_bounds_cart: dt must be > 0");
  const int m = lims.l();
  AccelBounds b;
  b.lo.resize(m);
  b.hi.resize(m);
  for (int i = 0; i < m; ++i) {
    detail::accel_interval(x[i], xdot[i], dt, lims.x_min[i], lims.x_max[i],
                           lims.v_min[i], lims.v_max[i], lims.a_min[i],
                           lims.a_max[i], &b.lo[i], &b.hi[i], &b.relaxed);
  }
  return b;
}

inline bool lims_active(const CartLimits& lims) { return lims.l() > 0; }

namespace detail {

constexpr double kViolationTol = 1e-12;
constexpr double kPostTol = 1e-9;

inline MatrixXd scatter_rows(const MatrixXd& block, const std::vector<int>& idx,
                             int n) {
  MatrixXd out = MatrixXd::Zero(n, block.cols());
  for (int k = 0; k < static_cast<int>(idx.size()); ++k)
    out.row(idx[k]) = block.row(k);
  return out;
}

}  // namespace detail

// Algorithm: saturation in joint space. `tau_ext` is a known extra torque
// acting on the plant (measured contact, gravity compensation, viscous
// damping); the predicted acceleration is qdd = M^-1 (tau' + tau_ext - g - c).
inline std::pair<VectorXd, SaturationReport> saturate_joint_space(
    const DynCache& cache, const VectorXd& tau, const JointLimits& lims,
    double dt, const VectorXd& tau_ext = VectorXd()) {
  const int n = static_cast<int>(cache.q.size());
  if (tau.size() != n) throw DimensionError("saturate_joint_space: tau size");
  VectorXd bias = cache.gravity + cache.coriolis;
  if (tau_ext.size() == n) bias -= tau_ext;

  const AccelBounds bounds = accel_bounds_joint(cache.q, cache.qdot, dt, lims);
  SaturationReport report;
  report.bounds_relaxed = bounds.relaxed;

  std::vector<int> sat;
  std::vector<double> target;
  std::vector<bool> in_sat(n, false);
  VectorXd tau_sjs = tau;
  VectorXd qdd = cache.Minv * (tau_sjs - bias);

  for (int iter = 0; iter < n; ++iter) {
    bool added = false;
    for (int i = 0; i < n; ++i) {
      if (in_sat[i]) continue;
      if (qdd[i] > bounds.hi[i] + detail::kViolationTol) {
        sat.push_back(i);
        target.push_back(bounds.hi[i]);
        in_sat[i] = true;
        added = true;
      } else if (qdd[i] < bounds.lo[i] - detail::kViolationTol) {
        sat.push_back(i);
        target.push_back(bounds.lo[i]);
        in_sat[i] = true;
        added = true;
      }
    }
    if (!added) break;
    ++report.iterations;

    const int s = static_cast<int>(sat.size());
    MatrixXd Minv_S(s, n);
    VectorXd w(s);
    for (int k = 0; k < s; ++k) {
      Minv_S.row(k) = cache.Minv.row(sat[k]);
      w[k] = target[k];
    }
    w += Minv_S * bias;
    // Lambda over the saturated set: inverse of the (S,S) block of M^-1.
    MatrixXd P_SS(s, s);
    for (int a = 0; a < s; ++a)
      for (int b = 0; b < s; ++b) P_SS(a, b) = cache.Minv(sat[a], sat[b]);
    const MatrixXd lambda = P_SS.llt().solve(MatrixXd::Identity(s, s));

    VectorXd tau_lim = VectorXd::Zero(n);
    const VectorXd lw = lambda * w;
    for (int k = 0; k < s; ++k) tau_lim[sat[k]] = lw[k];
    // N_lim = I - E_S^T Lambda E_S M^-1
    const MatrixXd proj = detail::scatter_rows(lambda * Minv_S, sat, n);
    tau_sjs = tau_lim + tau - proj * tau;
    qdd = cache.Minv * (tau_sjs - bias);
  }

  for (int i = 0; i < n; ++i) {
    if (qdd[i] > bounds.hi[i] + detail::kPostTol ||
        qdd[i] < bounds.lo[i] - detail::kPostTol) {
      if (static_cast<int>(sat.size()) == n)
        throw InfeasibleLimits("saturate_joint_space: bounds unreachable");
    }
  }
  std::sort(sat.begin(), sat.end());
  report.saturated = std::move(sat);
  return {std::move(tau_sjs), report};
}

inline std::pair<VectorXd, SaturationReport> saturate_joint_space(
    const ChainModel& model, const VectorXd& tau, const RobotState& state,
    const JointLimits& lims, double dt, const VectorXd& tau_ext = VectorXd()) {
  const DynCache cache = build_dyn_cache(model, state.q, state.qdot);
  return saturate_joint_space(cache, tau, lims, dt, tau_ext);
}

// Algorithm: saturation in cartesian space, same scheme on the limited
// flange coordinates; xdd = J_ev qdd + Jdot_ev qdot.
inline std::pair<VectorXd, SaturationReport> saturate_cart_space(
    const DynCache& cache, const VectorXd& tau, const CartLimits& lims,
    double dt, const VectorXd& tau_ext = VectorXd()) {
  const int n = static_cast<int>(cache.q.size());
  const int l = lims.l();
  if (tau.size() != n) throw DimensionError("saturate_cart_space: tau size");
  if (l == 0) return {tau, SaturationReport{}};

  VectorXd bias = cache.gravity + cache.coriolis;
  if (tau_ext.size() == n) bias -= tau_ext;

  const MatrixXd J_ev = select_rows(cache.J, lims.rows);
  const MatrixXd Jd_ev = select_rows(cache.Jdot, lims.rows);
  VectorXd x(l), xd(l);
  for (int k = 0; k < l; ++k) {
    x[k] = cache.flange.position[lims.rows[k]];
    xd[k] = cache.twist[lims.rows[k]];
  }
  const AccelBounds bounds = accel_bounds_cart(x, xd, dt, lims);
  SaturationReport report;
  report.bounds_relaxed = bounds.relaxed;

  std::vector<int> sat;  // indices into lims.rows
  std::vector<double> target;
  std::vector<bool> in_sat(l, false);
  VectorXd tau_scs = tau;
  const VectorXd jdqd = Jd_ev * cache.qdot;
  VectorXd xdd = J_ev * (cache.Minv * (tau_scs - bias)) + jdqd;

  for (int iter = 0; iter < l; ++iter) {
    bool added = false;
    for (int i = 0; i < l; ++i) {
      if (in_sat[i]) continue;
      if (xdd[i] > bounds.hi[i] + detail::kViolationTol) {
        sat.push_back(i);
        target.push_back(bounds.hi[i]);
        in_sat[i] = true;
        added = true;
      } else if (xdd[i] < bounds.lo[i] - detail::kViolationTol) {
        sat.push_back(i);
        target.push_back(bounds.lo[i]);
        in_sat[i] = true;
        added = true;
      }
    }
    if (!added) break;
    ++report.iterations;

    const int s = static_cast<int>(sat.size());
    MatrixXd J_S(s, n), Jd_S(s, n);
    VectorXd w(s);
    for (int k = 0; k < s; ++k) {
      J_S.row(k) = J_ev.row(sat[k]);
      Jd_S.row(k) = Jd_ev.row(sat[k]);
      w[k] = target[k];
    }
    const TaskInertia ti = task_inertia_from(J_S, cache.Minv);
    report.near_singular = report.near_singular || ti.near_singular;
    w += J_S * (cache.Minv * bias) - Jd_S * cache.qdot;

    const VectorXd tau_lim = J_S.transpose() * (ti.lambda * w);
    // N_lim = I - J_S^T Lambda_S J_S M^-1
    const MatrixXd proj = J_S.transpose() * (ti.lambda * (J_S * cache.Minv));
    tau_scs = tau_lim + tau - proj * tau;
    xdd = J_ev * (cache.Minv * (tau_scs - bias)) + jdqd;
  }

  for (int i = 0; i < l; ++i) {
    if (xdd[i] > bounds.hi[i] + detail::kPostTol ||
        xdd[i] < bounds.lo[i] - detail::kPostTol) {
      if (static_cast<int>(sat.size()) == l && !report.near_singular)
        throw InfeasibleLimits("saturate_cart_space: bounds unreachable");
    }
  }
  std::vector<int> row_ids;
  for (int k : sat) row_ids.push_back(lims.rows[k]);
  std::sort(row_ids.begin(), row_ids.end());
  report.saturated = std::move(row_ids);
  return {std::move(tau_scs), report};
}

inline std::pair<VectorXd, SaturationReport> saturate_cart_space(
    const ChainModel& model, const VectorXd& tau, const RobotState& state,
    const CartLimits& lims, double dt, const VectorXd& tau_ext = VectorXd()) {
  const DynCache cache = build_dyn_cache(model, state.q, state.qdot);
  return saturate_cart_space(cache, tau, lims, dt, tau_ext);
}

struct GuardedTorque {
  VectorXd tau;
  SaturationReport cart;
  SaturationReport joint;
  // Worst cartesian acceleration-bound excess after joint saturation ran;
  // nonzero only when joint limits overrode a cartesian constraint.
  double cart_violation = 0.0;
};

// Cartesian saturation first, joint saturation second: joint bounds always
// hold, cartesian bounds hold when they do not conflict.
inline GuardedTorque guarded_torque(const DynCache& cache, const VectorXd& tau,
                                    const JointLimits& jlims,
                                    const CartLimits& clims, double dt,
                                    const VectorXd& tau_ext = VectorXd()) {
  GuardedTorque out;
  auto [tau_scs, cart_rep] = saturate_cart_space(cache, tau, clims, dt, tau_ext);
  auto [tau_sjs, joint_rep] =
      saturate_joint_space(cache, tau_scs, jlims, dt, tau_ext);
  out.tau = std::move(tau_sjs);
  out.cart = std::move(cart_rep);
  out.joint = std::move(joint_rep);

  if (lims_active(clims) && !out.joint.saturated.empty()) {
    VectorXd bias = cache.gravity + cache.coriolis;
    if (tau_ext.size() == cache.q.size()) bias -= tau_ext;
    const MatrixXd J_ev = select_rows(cache.J, clims.rows);
    const MatrixXd Jd_ev = select_rows(cache.Jdot, clims.rows);
    const VectorXd xdd =
        J_ev * (cache.Minv * (out.tau - bias)) + Jd_ev * cache.qdot;
    VectorXd x(clims.l()), xd(clims.l());
    for (int k = 0; k < clims.l(); ++k) {
      x[k] = cache.flange.position[clims.rows[k]];
      xd[k] = cache.twist[clims.rows[k]];
    }
    const AccelBounds b = accel_bounds_cart(x, xd, dt, clims);
    for (int k = 0; k < clims.l(); ++k) {
      out.cart_violation = std::max(
          {out.cart_violation, xdd[k] - b.hi[k], b.lo[k] - xdd[k]});
    }
    out.cart_violation = std::max(out.cart_violation, 0.0);
  }
  return out;
}

inline GuardedTorque guarded_torque(const ChainModel& model, const VectorXd& tau,
                                    const RobotState& state,
                                    const JointLimits& jlims,
                                    const CartLimits& clims, double dt,
                                    const VectorXd& tau_ext = VectorXd()) {
  const DynCache cache = build_dyn_cache(model, state.q, state.qdot);
  return guarded_torque(cache, tau, jlims, clims, dt, tau_ext);
}

}  // namespace oscrl
