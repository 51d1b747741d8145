// Torque-driven forward dynamics at 5 ms steps with a penalty-contact
// peg-in-hole world. The plant is gravity-compensated with the NOMINAL
// model's gravity torque while its own dynamics use the SimParams-scaled
// quantities; at nominal parameters the two cancel exactly and the commanded
// torque acts on a weightless plant. Integration is semi-implicit Euler.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "oscrl/chain_model.hpp"
#include "oscrl/error.hpp"

namespace oscrl {

struct SimParams {
  Vector3d gravity{0.0, 0.0, -9.81};
  VectorXd mass_scale;     // per link, unitless, > 0
  VectorXd joint_damping;  // per joint, N*m*s/rad
  double friction_coeff = 0.5;

  static SimParams nominal(const ChainModel& model) {
    SimParams p;
    p.gravity = model.gravity;
    p.mass_scale = VectorXd::Ones(model.n());
    p.joint_damping = model.joint_damping;
    return p;
  }

  void validate(int n) const {
    if (mass_scale.size() != n || joint_damping.size() != n)
      throw ConfigError("sim params: size mismatch");
    if ((mass_scale.array() <= 0).any())
      throw ConfigError("sim params: mass_scale must be > 0");
    if (friction_coeff < 0)
      throw ConfigError("sim params: friction_coeff must be >= 0");
  }
};

// Returns a copy of the model with scaled link masses (inertias scale
// proportionally), replaced gravity and replaced joint damping.
inline ChainModel apply_params(const ChainModel& model, const SimParams& p) {
  p.validate(model.n());
  ChainModel out = model;
  out.gravity = p.gravity;
  out.joint_damping = p.joint_damping;
  for (int i = 0; i < model.n(); ++i) {
    out.links[i].mass *= p.mass_scale[i];
    out.links[i].inertia *= p.mass_scale[i];
  }
  return out;
}

enum class PegShape { Circle, Triangle };

struct HoleGeometry {
  Vector3d hole_center{0.55, 0.0, 0.40};  // entrance center, on the surface
  Vector3d hole_axis{0.0, 0.0, 1.0};      // unit, out of the surface
  double clearance = 1e-3;                // m, hole radius - peg radius
  double depth = 0.03;                    // m
  double peg_radius = 0.015;              // m (circumradius for Triangle)
  double surface_extent = 0.30;           // m, table half-size around the hole
  double peg_length = 0.08;               // m, flange to tip along flange +z
  PegShape shape = PegShape::Circle;
  double hole_yaw = 0.0;                  // triangle hole rotation about axis

  void validate() const {
    if (!(clearance > 0)) throw ConfigError("hole: clearance must be > 0");
    if (!(depth > 0)) throw ConfigError("hole: depth must be > 0");
    if (!(peg_radius > 0)) throw ConfigError("hole: peg_radius must be > 0");
    if (std::abs(hole_axis.norm() - 1.0) > 1e-9)
      throw ConfigError("hole: axis must be unit norm");
  }
};

struct ContactParams {
  double k_normal = 1e4;   // N/m
  double b_normal = 50.0;  // N*s/m
  double slide_eps = 1e-4; // m/s, friction regularization band
};

struct WorldState {
  RobotState robot;
  Vec6 contact_wrench = Vec6::Zero();  // (force; torque) about the flange
  double inserted_depth = 0.0;
};

namespace detail {

// Signed distance (edge-plane form) from a 2D point to an equilateral
// triangle with circumradius r and a vertex at angle yaw; positive outside.
// The gradient is the outward normal of the nearest edge.
inline double triangle_sdf(const Eigen::Vector2d& p, double r, double yaw,
                           Eigen::Vector2d* grad) {
  double best = -1e30;
  Eigen::Vector2d best_n(1, 0);
  for (int k = 0; k < 3; ++k) {
    // Edge midpoints sit opposite the vertices, at inradius r/2.
    const double ang = yaw + (2.0 * M_PI / 3.0) * k + M_PI / 3.0;
    const Eigen::Vector2d n(std::cos(ang), std::sin(ang));
    const double d = p.dot(n) - 0.5 * r;
    if (d > best) {
      best = d;
      best_n = n;
    }
  }
  if (grad) *grad = best_n;
  return best;
}

struct PegFrame {
  Vector3d tip;       // tip center, world
  Vector3d axis;      // unit, flange +z in world (points tip-ward)
  Vector3d tip_vel;   // velocity of the tip center
  Vector3d e1, e2;    // tip-disk in-plane axes
};

inline PegFrame peg_frame(const Pose& flange, const Vec6& flange_vel,
                          const HoleGeometry& geom) {
  PegFrame f;
  const Matrix3d R = flange.orientation.toRotationMatrix();
  f.axis = R.col(2);
  f.e1 = R.col(0);
  f.e2 = R.col(1);
  f.tip = flange.position + geom.peg_length * f.axis;
  const Vector3d v = flange_vel.head<3>();
  const Vector3d w = flange_vel.tail<3>();
  f.tip_vel = v + w.cross(f.tip - flange.position);
  return f;
}

}  // namespace detail

// Penalty contact between the peg and the surface/hole. Returns the wrench
// (force; torque) about the flange origin, world frame. Normal forces are
// clamped to be repulsive; Coulomb friction is clipped at mu * F_n.
inline Vec6 contact_forces(const Pose& peg_pose, const Vec6& peg_vel,
                           const HoleGeometry& geom, const SimParams& params,
                           const ContactParams& cp = ContactParams()) {
  const detail::PegFrame peg = detail::peg_frame(peg_pose, peg_vel, geom);
  const Vector3d u = geom.hole_axis;
  const Vector3d rel = peg.tip - geom.hole_center;
  const double h = rel.dot(u);              // height of tip above surface
  const Vector3d lat = rel - h * u;
  const double rho = lat.norm();
  const double hole_r = geom.peg_radius + geom.clearance;

  struct PointContact {
    Vector3d point, normal;
    double depth;
  };
  std::vector<PointContact> contacts;

  // Vertical edge support only applies while the tip is within this band of
  // the surface; deeper overlap is resolved by the lateral wall contact.
  constexpr double kEdgeBand = 0.004;

  if (h < 0.0) {
    const Vector3d rho_hat = rho > 1e-12 ? Vector3d(lat / rho) : Vector3d(peg.e1);
    if (geom.shape == PegShape::Circle) {
      if (rho >= hole_r && rho <= geom.surface_extent) {
        // Tip disk resting on the table.
        contacts.push_back({peg.tip, u, -h});
      } else if (rho > geom.clearance && rho < hole_r && -h <= kEdgeBand) {
        // Disk hung on the hole rim: blocked vertically at the overlap side.
        contacts.push_back({peg.tip + geom.peg_radius * rho_hat, u, -h});
      }
      if (rho < hole_r) {
        const double wall_pen = rho - geom.clearance;
        if (wall_pen > 0.0)
          contacts.push_back(
              {peg.tip + geom.peg_radius * rho_hat, -rho_hat, wall_pen});
        if (h < -geom.depth) contacts.push_back({peg.tip, u, -geom.depth - h});
      }
    } else {
      // Triangle: three tip vertices against a triangular hole.
      Vector3d b1 = (std::abs(u.z()) < 0.9) ? u.cross(Vector3d::UnitZ()).normalized()
                                            : Vector3d::UnitX();
      Vector3d b2 = u.cross(b1);
      const double yaw_peg = std::atan2(peg.e1.dot(b2), peg.e1.dot(b1));
      bool any_outside = false;
      std::vector<Vector3d> verts(3);
      std::vector<double> sdf(3);
      std::vector<Eigen::Vector2d> grads(3);
      for (int k = 0; k < 3; ++k) {
        const double ang = yaw_peg + (2.0 * M_PI / 3.0) * k;
        verts[k] = peg.tip + geom.peg_radius *
                                 (std::cos(ang) * b1 + std::sin(ang) * b2);
        const Vector3d vr = verts[k] - geom.hole_center;
        const Eigen::Vector2d p2(vr.dot(b1), vr.dot(b2));
        sdf[k] = detail::triangle_sdf(p2, geom.peg_radius + geom.clearance,
                                      geom.hole_yaw, &grads[k]);
        if (sdf[k] > 0) any_outside = true;
      }
      if (rho >= geom.peg_radius + geom.clearance + geom.peg_radius &&
          rho <= geom.surface_extent) {
        contacts.push_back({peg.tip, u, -h});  // fully over the table
      } else if (any_outside && -h <= kEdgeBand) {
        contacts.push_back({peg.tip, u, -h});  // hung on the hole rim
      } else {
        for (int k = 0; k < 3; ++k) {
          if (sdf[k] > 0) {
            const Vector3d n3 = -(grads[k].x() * b1 + grads[k].y() * b2);
            contacts.push_back({verts[k], n3, sdf[k]});
          }
        }
      }
      if (h < -geom.depth) contacts.push_back({peg.tip, u, -geom.depth - h});
    }
  }

  Vec6 wrench = Vec6::Zero();
  const Vector3d v_fl = peg_vel.head<3>();
  const Vector3d w_fl = peg_vel.tail<3>();
  for (const auto& c : contacts) {
    const Vector3d vp = v_fl + w_fl.cross(c.point - peg_pose.position);
    const double approach = -vp.dot(c.normal);
    double fn = cp.k_normal * c.depth + cp.b_normal * approach;
    if (fn <= 0.0) continue;
    Vector3d force = fn * c.normal;
    const Vector3d vt = vp - vp.dot(c.normal) * c.normal;
    const double vt_norm = vt.norm();
    if (vt_norm > 1e-12 && params.friction_coeff > 0.0) {
      const double scale = vt_norm > cp.slide_eps ? 1.0 : vt_norm / cp.slide_eps;
      force -= params.friction_coeff * fn * scale * vt / vt_norm;
    }
    wrench.head<3>() += force;
    wrench.tail<3>() += (c.point - peg_pose.position).cross(force);
  }
  return wrench;
}

// True iff the peg axis is within 5 deg of the hole axis, the tip lateral
// offset is below the clearance and at least 90% of the depth is reached.
inline bool insertion_check(const Pose& flange, double inserted_depth,
                            const HoleGeometry& geom) {
  const detail::PegFrame peg =
      detail::peg_frame(flange, Vec6::Zero(), geom);
  const double cos_tilt = peg.axis.dot(-geom.hole_axis);
  if (cos_tilt < std::cos(5.0 * M_PI / 180.0)) return false;
  const Vector3d rel = peg.tip - geom.hole_center;
  const double h = rel.dot(geom.hole_axis);
  const double rho = (rel - h * geom.hole_axis).norm();
  if (rho >= geom.clearance) return false;
  return inserted_depth >= 0.9 * geom.depth;
}

inline bool insertion_check(const WorldState& world, const ChainModel& model,
                            const HoleGeometry& geom) {
  const Pose flange = forward_kinematics(model, world.robot.q);
  return insertion_check(flange, world.inserted_depth, geom);
}

// One torque-driven world. Holds the scaled plant so repeated steps do not
// rebuild it; pure-function entry points below wrap this.
class Simulator {
 public:
  Simulator(ChainModel nominal, SimParams params, HoleGeometry geom,
            ContactParams contact = ContactParams(), double dt = 0.005,
            int substeps = 1)
      : nominal_(std::move(nominal)),
        params_(std::move(params)),
        geom_(std::move(geom)),
        contact_(contact),
        dt_(dt),
        substeps_(substeps) {
    params_.validate(nominal_.n());
    geom_.validate();
    plant_ = apply_params(nominal_, params_);
    state_.robot.q = VectorXd::Zero(nominal_.n());
    state_.robot.qdot = VectorXd::Zero(nominal_.n());
  }

  const WorldState& state() const { return state_; }
  const ChainModel& nominal_model() const { return nominal_; }
  const ChainModel& plant_model() const { return plant_; }
  const SimParams& params() const { return params_; }
  const HoleGeometry& geometry() const { return geom_; }
  const ContactParams& contact_params() const { return contact_; }
  double dt() const { return dt_; }

  void set_geometry(const HoleGeometry& geom) {
    geom_ = geom;
    geom_.validate();
  }

  void set_params(const SimParams& params) {
    params_ = params;
    params_.validate(nominal_.n());
    plant_ = apply_params(nominal_, params_);
  }

  void reset(const VectorXd& q, const VectorXd& qdot, double time = 0.0) {
    check_dims(nominal_, q);
    check_dims(nominal_, qdot);
    state_.robot.q = q;
    state_.robot.qdot = qdot;
    state_.robot.time = time;
    state_.contact_wrench = contact_wrench_at(q, qdot);
    state_.inserted_depth = inserted_depth_at(q);
  }

  // Contact wrench the next step() will apply from this state.
  Vec6 contact_wrench_at(const VectorXd& q, const VectorXd& qdot) const {
    const DynCache c = build_dyn_cache(plant_, q, qdot);
    return contact_forces(c.flange, c.twist, geom_, params_, contact_);
  }

  double inserted_depth_at(const VectorXd& q) const {
    const Pose flange = forward_kinematics(plant_, q);
    const detail::PegFrame peg = detail::peg_frame(flange, Vec6::Zero(), geom_);
    const Vector3d rel = peg.tip - geom_.hole_center;
    const double h = rel.dot(geom_.hole_axis);
    const double rho = (rel - h * geom_.hole_axis).norm();
    if (h < 0.0 && rho < geom_.peg_radius + geom_.clearance) return -h;
    return 0.0;
  }

  // Advance one control period (dt, optionally substepped).
  const WorldState& step(const VectorXd& tau_cmd) {
    check_dims(nominal_, tau_cmd);
    const double h = dt_ / substeps_;
    for (int s = 0; s < substeps_; ++s) {
      const DynCache c = build_dyn_cache(plant_, state_.robot.q, state_.robot.qdot);
      const Vec6 wrench = contact_forces(c.flange, c.twist, geom_, params_, contact_);
      const VectorXd tau_contact = c.J.transpose() * wrench;
      const VectorXd tau_gc = gravity_torque(nominal_, state_.robot.q);
      const VectorXd damping =
          plant_.joint_damping.cwiseProduct(state_.robot.qdot);
      const VectorXd qdd = c.Minv * (tau_cmd + tau_gc + tau_contact -
                                     c.gravity - c.coriolis - damping);
      state_.robot.qdot += qdd * h;
      state_.robot.q += state_.robot.qdot * h;
      state_.robot.time += h;
      state_.contact_wrench = wrench;
    }
    if (state_.robot.qdot.cwiseAbs().maxCoeff() > 100.0)
      throw NumericalBlowup("simulator: joint velocity exceeded 100 rad/s");
    state_.inserted_depth = inserted_depth_at(state_.robot.q);
    return state_;
  }

 private:
  ChainModel nominal_;
  SimParams params_;
  HoleGeometry geom_;
  ContactParams contact_;
  double dt_;
  int substeps_;
  ChainModel plant_;
  WorldState state_;
};

// Pure-function step: rebuilds the plant from params on every call.
inline WorldState step(const ChainModel& nominal, const WorldState& world,
                       const VectorXd& tau_cmd, const SimParams& params,
                       const HoleGeometry& geom,
                       const ContactParams& contact = ContactParams(),
                       double dt = 0.005) {
  if (dt <= 0) throw ConfigError("step: dt must be > 0");
  Simulator sim(nominal, params, geom, contact, dt);
  sim.reset(world.robot.q, world.robot.qdot, world.robot.time);
  return sim.step(tau_cmd);
}

}  // namespace oscrl
