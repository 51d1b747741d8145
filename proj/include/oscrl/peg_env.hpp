// Goal-conditioned peg-in-hole MDP on top of the torque pipeline: 14-dim
// observation with relative goal encoding, 4-dim action held for 10 control
// substeps (50 ms policy period over the 5 ms control period), distance cost
// plus insertion bonus, start/goal randomization and optional dynamics
// randomization.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "oscrl/chain_model.hpp"
#include "oscrl/error.hpp"
#include "oscrl/limit_guard.hpp"
#include "oscrl/osc.hpp"
#include "oscrl/rng.hpp"
#include "oscrl/sim.hpp"

namespace oscrl {

struct Box3 {
  Vector3d center = Vector3d::Zero();
  Vector3d half = Vector3d::Zero();

  Vector3d sample(Rng& rng) const {
    Vector3d p;
    for (int i = 0; i < 3; ++i)
      p[i] = center[i] + rng.uniform(-half[i], half[i]);
    return p;
  }
  bool contains(const Vector3d& p, double tol = 1e-9) const {
    return ((p - center).cwiseAbs().array() <= half.array() + tol).all();
  }
};

struct EpisodeConfig {
  int max_steps = 200;
  int control_substeps = 10;  // 50 ms policy step over 5 ms control ticks
  Box3 start_range{{0.55, 0.0, 0.58}, {0.05, 0.05, 0.025}};  // flange position
  double start_theta_range = M_PI / 6.0;
  Box3 goal_range{{0.55, 0.0, 0.40}, {0.02, 0.02, 0.0}};  // hole entrance
  double goal_theta_range = M_PI / 6.0;
  double success_bonus = 50.0;
  double alpha = 0.6;   // L2 weight
  double beta = 0.4;    // L1 weight
  double gamma = 0.1;   // |theta| weight
  bool dynamics_randomization = false;
  double f_max = 30.0;          // N, action force clamp
  double theta_des_range = M_PI / 4.0;  // rad, action theta clamp
  int stack = 0;                // history depth, 0 or 4

  int obs_dim() const { return 14 + stack * 18; }
};

struct Observation {
  VectorXd q;          // joint angles
  Vector3d ee_rel;     // flange position - goal position, per axis
  double ee_theta_rel = 0.0;
  Vector3d ee_vel;     // flange linear velocity
  VectorXd flat;       // full vector including stacked history
};

struct EnvInfo {
  bool inserted = false;
  int joint_saturations = 0;
  int cart_saturations = 0;
  double inserted_depth = 0.0;
  Vec6 contact_wrench = Vec6::Zero();
};

struct EnvStep {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  EnvInfo info;
};

namespace detail {

// Damped least-squares projection of the joint configuration onto a target
// flange pose. Not a general IK solver; it only needs to reach poses near
// the sampling boxes.
inline std::optional<VectorXd> project_to_pose(const ChainModel& model,
                                               const Pose& target,
                                               const VectorXd& q0,
                                               int max_iters = 120) {
  VectorXd q = q0;
  for (int it = 0; it < max_iters; ++it) {
    const Kinematics k = chain_frames(model, q);
    Pose cur;
    cur.position = k.flange.translation();
    cur.orientation = Quaterniond(k.flange.linear());
    cur.canonicalize();
    Vec6 err;
    err.head<3>() = target.position - cur.position;
    err.tail<3>() = rotation_coords(target.orientation, cur.orientation);
    if (err.head<3>().norm() < 1e-5 && err.tail<3>().norm() < 1e-4)
      return q;
    const MatrixXd J = jacobian_at(k, cur.position);
    const MatrixXd JJt =
        J * J.transpose() + 1e-6 * MatrixXd::Identity(6, 6);
    VectorXd dq = J.transpose() * JJt.ldlt().solve(err);
    const double norm = dq.norm();
    if (norm > 0.5) dq *= 0.5 / norm;
    q += dq;
  }
  return std::nullopt;
}

}  // namespace detail

struct PegEnvConfig {
  ChainModel model;
  JointLimits joint_limits;
  CartLimits cart_limits;
  TaskSpec task;
  SimParams sim_params;   // nominal plant parameters
  HoleGeometry geometry;  // hole_center is the nominal location
  ContactParams contact;
  EpisodeConfig episode;
  VectorXd home_q;        // seed configuration for start projection
  double control_dt = 0.005;
};

class PegEnv {
 public:
  explicit PegEnv(PegEnvConfig cfg, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)),
        rng_(seed),
        sim_(cfg_.model, cfg_.sim_params, cfg_.geometry, cfg_.contact,
             cfg_.control_dt) {
    cfg_.model.validate();
    cfg_.joint_limits.validate(cfg_.model.n());
    cfg_.cart_limits.validate();
    cfg_.task.validate();
    if (cfg_.home_q.size() != cfg_.model.n())
      throw ConfigError("peg env: home_q size mismatch");
  }

  const PegEnvConfig& config() const { return cfg_; }
  const Simulator& sim() const { return sim_; }
  int obs_dim() const { return cfg_.episode.obs_dim(); }
  static constexpr int kActionDim = 4;
  int step_count() const { return step_count_; }
  const Pose& goal_flange_pose() const { return goal_flange_; }
  double goal_theta() const { return goal_theta_; }

  Observation reset() { return reset(rng_); }

  Observation reset(Rng& rng) {
    // Hole placement (and with it the goal encoding).
    const Vector3d hole = cfg_.episode.goal_range.sample(rng);
    goal_theta_ = rng.uniform(-cfg_.episode.goal_theta_range,
                              cfg_.episode.goal_theta_range);
    HoleGeometry geom = cfg_.geometry;
    geom.hole_center = hole;
    geom.hole_yaw = goal_theta_;
    sim_.set_geometry(geom);

    goal_flange_.position =
        hole + geom.hole_axis * (geom.peg_length - geom.depth);
    goal_flange_.orientation =
        Eigen::AngleAxisd(goal_theta_, Vector3d::UnitZ()) *
        cfg_.task.reference.orientation;
    goal_flange_.canonicalize();

    if (cfg_.episode.dynamics_randomization) {
      SimParams p = cfg_.sim_params;
      const double g0 = cfg_.sim_params.gravity.norm();
      for (int i = 0; i < 3; ++i)
        p.gravity[i] += rng.uniform(-0.02, 0.02) * g0;
      for (int i = 0; i < cfg_.model.n(); ++i) {
        p.mass_scale[i] = rng.log_uniform(0.8, 1.2);
        p.joint_damping[i] =
            cfg_.sim_params.joint_damping[i] * rng.log_uniform(0.8, 1.2);
      }
      p.friction_coeff = cfg_.sim_params.friction_coeff * rng.log_uniform(0.8, 1.2);
      sim_.set_params(p);
    } else {
      sim_.set_params(cfg_.sim_params);
    }

    // Start state: sample a flange pose in the start box and project the
    // joint configuration onto it.
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Pose target;
      target.position = cfg_.episode.start_range.sample(rng);
      const double theta0 = rng.uniform(-cfg_.episode.start_theta_range,
                                        cfg_.episode.start_theta_range);
      target.orientation = Eigen::AngleAxisd(theta0, Vector3d::UnitZ()) *
                           cfg_.task.reference.orientation;
      target.canonicalize();
      VectorXd q_seed = cfg_.home_q;
      if (attempt > 0)
        q_seed += 0.05 * attempt / 10.0 * rng.normal_vector(cfg_.model.n());
      auto q = detail::project_to_pose(cfg_.model, target, q_seed);
      if (!q) continue;
      const auto& jl = cfg_.joint_limits;
      if (((*q - jl.q_min).array() < 0.05).any() ||
          ((jl.q_max - *q).array() < 0.05).any())
        continue;
      sim_.reset(*q, VectorXd::Zero(cfg_.model.n()));
      placed = true;
    }
    if (!placed)
      throw UnreachableStart("peg env: no start configuration found");

    step_count_ = 0;
    done_ = false;
    history_.clear();
    last_obs_core_ = core_observation();
    return assemble_observation();
  }

  EnvStep step(const Eigen::Vector4d& action_in) {
    if (done_) throw EpisodeFinished("peg env: episode already finished");
    Eigen::Vector4d action = action_in;
    for (int i = 0; i < 3; ++i)
      action[i] = std::clamp(action[i], -cfg_.episode.f_max, cfg_.episode.f_max);
    action[3] = std::clamp(action[3], -cfg_.episode.theta_des_range,
                           cfg_.episode.theta_des_range);

    EnvStep out;
    for (int s = 0; s < cfg_.episode.control_substeps; ++s) {
      const VectorXd& q = sim_.state().robot.q;
      const VectorXd& qd = sim_.state().robot.qdot;
      const DynCache cache = build_dyn_cache(cfg_.model, q, qd);
      const CommandVector cmd =
          build_task(action, cfg_.task, cache.flange, cache.twist);
      const OscTorque osc = osc_torque(cache, cfg_.task, cmd.f_star);
      // Known plant-side torques: gravity compensation, measured contact,
      // nominal viscous damping.
      const Vec6 wrench = sim_.contact_wrench_at(q, qd);
      const VectorXd tau_ext = cache.gravity + cache.J.transpose() * wrench -
                               cfg_.model.joint_damping.cwiseProduct(qd);
      const GuardedTorque guard =
          guarded_torque(cache, osc.tau, cfg_.joint_limits, cfg_.cart_limits,
                         cfg_.control_dt, tau_ext);
      out.info.joint_saturations +=
          static_cast<int>(guard.joint.saturated.size());
      out.info.cart_saturations += static_cast<int>(guard.cart.saturated.size());
      sim_.step(guard.tau);
    }
    ++step_count_;

    // History records the observation the action was computed from.
    if (cfg_.episode.stack > 0) {
      history_.push_front({last_obs_core_, action});
      while (static_cast<int>(history_.size()) > cfg_.episode.stack)
        history_.pop_back();
    }

    out.info.inserted = insertion_check(flange_pose(), sim_.state().inserted_depth,
                                        sim_.geometry());
    out.info.inserted_depth = sim_.state().inserted_depth;
    out.info.contact_wrench = sim_.state().contact_wrench;

    last_obs_core_ = core_observation();
    out.obs = assemble_observation();
    out.reward = reward(out.obs, out.info.inserted);
    done_ = out.info.inserted || step_count_ >= cfg_.episode.max_steps;
    out.done = done_;
    return out;
  }

  // C_total = -(alpha ||x||_2 + beta ||x||_1 + gamma |theta|) + bonus.
  double reward(const Observation& obs, bool inserted) const {
    const double c_pos = cfg_.episode.alpha * obs.ee_rel.norm() +
                         cfg_.episode.beta * obs.ee_rel.lpNorm<1>() +
                         cfg_.episode.gamma * std::abs(obs.ee_theta_rel);
    const double bonus = inserted ? cfg_.episode.success_bonus : 0.0;
    return -c_pos + bonus;
  }

  Pose flange_pose() const {
    return forward_kinematics(cfg_.model, sim_.state().robot.q);
  }

  struct EvalResult {
    double success_rate = 0.0;
    double mean_steps = 0.0;
    int episodes = 0;
    int successes = 0;
  };

  // Deterministic (mean-action) policy rollouts.
  EvalResult evaluate_policy(
      const std::function<Eigen::Vector4d(const VectorXd&)>& policy,
      int episodes) {
    EvalResult res;
    res.episodes = episodes;
    long total_steps = 0;
    for (int e = 0; e < episodes; ++e) {
      Observation obs = reset();
      bool inserted = false;
      int steps = 0;
      while (true) {
        const EnvStep s = step(policy(obs.flat));
        ++steps;
        obs = s.obs;
        inserted = s.info.inserted;
        if (s.done) break;
      }
      res.successes += inserted ? 1 : 0;
      total_steps += steps;
    }
    res.success_rate = static_cast<double>(res.successes) / episodes;
    res.mean_steps = static_cast<double>(total_steps) / episodes;
    return res;
  }

 private:
  struct CoreObs {
    VectorXd q;
    Vector3d ee_rel;
    double theta_rel;
    Vector3d ee_vel;

    VectorXd flat() const {
      VectorXd v(static_cast<int>(q.size()) + 7);
      v << q, ee_rel, theta_rel, ee_vel;
      return v;
    }
  };

  CoreObs core_observation() const {
    const VectorXd& q = sim_.state().robot.q;
    const VectorXd& qd = sim_.state().robot.qdot;
    const DynCache cache = build_dyn_cache(cfg_.model, q, qd);
    CoreObs c;
    c.q = q;
    c.ee_rel = cache.flange.position - goal_flange_.position;
    const Vector3d rot =
        rotation_coords(cache.flange.orientation, cfg_.task.reference.orientation);
    c.theta_rel = wrap_angle(rot.z() - goal_theta_);
    c.ee_vel = cache.twist.head<3>();
    return c;
  }

  Observation assemble_observation() const {
    Observation obs;
    obs.q = last_obs_core_.q;
    obs.ee_rel = last_obs_core_.ee_rel;
    obs.ee_theta_rel = last_obs_core_.theta_rel;
    obs.ee_vel = last_obs_core_.ee_vel;
    obs.flat = VectorXd::Zero(cfg_.episode.obs_dim());
    obs.flat.head(14) = last_obs_core_.flat();
    int off = 14;
    for (const auto& [past_obs, past_act] : history_) {
      obs.flat.segment(off, 14) = past_obs.flat();
      obs.flat.segment(off + 14, 4) = past_act;
      off += 18;
    }
    return obs;
  }

  PegEnvConfig cfg_;
  Rng rng_;
  Simulator sim_;
  Pose goal_flange_;
  double goal_theta_ = 0.0;
  int step_count_ = 0;
  bool done_ = false;
  CoreObs last_obs_core_;
  std::deque<std::pair<CoreObs, Eigen::Vector4d>> history_;
};

}  // namespace oscrl
