// Chain description file: JSON with a `format: 1` header listing per-joint
// axis, fixed transform, mass, com, inertia, limits and damping.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscrl/chain_model.hpp"
#include "oscrl/error.hpp"
#include "oscrl/limit_guard.hpp"

namespace oscrl {

struct ChainDescription {
  std::string name;
  ChainModel model;
  JointLimits limits;
};

namespace io_detail {

using nlohmann::json;

inline Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(std::string("chain file: expected 3-vector for ") + what);
  return Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Eigen::Isometry3d transform(const json& j) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  if (j.contains("xyz")) t.translation() = vec3(j["xyz"], "xyz");
  if (j.contains("rpy")) {
    const Vector3d rpy = vec3(j["rpy"], "rpy");
    t.linear() = (Eigen::AngleAxisd(rpy.z(), Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(rpy.y(), Vector3d::UnitY()) *
                  Eigen::AngleAxisd(rpy.x(), Vector3d::UnitX()))
                     .toRotationMatrix();
  }
  return t;
}

inline Matrix3d inertia_from(const json& j) {
  // [ixx, iyy, izz, ixy, ixz, iyz]
  if (!j.is_array() || j.size() != 6)
    throw ConfigError("chain file: inertia must be [ixx,iyy,izz,ixy,ixz,iyz]");
  Matrix3d I;
  const double ixx = j[0], iyy = j[1], izz = j[2], ixy = j[3], ixz = j[4],
               iyz = j[5];
  I << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
  return I;
}

inline std::pair<double, double> range_from(const json& j, const char* what) {
  if (j.is_number()) {
    const double v = j.get<double>();
    return {-v, v};
  }
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError(std::string("chain file: bad range for ") + what);
}

}  // namespace io_detail

inline ChainDescription parse_chain(const nlohmann::json& root) {
  using io_detail::range_from;
  if (!root.contains("format") || root["format"].get<int>() != 1)
    throw ConfigError("chain file: missing or unsupported format (expect 1)");
  if (!root.contains("joints") || !root["joints"].is_array() ||
      root["joints"].empty())
    throw ConfigError("chain file: joints array required");

  ChainDescription d;
  d.name = root.value("name", "chain");
  const auto& joints = root["joints"];
  const int n = static_cast<int>(joints.size());
  d.model.joint_damping.resize(n);
  d.limits.q_min.resize(n);
  d.limits.q_max.resize(n);
  d.limits.v_min.resize(n);
  d.limits.v_max.resize(n);
  d.limits.a_min.resize(n);
  d.limits.a_max.resize(n);

  if (root.contains("gravity"))
    d.model.gravity = io_detail::vec3(root["gravity"], "gravity");
  if (root.contains("flange"))
    d.model.flange_offset = io_detail::transform(root["flange"]);

  for (int i = 0; i < n; ++i) {
    const auto& j = joints[i];
    JointDesc jd;
    jd.parent_to_joint = io_detail::transform(j);
    jd.axis = io_detail::vec3(j.at("axis"), "axis").normalized();
    d.model.joints.push_back(jd);

    LinkInertia li;
    li.mass = j.at("mass").get<double>();
    li.com = io_detail::vec3(j.at("com"), "com");
    li.inertia = io_detail::inertia_from(j.at("inertia"));
    d.model.links.push_back(li);

    d.model.joint_damping[i] = j.value("damping", 0.0);
    const auto& lim = j.at("limits");
    std::tie(d.limits.q_min[i], d.limits.q_max[i]) =
        range_from(lim.at("position"), "position");
    std::tie(d.limits.v_min[i], d.limits.v_max[i]) =
        range_from(lim.at("velocity"), "velocity");
    std::tie(d.limits.a_min[i], d.limits.a_max[i]) =
        range_from(lim.at("acceleration"), "acceleration");
  }
  d.model.validate();
  d.limits.validate(n);
  return d;
}

inline ChainDescription load_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("chain file: cannot open " + path);
  nlohmann::json root;
  try {
    in >> root;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("chain file: parse error: ") + e.what());
  }
  return parse_chain(root);
}

inline nlohmann::json chain_to_json(const ChainDescription& d) {
  using nlohmann::json;
  json root;
  root["format"] = 1;
  root["name"] = d.name;
  root["gravity"] = {d.model.gravity.x(), d.model.gravity.y(),
                     d.model.gravity.z()};
  {
    const Vector3d t = d.model.flange_offset.translation();
    const Vector3d rpy =
        d.model.flange_offset.linear().eulerAngles(2, 1, 0).reverse();
    root["flange"] = {{"xyz", {t.x(), t.y(), t.z()}},
                      {"rpy", {rpy.x(), rpy.y(), rpy.z()}}};
  }
  json joints = json::array();
  for (int i = 0; i < d.model.n(); ++i) {
    const auto& jd = d.model.joints[i];
    const auto& li = d.model.links[i];
    const Vector3d t = jd.parent_to_joint.translation();
    const Vector3d rpy =
        jd.parent_to_joint.linear().eulerAngles(2, 1, 0).reverse();
    json j;
    j["axis"] = {jd.axis.x(), jd.axis.y(), jd.axis.z()};
    j["xyz"] = {t.x(), t.y(), t.z()};
    j["rpy"] = {rpy.x(), rpy.y(), rpy.z()};
    j["mass"] = li.mass;
    j["com"] = {li.com.x(), li.com.y(), li.com.z()};
    j["inertia"] = {li.inertia(0, 0), li.inertia(1, 1), li.inertia(2, 2),
                    li.inertia(0, 1), li.inertia(0, 2), li.inertia(1, 2)};
    j["damping"] = d.model.joint_damping[i];
    j["limits"] = {
        {"position", {d.limits.q_min[i], d.limits.q_max[i]}},
        {"velocity", {d.limits.v_min[i], d.limits.v_max[i]}},
        {"acceleration", {d.limits.a_min[i], d.limits.a_max[i]}}};
    joints.push_back(j);
  }
  root["joints"] = joints;
  return root;
}

inline void save_chain(const ChainDescription& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("chain file: cannot write " + path);
  out << chain_to_json(d).dump(2) << "\n";
}

}  // namespace oscrl
