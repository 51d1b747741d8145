// Small 6D spatial-vector toolkit (Featherstone convention: angular on top,
// linear below, all quantities expressed at the world origin). Used by the
// recursive Newton-Euler and composite-rigid-body algorithms.
#pragma once

#include <Eigen/Dense>

namespace oscrl {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Cross-product matrix for motion vectors: crm(v) * m = v x m.
inline Mat6 crm(const Vec6& v) {
  Mat6 m = Mat6::Zero();
  const Eigen::Matrix3d w = skew(v.head<3>());
  m.topLeftCorner<3, 3>() = w;
  m.bottomRightCorner<3, 3>() = w;
  m.bottomLeftCorner<3, 3>() = skew(v.tail<3>());
  return m;
}

// Cross-product matrix for force vectors: crf(v) = -crm(v)^T.
inline Mat6 crf(const Vec6& v) { return -crm(v).transpose(); }

// Spatial inertia at the world origin of a body with mass m, world-frame
// center of mass c and world-aligned rotational inertia about the com.
inline Mat6 spatial_inertia(double mass, const Eigen::Vector3d& com,
                            const Eigen::Matrix3d& inertia_com) {
  const Eigen::Matrix3d cx = skew(com);
  Mat6 I;
  I.topLeftCorner<3, 3>() = inertia_com + mass * cx * cx.transpose();
  I.topRightCorner<3, 3>() = mass * cx;
  I.bottomLeftCorner<3, 3>() = mass * cx.transpose();
  I.bottomRightCorner<3, 3>() = mass * Eigen::Matrix3d::Identity();
  return I;
}

}  // namespace oscrl
