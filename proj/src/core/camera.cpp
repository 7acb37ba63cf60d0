// Copyright 2026 The Facefit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/camera.hpp"

#include <cmath>

namespace facefit {

void CameraPose::validate() const {
  require(std::isfinite(f) && std::isfinite(alpha) && std::isfinite(beta) &&
              std::isfinite(gamma) && std::isfinite(tx) && std::isfinite(ty),
          ErrorCode::kInvalidArgument, "non-finite pose parameter");
  require(f > 0.0, ErrorCode::kInvalidArgument, "scale factor must be positive");
  require(alpha > -M_PI && alpha <= M_PI && beta > -M_PI && beta <= M_PI &&
              gamma > -M_PI && gamma <= M_PI,
          ErrorCode::kInvalidArgument, "angle outside (-pi, pi]");
}

namespace {

Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Eigen::Matrix3d rot_y(double b) {
  const double c = std::cos(b), s = std::sin(b);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Eigen::Matrix3d rot_z(double g) {
  const double c = std::cos(g), s = std::sin(g);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

Eigen::Matrix3d d_rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}

Eigen::Matrix3d d_rot_y(double b) {
  const double c = std::cos(b), s = std::sin(b);
  Eigen::Matrix3d m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

Eigen::Matrix3d d_rot_z(double g) {
  const double c = std::cos(g), s = std::sin(g);
  Eigen::Matrix3d m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

}  // namespace

Eigen::Matrix3d rotation_from_euler(double alpha, double beta, double gamma) {
  return rot_z(gamma) * rot_y(beta) * rot_x(alpha);
}

Eigen::Vector3d euler_from_rotation(const Eigen::Matrix3d& r) {
  // For R = Rz*Ry*Rx: R(2,0) = -sin(beta), R(2,1) = cos(beta) sin(alpha),
  // R(2,2) = cos(beta) cos(alpha), R(1,0)/R(0,0) = tan(gamma).
  const double beta = std::asin(-std::min(1.0, std::max(-1.0, r(2, 0))));
  const double alpha = std::atan2(r(2, 1), r(2, 2));
  const double gamma = std::atan2(r(1, 0), r(0, 0));
  return {wrap_angle(alpha), wrap_angle(beta), wrap_angle(gamma)};
}

Eigen::Vector2d project_vertex(const Eigen::Vector3d& v,
                               const CameraPose& pose) {
  const Eigen::Vector3d rv =
      rotation_from_euler(pose.alpha, pose.beta, pose.gamma) * v;
  return {pose.f * rv.x() + pose.tx, pose.f * rv.y() + pose.ty};
}

ProjectedMesh project_mesh(const Mesh& mesh, const CameraPose& pose) {
  const Eigen::Matrix3d r =
      rotation_from_euler(pose.alpha, pose.beta, pose.gamma);
  ProjectedMesh out;
  const Eigen::MatrixX3d rotated = mesh.vertices * r.transpose();
  out.positions.resize(mesh.vertices.rows(), 2);
  out.positions.col(0) = pose.f * rotated.col(0).array() + pose.tx;
  out.positions.col(1) = pose.f * rotated.col(1).array() + pose.ty;
  out.depths = rotated.col(2);
  return out;
}

RotationDerivatives rotation_derivatives(double alpha, double beta,
                                         double gamma) {
  const Eigen::Matrix3d rx = rot_x(alpha);
  const Eigen::Matrix3d ry = rot_y(beta);
  const Eigen::Matrix3d rz = rot_z(gamma);
  RotationDerivatives out;
  out.rotation = rz * ry * rx;
  out.d_alpha = rz * ry * d_rot_x(alpha);
  out.d_beta = rz * d_rot_y(beta) * rx;
  out.d_gamma = d_rot_z(gamma) * ry * rx;
  return out;
}

Eigen::Matrix<double, 2, 6> pose_jacobian(const Eigen::Vector3d& v,
                                          const CameraPose& pose) {
  const RotationDerivatives rd =
      rotation_derivatives(pose.alpha, pose.beta, pose.gamma);
  const Eigen::Vector3d rv = rd.rotation * v;
  Eigen::Matrix<double, 2, 6> jac;
  jac.col(kPoseF) = rv.head<2>();
  jac.col(kPoseAlpha) = pose.f * (rd.d_alpha * v).head<2>();
  jac.col(kPoseBeta) = pose.f * (rd.d_beta * v).head<2>();
  jac.col(kPoseGamma) = pose.f * (rd.d_gamma * v).head<2>();
  jac.col(kPoseTx) = Eigen::Vector2d(1, 0);
  jac.col(kPoseTy) = Eigen::Vector2d(0, 1);
  return jac;
}

}  // namespace facefit
