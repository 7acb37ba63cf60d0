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

#ifndef FACEFIT_CORE_CAMERA_HPP_
#define FACEFIT_CORE_CAMERA_HPP_

#include <Eigen/Core>

#include "core/common.hpp"
#include "core/model.hpp"

namespace facefit {

// Weak-perspective camera. Image frame: origin top-left, x right, y down,
// units pixels. Model frame: right-handed with +z toward the camera at zero
// rotation, so model y maps straight onto image y.
struct CameraPose {
  double f = 1.0;      // pixels per model unit
  double alpha = 0.0;  // rotation about x (radians)
  double beta = 0.0;   // rotation about y
  double gamma = 0.0;  // rotation about z (in-plane)
  double tx = 0.0;     // pixels
  double ty = 0.0;

  void validate() const;

  Eigen::Matrix<double, 6, 1> as_vector() const {
    return (Eigen::Matrix<double, 6, 1>() << f, alpha, beta, gamma, tx, ty)
        .finished();
  }
  static CameraPose from_vector(const Eigen::Matrix<double, 6, 1>& p) {
    return CameraPose{p[0], p[1], p[2], p[3], p[4], p[5]};
  }
};

// Pose parameter order used by every flattened gradient in the project.
enum PoseParam {
  kPoseF = 0,
  kPoseAlpha = 1,
  kPoseBeta = 2,
  kPoseGamma = 3,
  kPoseTx = 4,
  kPoseTy = 5,
};
constexpr int kPoseParamCount = 6;

// R = Rz(gamma) * Ry(beta) * Rx(alpha), right-handed axes.
Eigen::Matrix3d rotation_from_euler(double alpha, double beta, double gamma);

// Inverse of rotation_from_euler away from |beta| = pi/2; returns
// (alpha, beta, gamma) wrapped into (-pi, pi].
Eigen::Vector3d euler_from_rotation(const Eigen::Matrix3d& rotation);

Eigen::Vector2d project_vertex(const Eigen::Vector3d& v,
                               const CameraPose& pose);

struct ProjectedMesh {
  Eigen::MatrixX2d positions;  // pixels
  Eigen::VectorXd depths;      // rotated z; larger = closer to the camera
};

ProjectedMesh project_mesh(const Mesh& mesh, const CameraPose& pose);

// Derivative of the projected point with respect to (f, alpha, beta, gamma,
// tx, ty), rows (x, y).
Eigen::Matrix<double, 2, 6> pose_jacobian(const Eigen::Vector3d& v,
                                          const CameraPose& pose);

// Derivatives of the rotation matrix with respect to each Euler angle;
// building block for pose_jacobian and for chaining through depths.
struct RotationDerivatives {
  Eigen::Matrix3d rotation;
  Eigen::Matrix3d d_alpha;
  Eigen::Matrix3d d_beta;
  Eigen::Matrix3d d_gamma;
};

RotationDerivatives rotation_derivatives(double alpha, double beta,
                                         double gamma);

}  // namespace facefit

#endif  // FACEFIT_CORE_CAMERA_HPP_
