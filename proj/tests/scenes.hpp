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

#ifndef FACEFIT_TESTS_SCENES_HPP_
#define FACEFIT_TESTS_SCENES_HPP_

#include <algorithm>
#include <utility>
#include <vector>

#include "core/losses.hpp"
#include "core/render.hpp"
#include "core/rng.hpp"
#include "support.hpp"

namespace facefit {
namespace test {

inline CameraPose centered_pose(double f, double yaw, int size) {
  CameraPose pose;
  pose.f = f;
  pose.beta = yaw;
  pose.tx = size / 2.0;
  pose.ty = size / 2.0;
  return pose;
}

inline Eigen::MatrixX2d project_landmarks(const Mesh& mesh,
                                          const CameraPose& pose) {
  const Eigen::MatrixX3d points = landmark_positions(mesh);
  Eigen::MatrixX2d out(points.rows(), 2);
  for (int l = 0; l < points.rows(); ++l) {
    out.row(l) = project_vertex(points.row(l).transpose(), pose).transpose();
  }
  return out;
}

inline ShapeParams random_params(const MorphableModel& model, Rng* rng,
                                 double sigma_fraction) {
  ShapeParams params = ShapeParams::zeros(model.id_dims(), model.exp_dims());
  for (int k = 0; k < params.id.size(); ++k) {
    params.id[k] =
        rng->truncated_normal(model.id_sigma()[k] * sigma_fraction, 2.0);
  }
  for (int k = 0; k < params.exp.size(); ++k) {
    params.exp[k] =
        rng->truncated_normal(model.exp_sigma()[k] * sigma_fraction, 2.0);
  }
  return params;
}

struct MultiViewScene {
  MorphableModel model;
  ShapeParams params;
  std::vector<CameraPose> poses;
  std::vector<ViewObservation> views;
  int size = 0;
};

// Ground-truth scene: a textured synthetic head rendered from three yaws,
// with exact projected landmarks as the detections.
inline MultiViewScene multi_view_scene(uint64_t seed, int size,
                                       int budget = 500) {
  MorphableModel model = generate_synthetic_model(seed, budget, 4, 3);
  Rng rng(seed * 977 + 3);
  ShapeParams params = ShapeParams::zeros(4, 3);
  for (int k = 0; k < params.id.size(); ++k) {
    params.id[k] = rng.truncated_normal(model.id_sigma()[k] * 0.5, 2.0);
  }
  for (int k = 0; k < params.exp.size(); ++k) {
    params.exp[k] = rng.truncated_normal(model.exp_sigma()[k] * 0.5, 2.0);
  }
  const Mesh mesh = assemble_shape(model, params);

  const double f = 0.27 * size;
  const RgbImage source = textured_image(size, size, seed + 100);
  const TextureMap texture =
      sample_texture(source, mesh, centered_pose(f, 0.0, size));

  std::vector<CameraPose> poses;
  std::vector<ViewObservation> views;
  for (const double yaw : {-0.5, 0.0, 0.5}) {
    const CameraPose pose = centered_pose(f, yaw, size);
    RenderResult rendered = render_textured(mesh, texture, pose, size, size);
    ViewObservation obs;
    obs.image = std::move(rendered.image);
    obs.landmarks = project_landmarks(mesh, pose);
    poses.push_back(pose);
    views.push_back(std::move(obs));
  }
  return {std::move(model), std::move(params), std::move(poses),
          std::move(views), size};
}

inline RgbImage shifted_copy(const RgbImage& img, int dx, int dy) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x + dx, 0, img.width - 1);
      const int sy = std::clamp(y + dy, 0, img.height - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace test
}  // namespace facefit

#endif  // FACEFIT_TESTS_SCENES_HPP_
