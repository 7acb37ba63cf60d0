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

#ifndef FACEFIT_CORE_SCENE_HPP_
#define FACEFIT_CORE_SCENE_HPP_

#include <optional>
#include <string>
#include <vector>

#include "core/camera.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"
#include "core/render.hpp"

namespace facefit {

// One view entry of a scene file. Paths are stored relative to the scene
// file's directory unless absolute.
struct SceneViewEntry {
  std::string image;
  std::string landmarks;
  std::optional<CameraPose> truth_pose;
};

// On-disk description of a multi-view capture: a shape model, per-view images
// with landmark files, and optional ground truth. At least two views.
struct SceneFile {
  std::string model;
  int image_size = 224;
  std::vector<SceneViewEntry> views;
  // Path of the ground-truth coefficient file; empty when absent.
  std::string truth_params;
};

// Parses and validates a scene file. Every referenced file must exist;
// failures name the missing path.
SceneFile read_scene_file(const std::string& path);
void write_scene_file(const SceneFile& scene, const std::string& path);

// Scene with all referenced data loaded and checked against the model.
struct LoadedScene {
  MorphableModel model;
  std::vector<ViewObservation> views;
  // Populated only when every view carries a ground-truth pose.
  std::vector<CameraPose> truth_poses;
  std::optional<ShapeParams> truth_params;
  int image_size = 0;
};
LoadedScene load_scene(const std::string& scene_path);

// Landmark files hold a JSON array of [x, y] pixel pairs.
Eigen::MatrixX2d read_landmarks_json(const std::string& path);
void write_landmarks_json(const Eigen::MatrixX2d& landmarks,
                          const std::string& path);

// Coefficient files hold {"id": [...], "exp": [...]}.
ShapeParams read_params_json(const std::string& path);
void write_params_json(const ShapeParams& params, const std::string& path);
std::string params_to_json(const ShapeParams& params);

struct SynthConfig {
  uint64_t seed = 0;
  // 0 derives the model seed from `seed`; fixing it shares one model across
  // scenes.
  uint64_t model_seed = 0;
  int image_size = 224;
  int view_count = 3;
  int vertex_budget = 1500;
  int id_dims = 8;
  int exp_dims = 6;
  // End views sit at +-yaw_spread radians; every angle gets pose_jitter noise.
  double yaw_spread = 0.52;
  double pose_jitter = 0.03;
  // Focal length and principal point as fractions of the image size.
  double focal_fraction = 0.27;
  double focal_jitter = 0.01;
  double center_jitter = 0.02;
  // Shape coefficients are drawn per-sigma and truncated at this many sigmas.
  double sigma_clip = 2.0;
  // Pixel sigma of noise added to the emitted landmarks; 0 keeps them exact
  // projections of the ground-truth landmark vertices.
  double landmark_noise = 0.0;
  // Index of one view whose image is scaled by brighten_factor; -1 for none.
  int brighten_view = -1;
  double brighten_factor = 1.3;
  double background = 0.35;

  void validate() const;
};

// Fully materialized synthetic scene with its ground truth.
struct SynthScene {
  MorphableModel model;
  ShapeParams params;
  std::vector<CameraPose> poses;
  std::vector<ViewObservation> views;
  int image_size = 0;
};

// Deterministic per config; view images are textured renders over a uniform
// background, landmarks are ground-truth projections plus optional noise.
SynthScene make_synth_scene(const SynthConfig& config);

// Writes model, images, landmark files, ground truth, and scene.json under
// out_dir (created if needed). Returns the scene file path.
std::string write_synth_scene(const SynthScene& scene,
                              const std::string& out_dir);

// Frontal view with the focal length and centering used by synthesis.
CameraPose canonical_pose(int image_size);

// Smooth banded per-vertex colors from the vertex positions. Deterministic
// per seed; wavelengths span a few bands across the mesh so rendered views
// carry usable image gradients.
TextureMap procedural_texture(const Mesh& mesh, uint64_t seed);

}  // namespace facefit

#endif  // FACEFIT_CORE_SCENE_HPP_
