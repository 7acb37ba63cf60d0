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

#include "core/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/image.hpp"
#include "core/mask.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace facefit {

namespace {

namespace fs = std::filesystem;

std::string resolve(const std::string& base_dir, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).string();
}

nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot open " + path);
  out << text;
  out.close();
  require(out.good(), ErrorCode::kIo, "failed writing " + path);
}

Eigen::VectorXd json_to_vector(const nlohmann::json& j, const std::string& what) {
  require(j.is_array(), ErrorCode::kFormat, what + " must be an array");
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    require(j[static_cast<size_t>(i)].is_number(), ErrorCode::kFormat,
            what + " must hold numbers");
    v[i] = j[static_cast<size_t>(i)].get<double>();
  }
  return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

}  // namespace

SceneFile read_scene_file(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  require(j.is_object(), ErrorCode::kFormat, path + ": not a JSON object");

  SceneFile scene;
  require(j.contains("model") && j["model"].is_string(), ErrorCode::kFormat,
          path + ": missing model path");
  scene.model = j["model"].get<std::string>();
  require(j.contains("image_size") && j["image_size"].is_number_integer(),
          ErrorCode::kFormat, path + ": missing image_size");
  scene.image_size = j["image_size"].get<int>();
  require(scene.image_size > 0, ErrorCode::kFormat,
          path + ": image_size must be positive");

  require(j.contains("views") && j["views"].is_array(), ErrorCode::kFormat,
          path + ": missing views");
  for (const auto& vj : j["views"]) {
    SceneViewEntry entry;
    require(vj.contains("image") && vj["image"].is_string(), ErrorCode::kFormat,
            path + ": view missing image path");
    entry.image = vj["image"].get<std::string>();
    require(vj.contains("landmarks") && vj["landmarks"].is_string(),
            ErrorCode::kFormat, path + ": view missing landmark path");
    entry.landmarks = vj["landmarks"].get<std::string>();
    if (vj.contains("truth_pose")) {
      const Eigen::VectorXd p = json_to_vector(vj["truth_pose"], "truth_pose");
      require(p.size() == 6, ErrorCode::kFormat,
              path + ": truth_pose must have 6 entries");
      entry.truth_pose =
          CameraPose::from_vector(Eigen::Matrix<double, 6, 1>(p.head<6>()));
    }
    scene.views.push_back(std::move(entry));
  }
  require(scene.views.size() >= 2, ErrorCode::kFormat,
          path + ": a scene needs at least two views");
  if (j.contains("truth_params")) {
    require(j["truth_params"].is_string(), ErrorCode::kFormat,
            path + ": truth_params must be a path");
    scene.truth_params = j["truth_params"].get<std::string>();
  }

  const std::string base_dir = fs::path(path).parent_path().string();
  const auto check_exists = [&](const std::string& rel) {
    const std::string full = resolve(base_dir, rel);
    require(fs::exists(full), ErrorCode::kIo, "missing file: " + full);
  };
  check_exists(scene.model);
  for (const auto& view : scene.views) {
    check_exists(view.image);
    check_exists(view.landmarks);
  }
  if (!scene.truth_params.empty()) check_exists(scene.truth_params);
  return scene;
}

void write_scene_file(const SceneFile& scene, const std::string& path) {
  require(scene.views.size() >= 2, ErrorCode::kInvalidArgument,
          "a scene needs at least two views");
  nlohmann::json j;
  j["model"] = scene.model;
  j["image_size"] = scene.image_size;
  j["views"] = nlohmann::json::array();
  for (const auto& view : scene.views) {
    nlohmann::json vj;
    vj["image"] = view.image;
    vj["landmarks"] = view.landmarks;
    if (view.truth_pose) {
      vj["truth_pose"] = vector_to_json(view.truth_pose->as_vector());
    }
    j["views"].push_back(std::move(vj));
  }
  if (!scene.truth_params.empty()) j["truth_params"] = scene.truth_params;
  write_text_file(j.dump(2) + "\n", path);
}

LoadedScene load_scene(const std::string& scene_path) {
  const SceneFile scene = read_scene_file(scene_path);
  const std::string base_dir = fs::path(scene_path).parent_path().string();

  LoadedScene loaded;
  loaded.image_size = scene.image_size;
  loaded.model = MorphableModel::load(resolve(base_dir, scene.model));

  bool all_poses = true;
  for (const auto& entry : scene.views) {
    ViewObservation obs;
    obs.image = read_png(resolve(base_dir, entry.image));
    require(obs.image.width == scene.image_size &&
                obs.image.height == scene.image_size,
            ErrorCode::kFormat, entry.image + ": image size does not match scene");
    obs.landmarks = read_landmarks_json(resolve(base_dir, entry.landmarks));
    require(obs.landmarks.rows() == loaded.model.landmark_count(),
            ErrorCode::kFormat,
            entry.landmarks + ": landmark count does not match model");
    loaded.views.push_back(std::move(obs));
    if (entry.truth_pose) {
      loaded.truth_poses.push_back(*entry.truth_pose);
    } else {
      all_poses = false;
    }
  }
  if (!all_poses) loaded.truth_poses.clear();

  if (!scene.truth_params.empty()) {
    ShapeParams params = read_params_json(resolve(base_dir, scene.truth_params));
    require(params.id.size() == loaded.model.id_dims() &&
                params.exp.size() == loaded.model.exp_dims(),
            ErrorCode::kFormat,
            scene.truth_params + ": coefficient counts do not match model");
    loaded.truth_params = std::move(params);
  }
  return loaded;
}

Eigen::MatrixX2d read_landmarks_json(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  require(j.is_array(), ErrorCode::kFormat, path + ": not a JSON array");
  Eigen::MatrixX2d out(static_cast<int>(j.size()), 2);
  for (int i = 0; i < out.rows(); ++i) {
    const auto& pair = j[static_cast<size_t>(i)];
    require(pair.is_array() && pair.size() == 2 && pair[0].is_number() &&
                pair[1].is_number(),
            ErrorCode::kFormat, path + ": entries must be [x, y] pairs");
    out(i, 0) = pair[0].get<double>();
    out(i, 1) = pair[1].get<double>();
  }
  return out;
}

void write_landmarks_json(const Eigen::MatrixX2d& landmarks,
                          const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < landmarks.rows(); ++i) {
    j.push_back({landmarks(i, 0), landmarks(i, 1)});
  }
  write_text_file(j.dump(2) + "\n", path);
}

ShapeParams read_params_json(const std::string& path) {
  const nlohmann::json j = parse_json_file(path);
  require(j.is_object() && j.contains("id") && j.contains("exp"),
          ErrorCode::kFormat, path + ": expected {\"id\": [...], \"exp\": [...]}");
  ShapeParams params;
  params.id = json_to_vector(j["id"], path + ": id");
  params.exp = json_to_vector(j["exp"], path + ": exp");
  return params;
}

std::string params_to_json(const ShapeParams& params) {
  nlohmann::json j;
  j["id"] = vector_to_json(params.id);
  j["exp"] = vector_to_json(params.exp);
  return j.dump(2) + "\n";
}

void write_params_json(const ShapeParams& params, const std::string& path) {
  write_text_file(params_to_json(params), path);
}

void SynthConfig::validate() const {
  require(image_size > 0, ErrorCode::kInvalidArgument,
          "image size must be positive");
  require(view_count >= 2, ErrorCode::kInvalidArgument,
          "a scene needs at least two views");
  require(vertex_budget >= kSyntheticMinVertexBudget,
          ErrorCode::kInvalidArgument, "vertex budget too small");
  require(id_dims > 0 && exp_dims > 0, ErrorCode::kInvalidArgument,
          "coefficient counts must be positive");
  require(focal_fraction > 0.0, ErrorCode::kInvalidArgument,
          "focal fraction must be positive");
  require(sigma_clip > 0.0, ErrorCode::kInvalidArgument,
          "sigma clip must be positive");
  require(landmark_noise >= 0.0, ErrorCode::kInvalidArgument,
          "landmark noise must be non-negative");
  require(brighten_view < view_count, ErrorCode::kInvalidArgument,
          "brighten view out of range");
  require(brighten_factor > 0.0, ErrorCode::kInvalidArgument,
          "brighten factor must be positive");
  require(background >= 0.0 && background <= 1.0, ErrorCode::kInvalidArgument,
          "background must be in [0, 1]");
}

TextureMap procedural_texture(const Mesh& mesh, uint64_t seed) {
  require(mesh.vertex_count() > 0, ErrorCode::kInvalidArgument,
          "mesh has no vertices");
  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
  const Eigen::RowVector3d span = (hi - lo).cwiseMax(1e-12);

  Rng rng(seed ^ 0x7ef3a5c9d1b20e44ull);
  double freq[3][3];
  double phase[3];
  Eigen::Matrix3d mix;
  for (int c = 0; c < 3; ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      freq[c][axis] = rng.uniform(1.5, 4.0);
      mix(c, axis) = rng.uniform(-1.0, 1.0);
    }
    phase[c] = rng.uniform(0.0, 2.0 * M_PI);
  }

  TextureMap texture;
  texture.colors.resize(mesh.vertex_count(), 3);
  texture.valid.assign(static_cast<size_t>(mesh.vertex_count()), 1);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Eigen::RowVector3d u =
        (mesh.vertices.row(v) - lo).cwiseQuotient(span);
    for (int c = 0; c < 3; ++c) {
      const double band =
          std::sin(2.0 * M_PI * (freq[c][0] * u.x() + mix(c, 0) * u.y()) +
                   phase[c]) +
          0.6 * std::sin(2.0 * M_PI *
                             (freq[c][1] * u.y() + mix(c, 1) * u.z()) +
                         1.7 * phase[c]) +
          0.4 * std::sin(2.0 * M_PI *
                             (freq[c][2] * u.z() + mix(c, 2) * u.x()) +
                         2.3 * phase[c]);
      texture.colors(v, c) = std::clamp(0.5 + 0.21 * band, 0.05, 0.95);
    }
  }
  return texture;
}

CameraPose canonical_pose(int image_size) {
  require(image_size > 0, ErrorCode::kInvalidArgument,
          "image size must be positive");
  CameraPose pose;
  pose.f = 0.27 * image_size;
  pose.alpha = 0.0;
  pose.beta = 0.0;
  pose.gamma = 0.0;
  pose.tx = 0.5 * image_size;
  pose.ty = 0.5 * image_size;
  return pose;
}

SynthScene make_synth_scene(const SynthConfig& config) {
  config.validate();
  const uint64_t model_seed =
      config.model_seed != 0 ? config.model_seed : config.seed + 1000;

  SynthScene scene;
  scene.image_size = config.image_size;
  scene.model = generate_synthetic_model(model_seed, config.vertex_budget,
                                         config.id_dims, config.exp_dims);

  Rng rng(config.seed);
  scene.params = ShapeParams::zeros(config.id_dims, config.exp_dims);
  for (int i = 0; i < config.id_dims; ++i) {
    scene.params.id[i] =
        rng.truncated_normal(scene.model.id_sigma()[i], config.sigma_clip);
  }
  for (int i = 0; i < config.exp_dims; ++i) {
    scene.params.exp[i] =
        rng.truncated_normal(scene.model.exp_sigma()[i], config.sigma_clip);
  }

  const Mesh mesh = assemble_shape(scene.model, scene.params);
  const TextureMap texture = procedural_texture(mesh, config.seed);
  const double size = config.image_size;

  for (int v = 0; v < config.view_count; ++v) {
    CameraPose pose;
    const double spread_t =
        config.view_count > 1
            ? 2.0 * v / (config.view_count - 1.0) - 1.0
            : 0.0;
    pose.beta = config.yaw_spread * spread_t +
                config.pose_jitter * rng.normal();
    pose.alpha = config.pose_jitter * rng.normal();
    pose.gamma = config.pose_jitter * rng.normal();
    pose.f = (config.focal_fraction +
              config.focal_jitter * rng.uniform(-1.0, 1.0)) *
             size;
    pose.tx = 0.5 * size + config.center_jitter * size * rng.uniform(-1.0, 1.0);
    pose.ty = 0.5 * size + config.center_jitter * size * rng.uniform(-1.0, 1.0);

    RenderResult rendered = render_textured(mesh, texture, pose,
                                            config.image_size, config.image_size);
    const VisibilityMask covered = coverage_mask(rendered.buffers);
    ViewObservation obs;
    obs.image = RgbImage(config.image_size, config.image_size);
    const int pixels = config.image_size * config.image_size;
    for (int p = 0; p < pixels; ++p) {
      const bool on = covered.membership[static_cast<size_t>(p)] != 0;
      for (int c = 0; c < 3; ++c) {
        obs.image.data[static_cast<size_t>(p) * 3 + c] =
            on ? rendered.image.data[static_cast<size_t>(p) * 3 + c]
               : config.background;
      }
    }
    if (v == config.brighten_view) {
      for (double& value : obs.image.data) {
        value = std::min(1.0, value * config.brighten_factor);
      }
    }

    obs.landmarks.resize(scene.model.landmark_count(), 2);
    const Eigen::MatrixX3d landmark_points = landmark_positions(mesh);
    for (int l = 0; l < landmark_points.rows(); ++l) {
      obs.landmarks.row(l) =
          project_vertex(landmark_points.row(l).transpose(), pose).transpose();
    }
    scene.poses.push_back(pose);
    scene.views.push_back(std::move(obs));
  }

  // Landmark noise comes after all pose draws so that the noise flag changes
  // nothing else about the scene.
  if (config.landmark_noise > 0.0) {
    for (auto& obs : scene.views) {
      for (int l = 0; l < obs.landmarks.rows(); ++l) {
        obs.landmarks(l, 0) += config.landmark_noise * rng.normal();
        obs.landmarks(l, 1) += config.landmark_noise * rng.normal();
      }
    }
  }
  return scene;
}

std::string write_synth_scene(const SynthScene& scene,
                              const std::string& out_dir) {
  require(scene.views.size() >= 2, ErrorCode::kInvalidArgument,
          "a scene needs at least two views");
  require(scene.views.size() == scene.poses.size(), ErrorCode::kInvalidArgument,
          "view and pose counts differ");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::kIo, "cannot create " + out_dir);

  SceneFile file;
  file.image_size = scene.image_size;
  file.model = "model.bin";
  scene.model.save((fs::path(out_dir) / file.model).string());
  file.truth_params = "truth_params.json";
  write_params_json(scene.params,
                    (fs::path(out_dir) / file.truth_params).string());

  for (size_t v = 0; v < scene.views.size(); ++v) {
    SceneViewEntry entry;
    entry.image = "view" + std::to_string(v) + ".png";
    entry.landmarks = "view" + std::to_string(v) + "_landmarks.json";
    entry.truth_pose = scene.poses[v];
    write_png(scene.views[v].image, (fs::path(out_dir) / entry.image).string());
    write_landmarks_json(scene.views[v].landmarks,
                         (fs::path(out_dir) / entry.landmarks).string());
    file.views.push_back(std::move(entry));
  }

  const std::string scene_path = (fs::path(out_dir) / "scene.json").string();
  write_scene_file(file, scene_path);
  return scene_path;
}

}  // namespace facefit
