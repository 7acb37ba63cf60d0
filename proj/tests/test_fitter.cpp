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

#include "core/fitter.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "core/rng.hpp"
#include "doctest.h"
#include "scenes.hpp"
#include "support.hpp"

using namespace facefit;
using namespace facefit::test;

namespace {

double wrap_diff(double a, double b) {
  return std::remainder(a - b, 2.0 * M_PI);
}

void check_pose_close(const CameraPose& got, const CameraPose& want,
                      double f_rel, double angle_abs, double t_abs) {
  CHECK(std::abs(got.f - want.f) <= f_rel * want.f);
  CHECK(std::abs(wrap_diff(got.alpha, want.alpha)) <= angle_abs);
  CHECK(std::abs(wrap_diff(got.beta, want.beta)) <= angle_abs);
  CHECK(std::abs(wrap_diff(got.gamma, want.gamma)) <= angle_abs);
  CHECK(std::abs(got.tx - want.tx) <= t_abs);
  CHECK(std::abs(got.ty - want.ty) <= t_abs);
}

// Views carrying only landmarks (blank images of the right size), as the
// warmup stage never reads pixels.
std::vector<ViewObservation> landmark_views(const Mesh& mesh,
                                            const std::vector<CameraPose>& poses,
                                            int size) {
  std::vector<ViewObservation> views;
  for (const auto& pose : poses) {
    ViewObservation obs;
    obs.image = RgbImage(size, size);
    obs.landmarks = project_landmarks(mesh, pose);
    views.push_back(std::move(obs));
  }
  return views;
}

Eigen::VectorXd scene_scale(const MultiViewScene& scene) {
  const int dims = scene.model.id_dims() + scene.model.exp_dims();
  Eigen::VectorXd scale(dims + 6 * static_cast<int>(scene.views.size()));
  scale.head(scene.model.id_dims()) = scene.model.id_sigma();
  scale.segment(scene.model.id_dims(), scene.model.exp_dims()) =
      scene.model.exp_sigma();
  const double diag = image_diagonal(scene.size, scene.size);
  for (size_t v = 0; v < scene.views.size(); ++v) {
    scale.segment<6>(dims + 6 * static_cast<int>(v)) << diag, 1.0, 1.0, 1.0,
        diag, diag;
  }
  return scale;
}

Eigen::VectorXd flatten(const ParamGrad& grad) {
  const int dims = static_cast<int>(grad.shape.size());
  Eigen::VectorXd out(dims + 6 * static_cast<int>(grad.poses.size()));
  out.head(dims) = grad.shape;
  for (size_t v = 0; v < grad.poses.size(); ++v) {
    out.segment<6>(dims + 6 * static_cast<int>(v)) = grad.poses[v];
  }
  return out;
}

ShapeParams jitter_params(const MultiViewScene& scene, Rng* rng,
                          double sigma_fraction) {
  ShapeParams params = scene.params;
  for (int k = 0; k < params.id.size(); ++k) {
    params.id[k] +=
        rng->truncated_normal(scene.model.id_sigma()[k] * sigma_fraction, 2.0);
  }
  for (int k = 0; k < params.exp.size(); ++k) {
    params.exp[k] +=
        rng->truncated_normal(scene.model.exp_sigma()[k] * sigma_fraction, 2.0);
  }
  return params;
}

std::vector<CameraPose> jitter_poses(const MultiViewScene& scene, Rng* rng,
                                     double f_frac, double angle_abs,
                                     double t_px) {
  std::vector<CameraPose> poses = scene.poses;
  for (auto& pose : poses) {
    pose.f *= 1.0 + rng->uniform(-f_frac, f_frac);
    pose.alpha += rng->uniform(-angle_abs, angle_abs);
    pose.beta += rng->uniform(-angle_abs, angle_abs);
    pose.gamma += rng->uniform(-angle_abs, angle_abs);
    pose.tx += rng->uniform(-t_px, t_px);
    pose.ty += rng->uniform(-t_px, t_px);
  }
  return poses;
}

SelfSupConfig selfsup_config_of(const FitConfig& config) {
  SelfSupConfig ss;
  ss.weights = config.weights;
  if (config.mode == FitMode::kLandmarkOnly) {
    ss.weights.photometric = 0.0;
    ss.weights.alignment = 0.0;
  } else if (config.mode == FitMode::kPhotometric) {
    ss.weights.alignment = 0.0;
  }
  ss.flow = config.flow;
  ss.pattern_seed = config.seed;
  ss.center_view = config.center_view;
  ss.mask_filter = config.mask_filter;
  ss.mask_rebuild_px = config.mask_rebuild_px;
  return ss;
}

double fresh_objective(const MultiViewScene& scene, const ShapeParams& params,
                       const std::vector<CameraPose>& poses,
                       const FitConfig& config) {
  const SelfSupConfig ss = selfsup_config_of(config);
  return selfsup_total(scene.views, scene.model, params, poses, ss).total;
}

}  // namespace

TEST_CASE("fit config validation rejects bad settings") {
  FitConfig config;
  CHECK_NOTHROW(config.validate());
  config.main_iterations = -1;
  CHECK_THROWS_AS(config.validate(), Error);
  config = FitConfig{};
  config.tolerance = 0.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = FitConfig{};
  config.flow_every = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = FitConfig{};
  config.beta1 = 1.0;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("procrustes pose recovers known poses from exact projections") {
  const MorphableModel model = generate_synthetic_model(7, 400, 4, 3);
  const Mesh mesh = assemble_shape(model, ShapeParams::zeros(4, 3));
  const Eigen::MatrixX3d landmarks = landmark_positions(mesh);

  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    CameraPose pose;
    pose.f = rng.uniform(10.0, 80.0);
    pose.alpha = rng.uniform(-0.4, 0.4);
    pose.beta = rng.uniform(-0.9, 0.9);
    pose.gamma = rng.uniform(-0.6, 0.6);
    pose.tx = rng.uniform(20.0, 100.0);
    pose.ty = rng.uniform(20.0, 100.0);

    const Eigen::MatrixX2d observed = project_landmarks(mesh, pose);
    const CameraPose recovered = procrustes_pose(landmarks, observed);
    check_pose_close(recovered, pose, 0.01, 0.02, 0.5);
    check_pose_close(recovered, pose, 1e-9, 1e-9, 1e-7);
  }
}

TEST_CASE("procrustes pose rejects collinear landmarks") {
  Eigen::MatrixX3d line(5, 3);
  for (int i = 0; i < 5; ++i) {
    line.row(i) = Eigen::RowVector3d(1.0, -2.0, 0.5) * double(i);
  }
  Eigen::MatrixX2d observed(5, 2);
  observed.setRandom();
  try {
    procrustes_pose(line, observed);
    FAIL("expected a degeneracy error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
  Eigen::MatrixX3d two(2, 3);
  two.setRandom();
  CHECK_THROWS_AS(procrustes_pose(two, Eigen::MatrixX2d::Zero(2, 2)), Error);
}

TEST_CASE("procrustes pose rejects planar landmark sets") {
  // A single weak-perspective view of a planar set leaves focal length and
  // out-of-plane tilt entangled, so there is no unique pose to return.
  Rng rng(9);
  Eigen::MatrixX3d flat(8, 3);
  for (int i = 0; i < 8; ++i) {
    flat.row(i) =
        Eigen::RowVector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
  }
  CameraPose pose = CameraPose{30.0, 0.2, -0.3, 0.1, 40.0, 44.0};
  Eigen::MatrixX2d observed(8, 2);
  for (int i = 0; i < 8; ++i) {
    observed.row(i) =
        project_vertex(flat.row(i).transpose(), pose).transpose();
  }
  try {
    procrustes_pose(flat, observed);
    FAIL("expected a degeneracy error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerate);
  }
}

TEST_CASE("warmup with zero iterations returns the procrustes start") {
  const MultiViewScene scene = multi_view_scene(11, 64, 420);
  FitConfig config;
  config.warmup_iterations = 0;
  const FitState state =
      warmup_landmark_fit(scene.views, scene.model, config);

  CHECK(state.params.id.isZero());
  CHECK(state.params.exp.isZero());
  CHECK(state.history.empty());
  CHECK(state.iterations == 0);

  const Mesh mean_mesh =
      assemble_shape(scene.model, ShapeParams::zeros(4, 3));
  const Eigen::MatrixX3d mean_landmarks = landmark_positions(mean_mesh);
  for (size_t v = 0; v < scene.views.size(); ++v) {
    const CameraPose direct =
        procrustes_pose(mean_landmarks, scene.views[v].landmarks);
    CHECK(state.poses[v].as_vector() == direct.as_vector());
  }
}

TEST_CASE("warmup recovers poses of mean-shape landmarks") {
  const MorphableModel model = generate_synthetic_model(13, 420, 4, 3);
  const Mesh mesh = assemble_shape(model, ShapeParams::zeros(4, 3));
  std::vector<CameraPose> truth;
  for (const double yaw : {-0.45, 0.05, 0.5}) {
    CameraPose pose = centered_pose(26.0, yaw, 96);
    pose.alpha = 0.1 * yaw;
    pose.gamma = -0.05;
    truth.push_back(pose);
  }
  const std::vector<ViewObservation> views = landmark_views(mesh, truth, 96);

  FitConfig config;
  const FitState state = warmup_landmark_fit(views, model, config);
  CHECK_FALSE(state.diverged);
  for (size_t v = 0; v < truth.size(); ++v) {
    check_pose_close(state.poses[v], truth[v], 0.01, 0.02, 0.5);
  }

  // Landmarks straight off the mean shape keep coefficients near zero.
  CHECK(state.params.id.cwiseQuotient(model.id_sigma()).cwiseAbs().maxCoeff() <
        0.1);
  CHECK(state.params.exp.cwiseQuotient(model.exp_sigma())
            .cwiseAbs()
            .maxCoeff() < 0.1);
  REQUIRE(!state.history.empty());
  // Procrustes already lands at the optimum here, so the whole history sits
  // at numerical zero.
  CHECK(state.history.back() <= state.history.front() + 1e-12);
}

TEST_CASE("warmup drives identical views to identical poses") {
  const MorphableModel model = generate_synthetic_model(17, 420, 4, 3);
  const Mesh mesh = assemble_shape(model, ShapeParams::zeros(4, 3));
  CameraPose pose = centered_pose(25.0, 0.3, 96);
  const std::vector<ViewObservation> views =
      landmark_views(mesh, {pose, pose}, 96);

  FitConfig config;
  config.warmup_iterations = 40;
  const FitState state = warmup_landmark_fit(views, model, config);
  CHECK((state.poses[0].as_vector() - state.poses[1].as_vector())
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("warmup reaches pixel-level landmark fit on a real scene") {
  const MultiViewScene scene = multi_view_scene(23, 96, 420);
  FitConfig config;
  config.warmup_iterations = 120;
  const FitState state =
      warmup_landmark_fit(scene.views, scene.model, config);
  REQUIRE(!state.history.empty());
  CHECK(state.history.back() <= state.history.front() + 1e-12);

  // The regularizer keeps coefficients near the mean, so the warmup fits the
  // ground-truth head mostly through the poses; a few pixels of residual per
  // landmark is the expected plateau.
  const Mesh mesh = assemble_shape(scene.model, state.params);
  const double diag = image_diagonal(scene.size, scene.size);
  for (size_t v = 0; v < scene.views.size(); ++v) {
    const LandmarkLoss lm =
        landmark_loss(mesh, state.poses[v], scene.views[v].landmarks, diag);
    const double rms_px = std::sqrt(lm.value) * diag;
    CHECK(rms_px < 3.0);
    check_pose_close(state.poses[v], scene.poses[v], 0.2, 0.25, 8.0);
  }
}

TEST_CASE("fit is deterministic for identical seeds and inputs") {
  const MultiViewScene scene = multi_view_scene(31, 64, 420);
  FitConfig config;
  config.warmup_iterations = 30;
  config.main_iterations = 4;
  config.flow_every = 2;
  config.seed = 5;

  const FitOutcome a = fit_multiview(scene.views, scene.model, config);
  const FitOutcome b = fit_multiview(scene.views, scene.model, config);

  REQUIRE(a.state.history.size() == b.state.history.size());
  for (size_t i = 0; i < a.state.history.size(); ++i) {
    CHECK(a.state.history[i] == b.state.history[i]);
  }
  CHECK(a.objective == b.objective);
  CHECK(a.state.params.id == b.state.params.id);
  CHECK(a.state.params.exp == b.state.params.exp);
  for (size_t v = 0; v < a.state.poses.size(); ++v) {
    CHECK(a.state.poses[v].as_vector() == b.state.poses[v].as_vector());
  }
}

TEST_CASE("fit never returns a point worse than the warm start") {
  const MultiViewScene scene = multi_view_scene(37, 64, 420);
  FitConfig config;
  config.main_iterations = 5;
  config.learning_rate = 0.25;  // deliberately destructive steps
  config.flow_every = 1;

  FitState start;
  start.params = scene.params;
  start.poses = scene.poses;
  const double start_objective =
      fresh_objective(scene, start.params, start.poses, config);

  const FitOutcome outcome =
      fit_multiview(scene.views, scene.model, config, &start);
  // Oversized steps may wreck the pose mid-run; the keep-best rule still
  // guarantees the returned point is no worse than the warm start.
  CHECK(outcome.objective <= start_objective * (1.0 + 1e-9) + 1e-12);
}

TEST_CASE("fit reduces the objective from a perturbed start") {
  const MultiViewScene scene = multi_view_scene(41, 64, 420);
  Rng rng(41 * 31 + 7);
  FitState start;
  start.params = jitter_params(scene, &rng, 0.3);
  start.poses = jitter_poses(scene, &rng, 0.05, 0.05, 2.0);

  FitConfig config;
  config.main_iterations = 12;
  config.flow_every = 3;
  const double start_objective =
      fresh_objective(scene, start.params, start.poses, config);

  const FitOutcome outcome =
      fit_multiview(scene.views, scene.model, config, &start);
  CHECK_FALSE(outcome.state.diverged);
  CHECK(outcome.state.iterations > 0);
  CHECK(outcome.objective < start_objective);
}

TEST_CASE("landmark-only fit improves on the warmup plateau") {
  const MultiViewScene scene = multi_view_scene(43, 64, 420);
  FitConfig config;
  config.mode = FitMode::kLandmarkOnly;
  config.warmup_iterations = 150;
  config.main_iterations = 200;

  const FitState warm = warmup_landmark_fit(scene.views, scene.model, config);
  const double warm_landmark =
      fresh_objective(scene, warm.params, warm.poses, config);

  const FitOutcome outcome =
      fit_multiview(scene.views, scene.model, config, &warm);
  // With the regularizer gone from the main stage, the coefficients are free
  // to close the residual that the warmup left.
  MESSAGE("warmup landmark ", warm_landmark, " final ",
          outcome.report.landmark, " iterations ", outcome.state.iterations);
  CHECK(outcome.report.landmark < 0.5 * warm_landmark);
  CHECK(outcome.report.landmark < 3e-4);
  CHECK(outcome.report.photometric == 0.0);
  CHECK(outcome.report.alignment == 0.0);
}

TEST_CASE("nan observations abort with the diverged flag set") {
  MultiViewScene scene = multi_view_scene(47, 64, 420);
  scene.views[0].landmarks(0, 0) = std::numeric_limits<double>::quiet_NaN();

  FitConfig config;
  config.mode = FitMode::kLandmarkOnly;
  config.main_iterations = 10;
  FitState start;
  start.params = scene.params;
  start.poses = scene.poses;

  const FitOutcome outcome =
      fit_multiview(scene.views, scene.model, config, &start);
  CHECK(outcome.state.diverged);
  CHECK(outcome.state.iterations == 0);
  CHECK(outcome.state.history.empty());
}

TEST_CASE("gradient oracle matches analytic gradients on stable coordinates") {
  const MultiViewScene scene = multi_view_scene(53, 64, 420);
  Rng rng(53 * 13 + 1);
  const ShapeParams params = jitter_params(scene, &rng, 0.2);
  const std::vector<CameraPose> poses =
      jitter_poses(scene, &rng, 0.03, 0.03, 1.0);

  SelfSupConfig ss;
  const LossReport report =
      selfsup_total(scene.views, scene.model, params, poses, ss);
  // Steps small enough that most coordinates move no pixel across a
  // rasterization or resampling boundary; a crossing shows up as a large
  // disagreement between the two epsilon levels and disqualifies the
  // coordinate.
  const ParamGrad fd1 =
      gradient_oracle(scene.views, scene.model, params, poses, ss, 1e-5);
  const ParamGrad fd2 =
      gradient_oracle(scene.views, scene.model, params, poses, ss, 5e-6);

  const Eigen::VectorXd scale = scene_scale(scene);
  const Eigen::VectorXd analytic =
      flatten(report.d_total).cwiseProduct(scale);
  const Eigen::VectorXd n1 = flatten(fd1).cwiseProduct(scale);
  const Eigen::VectorXd n2 = flatten(fd2).cwiseProduct(scale);

  int stable = 0;
  for (int i = 0; i < analytic.size(); ++i) {
    if (rel_error(n1[i], n2[i], 1e-6) > 1e-4) continue;
    ++stable;
    CHECK(rel_error(analytic[i], n1[i], 1e-6) < 1e-3);
  }
  // Enough coordinates must survive the stability gate to make the
  // comparison meaningful.
  CHECK(stable >= 8);
}

TEST_CASE("oracle translation gradient matches the landmark closed form") {
  const MultiViewScene scene = multi_view_scene(59, 64, 420);
  Rng rng(59 * 13 + 1);
  const ShapeParams params = jitter_params(scene, &rng, 0.2);
  const std::vector<CameraPose> poses =
      jitter_poses(scene, &rng, 0.03, 0.03, 1.0);

  SelfSupConfig ss;
  ss.weights.photometric = 0.0;
  ss.weights.alignment = 0.0;

  const Mesh mesh = assemble_shape(scene.model, params);
  const double diag = image_diagonal(scene.size, scene.size);
  const ParamGrad fd =
      gradient_oracle(scene.views, scene.model, params, poses, ss, 1e-5);

  for (size_t v = 0; v < poses.size(); ++v) {
    const Eigen::MatrixX2d projected = project_landmarks(mesh, poses[v]);
    const Eigen::MatrixX2d residual = projected - scene.views[v].landmarks;
    const double count = static_cast<double>(residual.rows());
    const double closed_x =
        ss.weights.landmark * 2.0 * residual.col(0).sum() / count /
        (diag * diag);
    const double closed_y =
        ss.weights.landmark * 2.0 * residual.col(1).sum() / count /
        (diag * diag);
    CHECK(rel_error(fd.poses[v][kPoseTx], closed_x, 1e-10) < 1e-5);
    CHECK(rel_error(fd.poses[v][kPoseTy], closed_y, 1e-10) < 1e-5);
  }
}

TEST_CASE("oracle error shrinks quadratically as epsilon halves") {
  const MultiViewScene scene = multi_view_scene(61, 64, 420);
  Rng rng(61 * 13 + 1);
  const ShapeParams params = jitter_params(scene, &rng, 0.2);
  std::vector<CameraPose> poses = jitter_poses(scene, &rng, 0.03, 0.1, 1.0);

  SelfSupConfig ss;
  ss.weights.photometric = 0.0;
  ss.weights.alignment = 0.0;

  const LossReport report =
      selfsup_total(scene.views, scene.model, params, poses, ss);
  const ParamGrad fd1 =
      gradient_oracle(scene.views, scene.model, params, poses, ss, 2e-2);
  const ParamGrad fd2 =
      gradient_oracle(scene.views, scene.model, params, poses, ss, 1e-2);

  // The landmark objective is smooth in the angles, so the central
  // difference error drops by about 4x when epsilon halves.
  double err1 = 0.0;
  double err2 = 0.0;
  for (size_t v = 0; v < poses.size(); ++v) {
    for (int a = kPoseAlpha; a <= kPoseGamma; ++a) {
      err1 += std::abs(fd1.poses[v][a] - report.d_total.poses[v][a]);
      err2 += std::abs(fd2.poses[v][a] - report.d_total.poses[v][a]);
    }
  }
  REQUIRE(err1 > 1e-10);
  CHECK(err2 <= 0.35 * err1);
}
