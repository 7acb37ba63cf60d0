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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <tuple>

namespace facefit {
namespace {

// Per-entry scales of the normalized parameter vector
// [coefficients; pose0; pose1; ...]: raw = normalized * scale.
Eigen::VectorXd normalization_scale(const MorphableModel& model,
                                    const std::vector<ViewObservation>& views) {
  const int dims = model.id_dims() + model.exp_dims();
  Eigen::VectorXd scale(dims + 6 * static_cast<int>(views.size()));
  scale.head(model.id_dims()) = model.id_sigma();
  scale.segment(model.id_dims(), model.exp_dims()) = model.exp_sigma();
  for (size_t v = 0; v < views.size(); ++v) {
    const double diag =
        image_diagonal(views[v].image.width, views[v].image.height);
    scale.segment<6>(dims + 6 * static_cast<int>(v)) << diag, 1.0, 1.0, 1.0,
        diag, diag;
  }
  return scale;
}

Eigen::VectorXd pack_raw(const ShapeParams& params,
                         const std::vector<CameraPose>& poses) {
  const int dims = static_cast<int>(params.id.size() + params.exp.size());
  Eigen::VectorXd raw(dims + 6 * static_cast<int>(poses.size()));
  raw.head(params.id.size()) = params.id;
  raw.segment(params.id.size(), params.exp.size()) = params.exp;
  for (size_t v = 0; v < poses.size(); ++v) {
    raw.segment<6>(dims + 6 * static_cast<int>(v)) = poses[v].as_vector();
  }
  return raw;
}

void unpack_raw(const Eigen::VectorXd& raw, const MorphableModel& model,
                ShapeParams* params, std::vector<CameraPose>* poses) {
  const int dims = model.id_dims() + model.exp_dims();
  params->id = raw.head(model.id_dims());
  params->exp = raw.segment(model.id_dims(), model.exp_dims());
  for (size_t v = 0; v < poses->size(); ++v) {
    (*poses)[v] = CameraPose::from_vector(
        raw.segment<6>(dims + 6 * static_cast<int>(v)));
  }
}

Eigen::VectorXd pack_gradient(const ParamGrad& grad) {
  const int dims = static_cast<int>(grad.shape.size());
  Eigen::VectorXd g(dims + 6 * static_cast<int>(grad.poses.size()));
  g.head(dims) = grad.shape;
  for (size_t v = 0; v < grad.poses.size(); ++v) {
    g.segment<6>(dims + 6 * static_cast<int>(v)) = grad.poses[v];
  }
  return g;
}

// One Adam update over the normalized parameter vector; `raw` is modified
// in place.
void adam_step(const Eigen::VectorXd& grad_norm, double learning_rate,
               const FitConfig& config, const Eigen::VectorXd& scale,
               FitState* state, Eigen::VectorXd* raw) {
  if (state->moment1.size() != grad_norm.size()) {
    state->moment1 = Eigen::VectorXd::Zero(grad_norm.size());
    state->moment2 = Eigen::VectorXd::Zero(grad_norm.size());
    state->adam_steps = 0;
  }
  ++state->adam_steps;
  state->moment1 =
      config.beta1 * state->moment1 + (1.0 - config.beta1) * grad_norm;
  state->moment2 = config.beta2 * state->moment2 +
                   (1.0 - config.beta2) * grad_norm.cwiseProduct(grad_norm);
  const double c1 = 1.0 - std::pow(config.beta1, state->adam_steps);
  const double c2 = 1.0 - std::pow(config.beta2, state->adam_steps);
  const Eigen::VectorXd step =
      (state->moment1 / c1).cwiseQuotient(
          ((state->moment2 / c2).cwiseSqrt().array() + config.adam_epsilon)
              .matrix());
  *raw -= learning_rate * step.cwiseProduct(scale);
}

struct Evaluation {
  double value = 0.0;
  ParamGrad grad;
};

// Landmark plus regularization objective used by the warmup stage.
Evaluation landmark_objective(const std::vector<ViewObservation>& views,
                              const MorphableModel& model,
                              const ShapeParams& params,
                              const std::vector<CameraPose>& poses,
                              const LossWeights& weights) {
  Evaluation out;
  out.grad = ParamGrad::zeros(model.id_dims() + model.exp_dims(),
                              static_cast<int>(views.size()));
  const Mesh mesh = assemble_shape(model, params);
  for (size_t v = 0; v < views.size(); ++v) {
    const double diag =
        image_diagonal(views[v].image.width, views[v].image.height);
    const LandmarkLoss lm =
        landmark_loss(mesh, poses[v], views[v].landmarks, diag);
    out.value += weights.landmark * lm.value;
    out.grad.shape += weights.landmark *
                      coefficient_gradient(model, model.topology()->landmarks,
                                           lm.d_vertices);
    out.grad.poses[v] += weights.landmark * lm.d_pose;
  }
  const RegLoss reg = reg_loss(params, model);
  out.value += weights.regularization * reg.value;
  out.grad.shape += weights.regularization * reg.d_coeffs;
  return out;
}

void record_smoothed_increases(FitState* state) {
  const int window = 10;
  const int n = static_cast<int>(state->history.size());
  state->smoothed_increases = 0;
  double previous = 0.0;
  bool have_previous = false;
  for (int i = window - 1; i < n; ++i) {
    double sum = 0.0;
    for (int j = i - window + 1; j <= i; ++j) sum += state->history[j];
    const double avg = sum / window;
    if (have_previous &&
        avg > previous + 1e-12 * std::max(1.0, std::abs(previous))) {
      ++state->smoothed_increases;
    }
    previous = avg;
    have_previous = true;
  }
}

bool relative_change_below(double current, double previous, double tolerance) {
  return std::abs(current - previous) <=
         tolerance * std::max(std::abs(previous), 1e-12);
}

void check_views(const std::vector<ViewObservation>& views,
                 const MorphableModel& model) {
  require(views.size() >= 2, ErrorCode::kInvalidArgument,
          "at least two views required");
  for (const auto& view : views) {
    require(view.landmarks.rows() == model.landmark_count(),
            ErrorCode::kInvalidArgument,
            "landmark count must match the model");
  }
}

}  // namespace

void FitConfig::validate() const {
  require(warmup_iterations >= 0 && main_iterations >= 0,
          ErrorCode::kInvalidArgument, "iteration counts must be non-negative");
  require(tolerance > 0.0, ErrorCode::kInvalidArgument,
          "tolerance must be positive");
  require(learning_rate > 0.0 && warmup_learning_rate > 0.0,
          ErrorCode::kInvalidArgument, "learning rates must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          ErrorCode::kInvalidArgument, "decay constants must lie in [0, 1)");
  require(adam_epsilon > 0.0, ErrorCode::kInvalidArgument,
          "adam epsilon must be positive");
  require(flow_every >= 1, ErrorCode::kInvalidArgument,
          "flow interval must be at least 1");
  require(mask_rebuild_px >= 0.0, ErrorCode::kInvalidArgument,
          "mask rebuild threshold must be non-negative");
  require(center_view >= 0, ErrorCode::kInvalidArgument,
          "center view must be non-negative");
  weights.validate();
  flow.validate();
}

CameraPose procrustes_pose(const Eigen::MatrixX3d& shape_landmarks,
                           const Eigen::MatrixX2d& observed) {
  const int count = static_cast<int>(shape_landmarks.rows());
  require(count >= 3, ErrorCode::kInvalidArgument,
          "at least three landmarks required");
  require(observed.rows() == count, ErrorCode::kInvalidArgument,
          "landmark counts must match");

  const Eigen::RowVector3d shape_mean = shape_landmarks.colwise().mean();
  const Eigen::RowVector2d obs_mean = observed.colwise().mean();
  const Eigen::MatrixX3d centered_shape =
      shape_landmarks.rowwise() - shape_mean;
  const Eigen::MatrixX2d centered_obs = observed.rowwise() - obs_mean;

  const Eigen::Matrix3d scatter = centered_shape.transpose() * centered_shape;
  const Eigen::Matrix<double, 2, 3> cross =
      centered_obs.transpose() * centered_shape;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  // Collinear or planar sets leave the out-of-subspace pose unobservable.
  require(evals[2] > 0.0 && evals[0] > 1e-10 * evals[2],
          ErrorCode::kDegenerate, "degenerate landmark geometry");

  const Eigen::Matrix3d scatter_inv = eig.eigenvectors() *
                                      evals.cwiseInverse().asDiagonal() *
                                      eig.eigenvectors().transpose();
  const Eigen::Matrix<double, 2, 3> affine = cross * scatter_inv;

  Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(
      affine, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double f = 0.5 * (svd.singularValues()[0] + svd.singularValues()[1]);
  require(f > 1e-12, ErrorCode::kDegenerate,
          "landmark projection collapses to a point");

  Eigen::Matrix3d rotation;
  rotation.topRows<2>() =
      svd.matrixU() * svd.matrixV().leftCols<2>().transpose();
  rotation.row(2) =
      rotation.row(0).cross(rotation.row(1));
  const Eigen::Vector3d angles = euler_from_rotation(rotation);

  const Eigen::Vector3d rotated_mean = rotation * shape_mean.transpose();
  CameraPose pose;
  pose.f = f;
  pose.alpha = angles[0];
  pose.beta = angles[1];
  pose.gamma = angles[2];
  pose.tx = obs_mean[0] - f * rotated_mean[0];
  pose.ty = obs_mean[1] - f * rotated_mean[1];
  return pose;
}

FitState warmup_landmark_fit(const std::vector<ViewObservation>& views,
                             const MorphableModel& model,
                             const FitConfig& config) {
  config.validate();
  check_views(views, model);

  FitState state;
  state.params = ShapeParams::zeros(model.id_dims(), model.exp_dims());
  const Mesh mean_mesh = assemble_shape(model, state.params);
  const Eigen::MatrixX3d mean_landmarks = landmark_positions(mean_mesh);
  for (const auto& view : views) {
    state.poses.push_back(procrustes_pose(mean_landmarks, view.landmarks));
  }
  if (config.warmup_iterations == 0) return state;

  const Eigen::VectorXd scale = normalization_scale(model, views);
  Eigen::VectorXd raw = pack_raw(state.params, state.poses);

  double best_value = 0.0;
  Eigen::VectorXd best_raw = raw;
  bool have_best = false;
  for (int i = 0; i < config.warmup_iterations; ++i) {
    const Evaluation eval = landmark_objective(views, model, state.params,
                                               state.poses, config.weights);
    if (!std::isfinite(eval.value)) {
      state.diverged = true;
      break;
    }
    if (!have_best || eval.value < best_value) {
      best_value = eval.value;
      best_raw = raw;
      have_best = true;
    }
    state.history.push_back(eval.value);
    ++state.iterations;
    if (state.history.size() >= 2 &&
        relative_change_below(eval.value,
                              state.history[state.history.size() - 2],
                              config.tolerance)) {
      state.converged = true;
      break;
    }
    const Eigen::VectorXd grad_norm =
        pack_gradient(eval.grad).cwiseProduct(scale);
    adam_step(grad_norm, config.warmup_learning_rate, config, scale, &state,
              &raw);
    unpack_raw(raw, model, &state.params, &state.poses);
  }

  const Evaluation last = landmark_objective(views, model, state.params,
                                             state.poses, config.weights);
  if (!have_best || (std::isfinite(last.value) && last.value < best_value)) {
    best_raw = raw;
  }
  unpack_raw(best_raw, model, &state.params, &state.poses);
  record_smoothed_increases(&state);
  return state;
}

FitOutcome fit_multiview(const std::vector<ViewObservation>& views,
                         const MorphableModel& model, const FitConfig& config,
                         const FitState* start) {
  config.validate();
  check_views(views, model);
  require(config.center_view < static_cast<int>(views.size()),
          ErrorCode::kInvalidArgument, "center view index out of range");

  FitState state;
  if (start != nullptr) {
    require(start->poses.size() == views.size(), ErrorCode::kInvalidArgument,
            "warm start must carry one pose per view");
    require(start->params.id.size() == model.id_dims() &&
                start->params.exp.size() == model.exp_dims(),
            ErrorCode::kInvalidArgument,
            "warm start dimensions must match the model");
    state.params = start->params;
    state.poses = start->poses;
  } else {
    FitState warm = warmup_landmark_fit(views, model, config);
    state.params = std::move(warm.params);
    state.poses = std::move(warm.poses);
  }

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

  SelfSupCache cache;
  auto evaluate = [&](const ShapeParams& params,
                      const std::vector<CameraPose>& poses,
                      bool refresh) -> std::pair<LossReport, double> {
    LossReport report =
        selfsup_total(views, model, params, poses, ss, &cache, refresh);
    const double objective = report.total;
    return {std::move(report), objective};
  };

  const Eigen::VectorXd scale = normalization_scale(model, views);
  Eigen::VectorXd raw = pack_raw(state.params, state.poses);

  ShapeParams best_params = state.params;
  std::vector<CameraPose> best_poses = state.poses;
  double best_objective = 0.0;
  LossReport best_report;
  bool have_best = false;
  bool last_eval_fresh = false;

  bool stepped = false;
  for (int i = 0; i < config.main_iterations; ++i) {
    const bool refresh = (i % config.flow_every) == 0;
    LossReport report;
    double objective = 0.0;
    try {
      std::tie(report, objective) =
          evaluate(state.params, state.poses, refresh);
    } catch (const Error&) {
      // A parameter update left the invalid-pose region; before any step the
      // inputs themselves are at fault.
      if (!stepped) throw;
      state.diverged = true;
      break;
    }
    last_eval_fresh = refresh;
    if (!std::isfinite(objective)) {
      state.diverged = true;
      break;
    }
    if (refresh && (!have_best || objective < best_objective)) {
      best_objective = objective;
      best_params = state.params;
      best_poses = state.poses;
      best_report = report;
      have_best = true;
    }
    state.history.push_back(objective);
    ++state.iterations;
    if (state.history.size() >= 2 &&
        relative_change_below(objective,
                              state.history[state.history.size() - 2],
                              config.tolerance)) {
      state.converged = true;
      break;
    }

    const Eigen::VectorXd grad_norm =
        pack_gradient(report.d_total).cwiseProduct(scale);
    adam_step(grad_norm, config.learning_rate, config, scale, &state, &raw);
    if (!raw.allFinite()) {
      state.diverged = true;
      break;
    }
    unpack_raw(raw, model, &state.params, &state.poses);
    stepped = true;
    last_eval_fresh = false;
  }

  if (!state.diverged && !last_eval_fresh) {
    try {
      auto [report, objective] = evaluate(state.params, state.poses, true);
      if (std::isfinite(objective) &&
          (!have_best || objective < best_objective)) {
        best_objective = objective;
        best_params = state.params;
        best_poses = state.poses;
        best_report = report;
        have_best = true;
      }
    } catch (const Error&) {
      if (!stepped) throw;
      state.diverged = true;
    }
  }
  if (!have_best) {
    // Divergence before any fresh evaluation: report the warm start.
    auto [report, objective] = evaluate(best_params, best_poses, true);
    best_report = std::move(report);
    best_objective = objective;
  }

  state.params = best_params;
  state.poses = best_poses;
  record_smoothed_increases(&state);

  FitOutcome outcome;
  outcome.state = std::move(state);
  outcome.report = std::move(best_report);
  outcome.objective = best_objective;
  return outcome;
}

ParamGrad gradient_oracle(const std::vector<ViewObservation>& views,
                          const MorphableModel& model,
                          const ShapeParams& params,
                          const std::vector<CameraPose>& poses,
                          const SelfSupConfig& config, double epsilon) {
  require(epsilon > 0.0, ErrorCode::kInvalidArgument,
          "epsilon must be positive");
  check_views(views, model);

  SelfSupConfig frozen = config;
  frozen.mask_rebuild_px = 1e18;  // masks stay pinned at the base point
  SelfSupCache cache;
  selfsup_total(views, model, params, poses, frozen, &cache, true);

  // With flows and masks frozen, the alignment value no longer depends on
  // the parameters; the probed functional swaps in the warp-residual energy,
  // the exact primitive of the alignment gradient.
  auto probe = [&](const ShapeParams& p, const std::vector<CameraPose>& q) {
    const LossReport r = selfsup_total(views, model, p, q, frozen, &cache,
                                       false);
    return frozen.weights.landmark * r.landmark +
           frozen.weights.photometric * r.photometric +
           frozen.weights.alignment * r.alignment_residual;
  };

  const Eigen::VectorXd scale = normalization_scale(model, views);
  const Eigen::VectorXd base = pack_raw(params, poses);
  const int dims = model.id_dims() + model.exp_dims();

  ParamGrad grad = ParamGrad::zeros(dims, static_cast<int>(views.size()));
  for (int i = 0; i < base.size(); ++i) {
    ShapeParams moved_params = params;
    std::vector<CameraPose> moved_poses = poses;

    Eigen::VectorXd raw = base;
    raw[i] = base[i] + epsilon * scale[i];
    unpack_raw(raw, model, &moved_params, &moved_poses);
    const double high = probe(moved_params, moved_poses);
    raw[i] = base[i] - epsilon * scale[i];
    unpack_raw(raw, model, &moved_params, &moved_poses);
    const double low = probe(moved_params, moved_poses);

    const double derivative = (high - low) / (2.0 * epsilon * scale[i]);
    if (i < dims) {
      grad.shape[i] = derivative;
    } else {
      grad.poses[(i - dims) / 6][(i - dims) % 6] = derivative;
    }
  }
  return grad;
}

}  // namespace facefit
