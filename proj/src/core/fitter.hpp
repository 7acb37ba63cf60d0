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

#ifndef FACEFIT_CORE_FITTER_HPP_
#define FACEFIT_CORE_FITTER_HPP_

#include <vector>

#include "core/camera.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace facefit {

// Which terms of the multi-view objective drive the fit. Landmark and
// coefficient regularization are always active.
enum class FitMode { kLandmarkOnly, kPhotometric, kFull };

struct FitConfig {
  FitMode mode = FitMode::kFull;
  int warmup_iterations = 150;
  int main_iterations = 40;
  // Step sizes apply in normalized parameter space: coefficients divided by
  // their sigmas, focal and translation by the image diagonal, angles raw.
  double learning_rate = 1e-2;
  double warmup_learning_rate = 3e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Converged once the relative objective change between consecutive
  // iterations stays below this.
  double tolerance = 1e-4;
  int flow_every = 3;
  uint64_t seed = 0;  // background-fill pattern seed
  LossWeights weights;
  FlowConfig flow;
  GuidedFilterConfig mask_filter;
  int center_view = 1;
  double mask_rebuild_px = 0.5;

  void validate() const;
};

struct FitState {
  ShapeParams params;
  std::vector<CameraPose> poses;
  int iterations = 0;
  std::vector<double> history;  // objective after each iteration
  // Adam moments over the normalized parameter vector.
  Eigen::VectorXd moment1;
  Eigen::VectorXd moment2;
  int adam_steps = 0;
  // Times the 10-sample smoothed history increased; diagnostic only.
  int smoothed_increases = 0;
  bool converged = false;
  bool diverged = false;
};

struct FitOutcome {
  FitState state;
  LossReport report;  // fresh evaluation at the returned parameters
  double objective = 0.0;
};

// Closed-form weak-perspective pose from 2D landmarks of a known shape:
// centered least-squares affine map, factored into scale, rotation, and
// translation. Collinear landmark sets are rejected.
CameraPose procrustes_pose(const Eigen::MatrixX3d& shape_landmarks,
                           const Eigen::MatrixX2d& observed);

// Initialization stage: per-view Procrustes poses from the mean shape, then
// joint coefficient+pose descent on the landmark and regularization terms.
// Zero warmup iterations returns the Procrustes-only state.
FitState warmup_landmark_fit(const std::vector<ViewObservation>& views,
                             const MorphableModel& model,
                             const FitConfig& config);

// Full multi-view fit. Warm-starts from `start` when given, otherwise runs
// the warmup stage internally. Never returns a point worse than the best
// fresh objective seen, warm start included.
FitOutcome fit_multiview(const std::vector<ViewObservation>& views,
                         const MorphableModel& model, const FitConfig& config,
                         const FitState* start = nullptr);

// Central-difference gradient of the self-supervised objective with flows
// and masks frozen at the base point. The probed functional carries the
// landmark and photometric terms as evaluated plus the warp-residual energy
// in place of the flow magnitude, since that energy is what the alignment
// gradient differentiates once the fields are held fixed. Steps are taken in
// normalized parameter space with half-width `epsilon`; the result is mapped
// back to raw parameter units. Test instrumentation for the analytic
// gradients.
ParamGrad gradient_oracle(const std::vector<ViewObservation>& views,
                          const MorphableModel& model,
                          const ShapeParams& params,
                          const std::vector<CameraPose>& poses,
                          const SelfSupConfig& config, double epsilon);

}  // namespace facefit

#endif  // FACEFIT_CORE_FITTER_HPP_
