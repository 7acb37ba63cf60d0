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

#ifndef FACEFIT_CORE_LOSSES_HPP_
#define FACEFIT_CORE_LOSSES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "core/camera.hpp"
#include "core/flow.hpp"
#include "core/image.hpp"
#include "core/mask.hpp"
#include "core/model.hpp"

namespace facefit {

struct LossWeights {
  double landmark_supervised = 0.1;
  double pose = 10.0;
  double coefficients = 1.0;
  double regularization = 1.0;
  double landmark = 1.0;
  double photometric = 10.0;
  double alignment = 0.1;

  void validate() const;
};

// Gradient container over the active parameters: stacked shape coefficients
// (identity then expression) and one 6-vector per view pose.
struct ParamGrad {
  Eigen::VectorXd shape;
  std::vector<Eigen::Matrix<double, 6, 1>> poses;

  static ParamGrad zeros(int shape_dims, int view_count);
  void accumulate(const ParamGrad& other, double scale);
};

struct LossReport {
  double landmark = 0.0;
  double pose = 0.0;
  double coefficients = 0.0;
  double regularization = 0.0;
  double photometric = 0.0;
  double alignment = 0.0;
  // Sum of the pairwise warp-residual energies behind d_alignment.
  double alignment_residual = 0.0;
  double total = 0.0;
  bool empty_union = false;
  ParamGrad d_landmark, d_pose, d_coefficients, d_regularization,
      d_photometric, d_alignment, d_total;
};

// Scalar summary of a report as a compact JSON object.
std::string loss_report_json(const LossReport& report);

inline double image_diagonal(int width, int height) {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

// Mean squared projected-landmark distance, normalized by the squared image
// diagonal. d_vertices rows follow the topology landmark order.
struct LandmarkLoss {
  double value = 0.0;
  Eigen::MatrixX3d d_vertices;
  Eigen::Matrix<double, 6, 1> d_pose = Eigen::Matrix<double, 6, 1>::Zero();
};
LandmarkLoss landmark_loss(const Mesh& mesh, const CameraPose& pose,
                           const Eigen::MatrixX2d& observed,
                           double image_diagonal);

// Mean squared parameter differences against ground truth; pose entries are
// rescaled first (angles by pi, focal and translation by the diagonal).
struct SupervisionLosses {
  double pose_value = 0.0;
  double coeff_value = 0.0;
  std::vector<Eigen::Matrix<double, 6, 1>> d_poses;
  Eigen::VectorXd d_coeffs;
};
SupervisionLosses param_supervision_losses(
    const ShapeParams& pred, const ShapeParams& truth,
    const std::vector<CameraPose>& pred_poses,
    const std::vector<CameraPose>& truth_poses, double image_diagonal);

// Sum of squared sigma-scaled coefficients.
struct RegLoss {
  double value = 0.0;
  Eigen::VectorXd d_coeffs;
};
RegLoss reg_loss(const ShapeParams& params, const MorphableModel& model);

// Squared color difference over the union of the two masks; mean over union
// pixels when normalize is set. The gradient treats the masks as constants.
struct PixelLoss {
  double value = 0.0;
  std::vector<double> d_rendered;
  size_t region_count = 0;
  bool empty_union = false;
};
PixelLoss photometric_loss(const RgbImage& observed, const RgbImage& rendered,
                           const VisibilityMask& mask_obs,
                           const VisibilityMask& mask_rend,
                           bool normalize = true);

// Bi-directional flow magnitude between the background-filled images over
// the mask union. The value uses the estimated (or caller-provided) fields;
// the gradient holds them fixed and differentiates the warped color
// residuals, splatting through the backward warp of the rendered image.
struct AlignmentLoss {
  double value = 0.0;
  std::vector<double> d_rendered;
  // Mean squared warped-color residual in both flow directions with the
  // current fields held fixed; d_rendered is its exact derivative, so finite
  // differences of this scalar validate the gradient chain.
  double residual_energy = 0.0;
  size_t region_count = 0;
  bool empty_union = false;
  FlowField flow_to_rendered;
  FlowField flow_to_observed;
};
AlignmentLoss alignment_loss(const RgbImage& observed, const RgbImage& rendered,
                             const VisibilityMask& mask_obs,
                             const VisibilityMask& mask_rend,
                             uint64_t pattern_seed,
                             const FlowConfig& flow_config = {},
                             bool normalize = true,
                             const FlowField* fixed_to_rendered = nullptr,
                             const FlowField* fixed_to_observed = nullptr);

struct ViewObservation {
  RgbImage image;
  Eigen::MatrixX2d landmarks;
};

struct SelfSupConfig {
  LossWeights weights;
  FlowConfig flow;
  uint64_t pattern_seed = 0;
  bool normalize = true;
  int center_view = 1;
  GuidedFilterConfig mask_filter;
  // Cached masks are rebuilt once the median projected-landmark displacement
  // since their construction exceeds this many pixels.
  double mask_rebuild_px = 0.5;
};

// Flows and masks kept between evaluations so re-estimation can be
// amortized across optimizer iterations.
struct SelfSupCache {
  struct PairFlows {
    FlowField to_rendered;
    FlowField to_observed;
  };
  struct PairMasks {
    bool valid = false;
    CutSide side = CutSide::kNone;
    VisibilityMask rendered;
    VisibilityMask observed;
    Eigen::MatrixX2d landmarks_dst;  // projected landmarks at build time
  };
  std::vector<PairFlows> flows;
  std::vector<PairMasks> masks;
};

// Self-supervised objective over directed view pairs: every side view is
// cross-projected into the center view and the center view into every side
// view. Landmark terms are summed over all views, photometric and alignment
// terms over all pairs. Zero-weight terms are skipped and reported as zero;
// with both pair terms disabled no cross projection runs at all.
LossReport selfsup_total(const std::vector<ViewObservation>& views,
                         const MorphableModel& model, const ShapeParams& params,
                         const std::vector<CameraPose>& poses,
                         const SelfSupConfig& config,
                         SelfSupCache* cache = nullptr,
                         bool refresh_flows = true);

// Supervised objective: landmark, pose, coefficient, and regularization
// terms against a known ground truth.
LossReport supervised_total(const MorphableModel& model,
                            const ShapeParams& pred, const ShapeParams& truth,
                            const std::vector<CameraPose>& pred_poses,
                            const std::vector<CameraPose>& truth_poses,
                            const std::vector<Eigen::MatrixX2d>& landmarks,
                            double image_diag, const LossWeights& weights);

}  // namespace facefit

#endif  // FACEFIT_CORE_LOSSES_HPP_
