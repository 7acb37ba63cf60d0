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

#include "core/losses.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "core/render.hpp"
#include "json.hpp"

namespace facefit {
namespace {

constexpr double kYawTie = 1e-9;

bool finite_nonneg(double w) { return std::isfinite(w) && w >= 0.0; }

// Stacks (id, exp) coefficients into the order used by ParamGrad::shape.
Eigen::VectorXd stack_coeffs(const ShapeParams& p) {
  Eigen::VectorXd s(p.id.size() + p.exp.size());
  s << p.id, p.exp;
  return s;
}

CutSide cut_side_for_pair(const CameraPose& pose_src,
                          const CameraPose& pose_dst) {
  if (pose_src.beta < pose_dst.beta - kYawTie) return CutSide::kLeft;
  if (pose_src.beta > pose_dst.beta + kYawTie) return CutSide::kRight;
  return CutSide::kNone;
}

ParamGrad shape_pose_to_params(const MorphableModel& model,
                               const ShapePoseGrad& g, int view_count,
                               int src_view, int dst_view) {
  ParamGrad out = ParamGrad::zeros(model.id_dims() + model.exp_dims(),
                                   view_count);
  out.shape = coefficient_gradient(model, g.d_vertices);
  out.poses[src_view] += g.d_pose_src;
  out.poses[dst_view] += g.d_pose_dst;
  return out;
}

}  // namespace

void LossWeights::validate() const {
  require(finite_nonneg(landmark_supervised) && finite_nonneg(pose) &&
              finite_nonneg(coefficients) && finite_nonneg(regularization) &&
              finite_nonneg(landmark) && finite_nonneg(photometric) &&
              finite_nonneg(alignment),
          ErrorCode::kInvalidArgument,
          "loss weights must be finite and non-negative");
}

ParamGrad ParamGrad::zeros(int shape_dims, int view_count) {
  require(shape_dims >= 0 && view_count >= 0, ErrorCode::kInvalidArgument,
          "gradient dimensions must be non-negative");
  ParamGrad g;
  g.shape = Eigen::VectorXd::Zero(shape_dims);
  g.poses.assign(static_cast<size_t>(view_count),
                 Eigen::Matrix<double, 6, 1>::Zero());
  return g;
}

void ParamGrad::accumulate(const ParamGrad& other, double scale) {
  require(shape.size() == other.shape.size() &&
              poses.size() == other.poses.size(),
          ErrorCode::kInvalidArgument, "gradient dimensions must match");
  shape += scale * other.shape;
  for (size_t i = 0; i < poses.size(); ++i) {
    poses[i] += scale * other.poses[i];
  }
}

std::string loss_report_json(const LossReport& report) {
  nlohmann::json j;
  j["landmark"] = report.landmark;
  j["pose"] = report.pose;
  j["coefficients"] = report.coefficients;
  j["regularization"] = report.regularization;
  j["photometric"] = report.photometric;
  j["alignment"] = report.alignment;
  j["alignment_residual"] = report.alignment_residual;
  j["total"] = report.total;
  j["empty_union"] = report.empty_union;
  return j.dump(2);
}

LandmarkLoss landmark_loss(const Mesh& mesh, const CameraPose& pose,
                           const Eigen::MatrixX2d& observed,
                           double image_diagonal) {
  require(mesh.topology != nullptr, ErrorCode::kInvalidArgument,
          "mesh must carry a topology");
  const auto& indices = mesh.topology->landmarks;
  const int count = static_cast<int>(indices.size());
  require(count > 0, ErrorCode::kInvalidArgument,
          "topology has no landmarks");
  require(observed.rows() == count, ErrorCode::kInvalidArgument,
          "observed landmark count must match the topology");
  require(image_diagonal > 0.0, ErrorCode::kInvalidArgument,
          "image diagonal must be positive");

  const Eigen::Matrix3d rot =
      rotation_from_euler(pose.alpha, pose.beta, pose.gamma);
  const Eigen::Matrix<double, 3, 2> d_point = pose.f * rot.topRows<2>()
                                                  .transpose();
  const double scale = 1.0 / (count * image_diagonal * image_diagonal);

  LandmarkLoss out;
  out.d_vertices = Eigen::MatrixX3d::Zero(count, 3);
  for (int l = 0; l < count; ++l) {
    const int32_t vi = indices[l];
    require(vi >= 0 && vi < mesh.vertex_count(), ErrorCode::kInvalidArgument,
            "landmark index outside the mesh");
    const Eigen::Vector3d v = mesh.vertices.row(vi).transpose();
    const Eigen::Vector2d diff =
        project_vertex(v, pose) - observed.row(l).transpose();
    out.value += scale * diff.squaredNorm();
    const Eigen::Vector2d d_proj = 2.0 * scale * diff;
    out.d_pose += pose_jacobian(v, pose).transpose() * d_proj;
    out.d_vertices.row(l) = (d_point * d_proj).transpose();
  }
  return out;
}

SupervisionLosses param_supervision_losses(
    const ShapeParams& pred, const ShapeParams& truth,
    const std::vector<CameraPose>& pred_poses,
    const std::vector<CameraPose>& truth_poses, double image_diagonal) {
  require(!pred_poses.empty() && pred_poses.size() == truth_poses.size(),
          ErrorCode::kInvalidArgument, "pose lists must match and be nonempty");
  require(pred.id.size() == truth.id.size() &&
              pred.exp.size() == truth.exp.size(),
          ErrorCode::kInvalidArgument, "coefficient dimensions must match");
  require(image_diagonal > 0.0, ErrorCode::kInvalidArgument,
          "image diagonal must be positive");

  SupervisionLosses out;
  const int views = static_cast<int>(pred_poses.size());
  const double entry_count = 6.0 * views;
  out.d_poses.assign(pred_poses.size(), Eigen::Matrix<double, 6, 1>::Zero());
  for (int v = 0; v < views; ++v) {
    const Eigen::Matrix<double, 6, 1> delta =
        pred_poses[v].as_vector() - truth_poses[v].as_vector();
    Eigen::Matrix<double, 6, 1> norm_delta;
    Eigen::Matrix<double, 6, 1> norm_scale;
    norm_scale << 1.0 / image_diagonal, 1.0 / M_PI, 1.0 / M_PI, 1.0 / M_PI,
        1.0 / image_diagonal, 1.0 / image_diagonal;
    norm_delta = delta.cwiseProduct(norm_scale);
    for (int a = kPoseAlpha; a <= kPoseGamma; ++a) {
      norm_delta[a] = wrap_angle(delta[a]) / M_PI;
    }
    out.pose_value += norm_delta.squaredNorm() / entry_count;
    out.d_poses[v] =
        (2.0 / entry_count) * norm_delta.cwiseProduct(norm_scale);
  }

  const Eigen::VectorXd coeff_delta = stack_coeffs(pred) - stack_coeffs(truth);
  const double dims = static_cast<double>(coeff_delta.size());
  require(dims > 0, ErrorCode::kInvalidArgument,
          "coefficient vectors must be nonempty");
  out.coeff_value = coeff_delta.squaredNorm() / dims;
  out.d_coeffs = (2.0 / dims) * coeff_delta;
  return out;
}

RegLoss reg_loss(const ShapeParams& params, const MorphableModel& model) {
  require(params.id.size() == model.id_dims() &&
              params.exp.size() == model.exp_dims(),
          ErrorCode::kInvalidArgument,
          "coefficient dimensions must match the model");
  const Eigen::VectorXd id_scaled =
      params.id.cwiseQuotient(model.id_sigma());
  const Eigen::VectorXd exp_scaled =
      params.exp.cwiseQuotient(model.exp_sigma());
  RegLoss out;
  out.value = id_scaled.squaredNorm() + exp_scaled.squaredNorm();
  out.d_coeffs.resize(params.id.size() + params.exp.size());
  out.d_coeffs << 2.0 * id_scaled.cwiseQuotient(model.id_sigma()),
      2.0 * exp_scaled.cwiseQuotient(model.exp_sigma());
  return out;
}

PixelLoss photometric_loss(const RgbImage& observed, const RgbImage& rendered,
                           const VisibilityMask& mask_obs,
                           const VisibilityMask& mask_rend, bool normalize) {
  require(observed.same_size(rendered), ErrorCode::kInvalidArgument,
          "image dimensions must match");
  require(mask_obs.same_size(mask_rend) && mask_obs.width == observed.width &&
              mask_obs.height == observed.height,
          ErrorCode::kInvalidArgument, "mask dimensions must match the images");

  PixelLoss out;
  out.d_rendered.assign(observed.data.size(), 0.0);
  for (size_t i = 0; i < mask_obs.membership.size(); ++i) {
    if (mask_obs.membership[i] == 0 && mask_rend.membership[i] == 0) continue;
    ++out.region_count;
  }
  if (out.region_count == 0) {
    out.empty_union = true;
    return out;
  }
  const double inv = normalize ? 1.0 / static_cast<double>(out.region_count)
                               : 1.0;
  for (size_t i = 0; i < mask_obs.membership.size(); ++i) {
    if (mask_obs.membership[i] == 0 && mask_rend.membership[i] == 0) continue;
    for (int c = 0; c < 3; ++c) {
      const double diff = rendered.data[3 * i + c] - observed.data[3 * i + c];
      out.value += inv * diff * diff;
      out.d_rendered[3 * i + c] = 2.0 * inv * diff;
    }
  }
  return out;
}

AlignmentLoss alignment_loss(const RgbImage& observed, const RgbImage& rendered,
                             const VisibilityMask& mask_obs,
                             const VisibilityMask& mask_rend,
                             uint64_t pattern_seed,
                             const FlowConfig& flow_config, bool normalize,
                             const FlowField* fixed_to_rendered,
                             const FlowField* fixed_to_observed) {
  require(observed.same_size(rendered), ErrorCode::kInvalidArgument,
          "image dimensions must match");
  require(mask_obs.same_size(mask_rend) && mask_obs.width == observed.width &&
              mask_obs.height == observed.height,
          ErrorCode::kInvalidArgument, "mask dimensions must match the images");

  AlignmentLoss out;
  out.d_rendered.assign(observed.data.size(), 0.0);

  VisibilityMask region(mask_obs.width, mask_obs.height);
  for (size_t i = 0; i < region.membership.size(); ++i) {
    if (mask_obs.membership[i] != 0 || mask_rend.membership[i] != 0) {
      region.membership[i] = 255;
      ++out.region_count;
    }
  }
  if (out.region_count == 0) {
    out.empty_union = true;
    return out;
  }

  const RgbImage filled_obs = fill_background(observed, mask_obs, pattern_seed);
  const RgbImage filled_rend =
      fill_background(rendered, mask_rend, pattern_seed);

  if (fixed_to_rendered != nullptr) {
    require(fixed_to_rendered->width == observed.width &&
                fixed_to_rendered->height == observed.height,
            ErrorCode::kInvalidArgument, "fixed flow dimensions must match");
    out.flow_to_rendered = *fixed_to_rendered;
  } else {
    out.flow_to_rendered = estimate_flow(filled_obs, filled_rend, flow_config);
  }
  if (fixed_to_observed != nullptr) {
    require(fixed_to_observed->width == observed.width &&
                fixed_to_observed->height == observed.height,
            ErrorCode::kInvalidArgument, "fixed flow dimensions must match");
    out.flow_to_observed = *fixed_to_observed;
  } else {
    out.flow_to_observed = estimate_flow(filled_rend, filled_obs, flow_config);
  }

  const double inv = normalize ? 1.0 / static_cast<double>(out.region_count)
                               : 1.0;
  out.value = inv * (flow_magnitude(out.flow_to_rendered, region) +
                     flow_magnitude(out.flow_to_observed, region));

  // Fixed-flow linearization: the fields are held constant and the gradient
  // follows the two warped color residuals they induce.
  const RgbImage warped_obs = warp_image(filled_obs, out.flow_to_rendered);
  const RgbImage warped_rend = warp_image(filled_rend, out.flow_to_observed);
  const int width = observed.width;
  const int height = observed.height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t i = region.index(x, y);
      if (region.membership[i] == 0) continue;
      if (mask_rend.membership[i] != 0) {
        for (int c = 0; c < 3; ++c) {
          const double r = filled_rend.data[3 * i + c] -
                           warped_obs.data[3 * i + c];
          out.residual_energy += inv * r * r;
          out.d_rendered[3 * i + c] += 2.0 * inv * r;
        }
      }
      const BilinearFootprint fp = bilinear_footprint(
          width, height, x + 0.5 + out.flow_to_observed.u[i],
          y + 0.5 + out.flow_to_observed.v[i]);
      const int tap_x[4] = {fp.x0, fp.x1, fp.x0, fp.x1};
      const int tap_y[4] = {fp.y0, fp.y0, fp.y1, fp.y1};
      const double tap_w[4] = {fp.w00, fp.w10, fp.w01, fp.w11};
      for (int c = 0; c < 3; ++c) {
        const double r = warped_rend.data[3 * i + c] -
                         filled_obs.data[3 * i + c];
        out.residual_energy += inv * r * r;
        for (int t = 0; t < 4; ++t) {
          const size_t ti = region.index(tap_x[t], tap_y[t]);
          if (mask_rend.membership[ti] == 0) continue;
          out.d_rendered[3 * ti + c] += 2.0 * inv * r * tap_w[t];
        }
      }
    }
  }
  return out;
}

LossReport selfsup_total(const std::vector<ViewObservation>& views,
                         const MorphableModel& model, const ShapeParams& params,
                         const std::vector<CameraPose>& poses,
                         const SelfSupConfig& config, SelfSupCache* cache,
                         bool refresh_flows) {
  const int view_count = static_cast<int>(views.size());
  require(view_count >= 2, ErrorCode::kInvalidArgument,
          "self-supervision needs at least two views");
  require(poses.size() == views.size(), ErrorCode::kInvalidArgument,
          "one pose per view required");
  require(config.center_view >= 0 && config.center_view < view_count,
          ErrorCode::kInvalidArgument, "center view index out of range");
  config.weights.validate();

  const int shape_dims = model.id_dims() + model.exp_dims();
  LossReport report;
  report.d_landmark = ParamGrad::zeros(shape_dims, view_count);
  report.d_pose = ParamGrad::zeros(shape_dims, view_count);
  report.d_coefficients = ParamGrad::zeros(shape_dims, view_count);
  report.d_regularization = ParamGrad::zeros(shape_dims, view_count);
  report.d_photometric = ParamGrad::zeros(shape_dims, view_count);
  report.d_alignment = ParamGrad::zeros(shape_dims, view_count);
  report.d_total = ParamGrad::zeros(shape_dims, view_count);

  const Mesh mesh = assemble_shape(model, params);
  const Eigen::MatrixX3d landmark_points = landmark_positions(mesh);
  const auto& topo = *model.topology();

  if (config.weights.landmark > 0.0) {
    for (int v = 0; v < view_count; ++v) {
      const double diag =
          image_diagonal(views[v].image.width, views[v].image.height);
      const LandmarkLoss lm =
          landmark_loss(mesh, poses[v], views[v].landmarks, diag);
      report.landmark += lm.value;
      report.d_landmark.shape +=
          coefficient_gradient(model, topo.landmarks, lm.d_vertices);
      report.d_landmark.poses[v] += lm.d_pose;
    }
  }

  const bool want_photo = config.weights.photometric > 0.0;
  const bool want_align = config.weights.alignment > 0.0;
  std::vector<std::pair<int, int>> pairs;  // (dst, src)
  if (want_photo || want_align) {
    for (int v = 0; v < view_count; ++v) {
      if (v == config.center_view) continue;
      pairs.emplace_back(config.center_view, v);
      pairs.emplace_back(v, config.center_view);
    }
  }
  if (cache != nullptr && cache->flows.size() != pairs.size()) {
    cache->flows.assign(pairs.size(), SelfSupCache::PairFlows{});
    cache->masks.assign(pairs.size(), SelfSupCache::PairMasks{});
  }

  if (!pairs.empty()) {
    require(topo.left_brow >= 0 && topo.right_brow >= 0 && topo.nose_tip >= 0,
            ErrorCode::kInvalidArgument,
            "topology must name the cut anchor landmarks");
  }

  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    const int dst = pairs[pi].first;
    const int src = pairs[pi].second;
    const RgbImage& dst_image = views[dst].image;
    const CrossProjection cp = cross_project(
        views[src].image, mesh, poses[src], poses[dst], dst_image.width,
        dst_image.height);
    const CutSide side = cut_side_for_pair(poses[src], poses[dst]);

    Eigen::MatrixX2d current_dst(landmark_points.rows(), 2);
    for (int l = 0; l < landmark_points.rows(); ++l) {
      current_dst.row(l) =
          project_vertex(landmark_points.row(l).transpose(), poses[dst])
              .transpose();
    }
    bool reuse_masks = false;
    if (cache != nullptr && cache->masks[pi].valid &&
        cache->masks[pi].side == side &&
        cache->masks[pi].rendered.width == dst_image.width &&
        cache->masks[pi].rendered.height == dst_image.height) {
      std::vector<double> moved(landmark_points.rows());
      for (int l = 0; l < landmark_points.rows(); ++l) {
        moved[l] = (current_dst.row(l) - cache->masks[pi].landmarks_dst.row(l))
                       .norm();
      }
      std::nth_element(moved.begin(), moved.begin() + moved.size() / 2,
                       moved.end());
      reuse_masks = moved[moved.size() / 2] <= config.mask_rebuild_px;
    }

    VisibilityMask mask_rend;
    VisibilityMask mask_obs;
    if (reuse_masks) {
      mask_rend = cache->masks[pi].rendered;
      mask_obs = cache->masks[pi].observed;
    } else {
      const VisibilityMask coverage = coverage_mask(cp.buffers);
      mask_rend = coverage;
      if (side != CutSide::kNone) {
        const int32_t brow_row =
            side == CutSide::kLeft ? topo.left_brow : topo.right_brow;
        const Eigen::Vector2d brow = current_dst.row(brow_row).transpose();
        const Eigen::Vector2d nose = current_dst.row(topo.nose_tip).transpose();
        cut_mask(&mask_rend, brow, nose, side);
      }
      mask_obs = observed_visibility_mask(dst_image, coverage,
                                          views[dst].landmarks, topo, side,
                                          config.mask_filter);
      if (cache != nullptr) {
        cache->masks[pi].valid = true;
        cache->masks[pi].side = side;
        cache->masks[pi].rendered = mask_rend;
        cache->masks[pi].observed = mask_obs;
        cache->masks[pi].landmarks_dst = current_dst;
      }
    }

    if (want_photo) {
      const PixelLoss photo = photometric_loss(dst_image, cp.image, mask_obs,
                                               mask_rend, config.normalize);
      report.photometric += photo.value;
      report.empty_union = report.empty_union || photo.empty_union;
      const ShapePoseGrad photo_grad = cross_project_backward(
          cp, views[src].image, mesh, poses[src], poses[dst], photo.d_rendered);
      report.d_photometric.accumulate(
          shape_pose_to_params(model, photo_grad, view_count, src, dst), 1.0);
    }

    if (want_align) {
      const FlowField* fixed_to_rend = nullptr;
      const FlowField* fixed_to_obs = nullptr;
      if (cache != nullptr && !refresh_flows &&
          cache->flows[pi].to_rendered.width == dst_image.width &&
          cache->flows[pi].to_rendered.height == dst_image.height) {
        fixed_to_rend = &cache->flows[pi].to_rendered;
        fixed_to_obs = &cache->flows[pi].to_observed;
      }
      const AlignmentLoss align = alignment_loss(
          dst_image, cp.image, mask_obs, mask_rend, config.pattern_seed,
          config.flow, config.normalize, fixed_to_rend, fixed_to_obs);
      if (cache != nullptr) {
        cache->flows[pi].to_rendered = align.flow_to_rendered;
        cache->flows[pi].to_observed = align.flow_to_observed;
      }
      report.alignment += align.value;
      report.alignment_residual += align.residual_energy;
      report.empty_union = report.empty_union || align.empty_union;
      const ShapePoseGrad align_grad = cross_project_backward(
          cp, views[src].image, mesh, poses[src], poses[dst], align.d_rendered);
      report.d_alignment.accumulate(
          shape_pose_to_params(model, align_grad, view_count, src, dst), 1.0);
    }
  }

  report.total = config.weights.landmark * report.landmark +
                 config.weights.photometric * report.photometric +
                 config.weights.alignment * report.alignment;
  report.d_total.accumulate(report.d_landmark, config.weights.landmark);
  report.d_total.accumulate(report.d_photometric, config.weights.photometric);
  report.d_total.accumulate(report.d_alignment, config.weights.alignment);
  return report;
}

LossReport supervised_total(const MorphableModel& model,
                            const ShapeParams& pred, const ShapeParams& truth,
                            const std::vector<CameraPose>& pred_poses,
                            const std::vector<CameraPose>& truth_poses,
                            const std::vector<Eigen::MatrixX2d>& landmarks,
                            double image_diag, const LossWeights& weights) {
  require(landmarks.size() == pred_poses.size(), ErrorCode::kInvalidArgument,
          "one landmark set per view required");
  weights.validate();

  const int shape_dims = model.id_dims() + model.exp_dims();
  const int view_count = static_cast<int>(pred_poses.size());
  LossReport report;
  report.d_landmark = ParamGrad::zeros(shape_dims, view_count);
  report.d_pose = ParamGrad::zeros(shape_dims, view_count);
  report.d_coefficients = ParamGrad::zeros(shape_dims, view_count);
  report.d_regularization = ParamGrad::zeros(shape_dims, view_count);
  report.d_photometric = ParamGrad::zeros(shape_dims, view_count);
  report.d_alignment = ParamGrad::zeros(shape_dims, view_count);
  report.d_total = ParamGrad::zeros(shape_dims, view_count);

  const Mesh mesh = assemble_shape(model, pred);
  const auto& topo = *model.topology();
  for (int v = 0; v < view_count; ++v) {
    const LandmarkLoss lm =
        landmark_loss(mesh, pred_poses[v], landmarks[v], image_diag);
    report.landmark += lm.value;
    report.d_landmark.shape +=
        coefficient_gradient(model, topo.landmarks, lm.d_vertices);
    report.d_landmark.poses[v] += lm.d_pose;
  }

  const SupervisionLosses sup = param_supervision_losses(
      pred, truth, pred_poses, truth_poses, image_diag);
  report.pose = sup.pose_value;
  report.coefficients = sup.coeff_value;
  for (int v = 0; v < view_count; ++v) {
    report.d_pose.poses[v] = sup.d_poses[v];
  }
  report.d_coefficients.shape = sup.d_coeffs;

  const RegLoss reg = reg_loss(pred, model);
  report.regularization = reg.value;
  report.d_regularization.shape = reg.d_coeffs;

  report.total = weights.landmark_supervised * report.landmark +
                 weights.pose * report.pose +
                 weights.coefficients * report.coefficients +
                 weights.regularization * report.regularization;
  report.d_total.accumulate(report.d_landmark, weights.landmark_supervised);
  report.d_total.accumulate(report.d_pose, weights.pose);
  report.d_total.accumulate(report.d_coefficients, weights.coefficients);
  report.d_total.accumulate(report.d_regularization, weights.regularization);
  return report;
}

}  // namespace facefit
