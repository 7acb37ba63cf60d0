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

#include "core/mask.hpp"

#include <algorithm>
#include <cmath>

#include "core/rng.hpp"

namespace facefit {

size_t VisibilityMask::count() const {
  size_t n = 0;
  for (uint8_t m : membership) n += m != 0;
  return n;
}

VisibilityMask coverage_mask(const RasterBuffers& buffers) {
  VisibilityMask mask(buffers.width, buffers.height);
  for (size_t i = 0; i < mask.membership.size(); ++i) {
    mask.membership[i] =
        buffers.tri_id[i] != RasterBuffers::kBackground ? 255 : 0;
  }
  return mask;
}

VisibilityMask mask_union(const VisibilityMask& a, const VisibilityMask& b) {
  require(a.same_size(b), ErrorCode::kDimensionMismatch, "mask size mismatch");
  VisibilityMask out = a;
  for (size_t i = 0; i < out.membership.size(); ++i) {
    out.membership[i] = (a.membership[i] || b.membership[i]) ? 255 : 0;
  }
  return out;
}

VisibilityMask mask_intersection(const VisibilityMask& a,
                                 const VisibilityMask& b) {
  require(a.same_size(b), ErrorCode::kDimensionMismatch, "mask size mismatch");
  VisibilityMask out = a;
  for (size_t i = 0; i < out.membership.size(); ++i) {
    out.membership[i] = (a.membership[i] && b.membership[i]) ? 255 : 0;
  }
  return out;
}

double mask_iou(const VisibilityMask& a, const VisibilityMask& b) {
  require(a.same_size(b), ErrorCode::kDimensionMismatch, "mask size mismatch");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.membership.size(); ++i) {
    const bool pa = a.membership[i] != 0;
    const bool pb = b.membership[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

void write_mask_png(const VisibilityMask& mask, const std::string& path) {
  write_gray_png(mask.membership, mask.width, mask.height, path);
}

VisibilityMask read_mask_png(const std::string& path) {
  VisibilityMask mask;
  mask.membership = read_gray_png(path, &mask.width, &mask.height);
  for (auto& m : mask.membership) m = m >= 128 ? 255 : 0;
  return mask;
}

void cut_mask(VisibilityMask* mask, const Eigen::Vector2d& brow,
              const Eigen::Vector2d& nose, CutSide side) {
  if (side == CutSide::kNone) return;
  const Eigen::Vector2d& top = brow.y() <= nose.y() ? brow : nose;
  const Eigen::Vector2d& bot = brow.y() <= nose.y() ? nose : brow;
  for (int y = 0; y < mask->height; ++y) {
    const double cy = y + 0.5;
    double boundary_x;
    if (cy <= top.y() || top.y() == bot.y()) {
      boundary_x = top.x();
    } else if (cy >= bot.y()) {
      boundary_x = bot.x();
    } else {
      const double s = (cy - top.y()) / (bot.y() - top.y());
      boundary_x = top.x() + s * (bot.x() - top.x());
    }
    for (int x = 0; x < mask->width; ++x) {
      const double cx = x + 0.5;
      const bool removed = side == CutSide::kLeft ? cx < boundary_x
                                                  : cx > boundary_x;
      if (removed) mask->membership[mask->index(x, y)] = 0;
    }
  }
}

namespace {

Eigen::Vector2d projected_cut_landmark(const Mesh& shape,
                                       const CameraPose& pose, int which) {
  const auto& topo = *shape.topology;
  require(which >= 0 && which < static_cast<int>(topo.landmarks.size()),
          ErrorCode::kInvalidArgument, "cut landmark not available");
  const int32_t v = topo.landmarks[which];
  return project_vertex(shape.vertices.row(v).transpose(), pose);
}

int cut_brow_anchor(const MeshTopology& topo, CutSide side) {
  const int which = side == CutSide::kLeft ? topo.left_brow : topo.right_brow;
  require(which >= 0, ErrorCode::kInvalidArgument,
          "topology lacks a brow cut anchor");
  return which;
}

}  // namespace

VisibilityMask rendered_visibility_mask(const Mesh& shape,
                                        const CameraPose& pose_dst,
                                        CutSide side, int width, int height) {
  VisibilityMask mask =
      coverage_mask(rasterize(shape, pose_dst, width, height));
  mask.origin = MaskOrigin::kRendered;
  if (side != CutSide::kNone) {
    const auto& topo = *shape.topology;
    require(topo.nose_tip >= 0, ErrorCode::kInvalidArgument,
            "topology lacks a nose-tip cut anchor");
    const Eigen::Vector2d brow = projected_cut_landmark(
        shape, pose_dst, cut_brow_anchor(topo, side));
    const Eigen::Vector2d nose =
        projected_cut_landmark(shape, pose_dst, topo.nose_tip);
    cut_mask(&mask, brow, nose, side);
  }
  return mask;
}

namespace {

// Box mean with border-clipped windows, via a summed-area table.
GrayImage box_mean(const GrayImage& img, int radius) {
  const int w = img.width, h = img.height;
  std::vector<double> sat(static_cast<size_t>(w + 1) * (h + 1), 0.0);
  const auto at = [w](std::vector<double>& s, int x, int y) -> double& {
    return s[static_cast<size_t>(y) * (w + 1) + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      at(sat, x + 1, y + 1) = img.at(x, y) + at(sat, x, y + 1) +
                              at(sat, x + 1, y) - at(sat, x, y);
    }
  }
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h - 1, y + radius);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w - 1, x + radius);
      const double sum = at(sat, x1 + 1, y1 + 1) - at(sat, x0, y1 + 1) -
                         at(sat, x1 + 1, y0) + at(sat, x0, y0);
      out.at(x, y) = sum / ((x1 - x0 + 1) * (y1 - y0 + 1));
    }
  }
  return out;
}

GrayImage multiply(const GrayImage& a, const GrayImage& b) {
  GrayImage out(a.width, a.height);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace

GrayImage guided_filter(const GrayImage& input, const GrayImage& guidance,
                        const GuidedFilterConfig& config) {
  require(input.width == guidance.width && input.height == guidance.height,
          ErrorCode::kDimensionMismatch, "guidance size mismatch");
  require(config.radius >= 1 && config.epsilon > 0.0,
          ErrorCode::kInvalidArgument, "bad guided filter settings");
  const auto [lo, hi] =
      std::minmax_element(guidance.data.begin(), guidance.data.end());
  if (*hi - *lo < 1e-12) return input;

  const GrayImage mean_i = box_mean(guidance, config.radius);
  const GrayImage mean_p = box_mean(input, config.radius);
  const GrayImage corr_ii = box_mean(multiply(guidance, guidance), config.radius);
  const GrayImage corr_ip = box_mean(multiply(guidance, input), config.radius);
  GrayImage a(input.width, input.height);
  GrayImage b(input.width, input.height);
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double var_i = corr_ii.data[i] - mean_i.data[i] * mean_i.data[i];
    const double cov_ip = corr_ip.data[i] - mean_i.data[i] * mean_p.data[i];
    a.data[i] = cov_ip / (var_i + config.epsilon);
    b.data[i] = mean_p.data[i] - a.data[i] * mean_i.data[i];
  }
  const GrayImage mean_a = box_mean(a, config.radius);
  const GrayImage mean_b = box_mean(b, config.radius);
  GrayImage out(input.width, input.height);
  for (size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = mean_a.data[i] * guidance.data[i] + mean_b.data[i];
  }
  return out;
}

VisibilityMask observed_visibility_mask(const RgbImage& image,
                                        const VisibilityMask& sampling_coverage,
                                        const Eigen::MatrixX2d& landmarks_2d,
                                        const MeshTopology& topology,
                                        CutSide side,
                                        const GuidedFilterConfig& config) {
  require(sampling_coverage.width == image.width &&
              sampling_coverage.height == image.height,
          ErrorCode::kDimensionMismatch, "coverage size mismatch");
  require(landmarks_2d.rows() == static_cast<Eigen::Index>(
                                     topology.landmarks.size()),
          ErrorCode::kDimensionMismatch, "landmark count mismatch");
  GrayImage soft(image.width, image.height);
  for (size_t i = 0; i < soft.data.size(); ++i) {
    soft.data[i] = sampling_coverage.membership[i] != 0 ? 1.0 : 0.0;
  }
  const GrayImage refined = guided_filter(soft, to_gray(image), config);
  VisibilityMask mask(image.width, image.height);
  mask.origin = MaskOrigin::kObserved;
  for (size_t i = 0; i < mask.membership.size(); ++i) {
    mask.membership[i] = refined.data[i] > 0.5 ? 255 : 0;
  }
  if (side != CutSide::kNone) {
    require(topology.nose_tip >= 0, ErrorCode::kInvalidArgument,
            "topology lacks a nose-tip cut anchor");
    const int brow = cut_brow_anchor(topology, side);
    cut_mask(&mask, landmarks_2d.row(brow).transpose(),
             landmarks_2d.row(topology.nose_tip).transpose(), side);
  }
  return mask;
}

RgbImage fill_background(const RgbImage& image, const VisibilityMask& mask,
                         uint64_t pattern_seed) {
  require(mask.width == image.width && mask.height == image.height,
          ErrorCode::kDimensionMismatch, "mask size mismatch");
  RgbImage out = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (mask.at(x, y)) continue;
      const bool check = ((x / 8) + (y / 8)) % 2 == 0;
      const double base = check ? 0.65 : 0.35;
      const double noise =
          0.3 * (hash_unit(x, y, pattern_seed) - 0.5);
      const double v = clamp01(base + noise);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = v;
    }
  }
  return out;
}

}  // namespace facefit
