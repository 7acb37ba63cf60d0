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

#ifndef FACEFIT_CORE_EVALMETRIC_HPP_
#define FACEFIT_CORE_EVALMETRIC_HPP_

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/model.hpp"

namespace facefit {

struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  Eigen::MatrixX3d apply_all(const Eigen::MatrixX3d& points) const;
  Mesh apply_mesh(const Mesh& mesh) const;
};

struct ErrorStats {
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
};

// Percentiles use the nearest-rank rule on the sorted error vector.
ErrorStats compute_error_stats(const Eigen::VectorXd& errors);

struct ErrorMap {
  std::vector<int32_t> vertex_ids;  // measured predicted vertices
  Eigen::VectorXd errors;           // same order as vertex_ids
  ErrorStats stats;
};

// Closest point to `p` on triangle (a, b, c).
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c);

struct SurfacePoint {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  int32_t triangle = -1;
  double distance = 0.0;
};

// Uniform spatial hash over a mesh's triangles. Accelerated queries visit
// expanding cell rings and stop once no unseen triangle can beat the best
// distance, so they return exactly the exhaustive minimum. Queries reuse
// internal scratch buffers and are not thread safe.
class TriangleGrid {
 public:
  explicit TriangleGrid(const Mesh& mesh);

  SurfacePoint closest(const Eigen::Vector3d& p) const;
  SurfacePoint closest_exhaustive(const Eigen::Vector3d& p) const;

 private:
  const Mesh& mesh_;
  Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1, nz_ = 1;
  std::vector<std::vector<int32_t>> cells_;
  mutable std::vector<uint32_t> seen_;
  mutable uint32_t query_stamp_ = 0;

  void consider(int32_t tri, const Eigen::Vector3d& p, SurfacePoint* best) const;
};

// Distance from every predicted vertex to the nearest point of the truth
// surface. Vertices farther than `region_radius` from `region_center` are
// left out of the map; the defaults keep the full mesh.
ErrorMap point_to_plane_error(
    const Mesh& pred, const Mesh& truth,
    const Eigen::Vector3d& region_center = Eigen::Vector3d::Zero(),
    double region_radius = std::numeric_limits<double>::infinity());

// Reference implementation scanning all truth triangles per vertex.
ErrorMap point_to_plane_error_exhaustive(
    const Mesh& pred, const Mesh& truth,
    const Eigen::Vector3d& region_center = Eigen::Vector3d::Zero(),
    double region_radius = std::numeric_limits<double>::infinity());

struct RigidAlignment {
  SimilarityTransform transform;  // maps source points into the target frame
  Mesh aligned;                   // source mesh under the transform
  int icp_iterations = 0;
};

// Least-squares similarity over the landmark correspondences, refined by up
// to `max_icp_iterations` rigid point-to-plane ICP steps against the target
// surface. Collinear landmark sets are rejected.
RigidAlignment rigid_align(const Mesh& source, const Mesh& target,
                           const Eigen::MatrixX3d& source_landmarks,
                           const Eigen::MatrixX3d& target_landmarks,
                           int max_icp_iterations = 20);

struct ShapeEvaluation {
  // Truth frame normalization: centroid to the origin, RMS vertex radius to
  // one. Errors are reported in these truth-normalized units, which makes
  // the evaluation invariant to a similarity transform applied to both
  // meshes.
  SimilarityTransform truth_normalizer;
  SimilarityTransform alignment;  // pred into the normalized truth frame
  Mesh normalized_truth;
  Mesh aligned_pred;
  ErrorMap errors;
};

// Full evaluation protocol: normalize the truth frame, align the prediction
// by landmark correspondence plus ICP, and measure point-to-plane errors.
ShapeEvaluation evaluate_shape_error(const Mesh& pred, const Mesh& truth,
                                     int max_icp_iterations = 20);

// Renders per-vertex errors with color (t, 0, 1-t) for t = error / max_error
// clamped to [0, 1]; vertices absent from the map render as zero error and
// the background is white. A zero `max_error` uses the map's maximum.
RgbImage error_heatmap(const ErrorMap& map, const Mesh& mesh,
                       const CameraPose& pose, int width, int height,
                       double max_error = 0.0);

void write_error_csv(const ErrorMap& map, const std::string& path);
std::string error_summary_json(const ErrorMap& map);

}  // namespace facefit

#endif  // FACEFIT_CORE_EVALMETRIC_HPP_
