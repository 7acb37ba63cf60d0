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

#include "core/evalmetric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "core/mask.hpp"
#include "core/render.hpp"
#include "json.hpp"

namespace facefit {

namespace {

// Rotation from an axis-angle vector via Rodrigues' formula.
Eigen::Matrix3d axis_angle_rotation(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-300) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d axis = w / theta;
  return Eigen::AngleAxisd(theta, axis).toRotationMatrix();
}

// A landmark set determines a unique similarity only if it spans a plane.
void require_noncollinear(const Eigen::MatrixX3d& points, const char* side) {
  const Eigen::RowVector3d mean = points.colwise().mean();
  const Eigen::MatrixX3d centered = points.rowwise() - mean;
  const Eigen::Matrix3d scatter = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const double hi = eig.eigenvalues()[2];
  const double mid = eig.eigenvalues()[1];
  require(hi > 0.0 && mid > 1e-12 * hi, ErrorCode::kDegenerate,
          std::string("collinear ") + side + " landmarks");
}

}  // namespace

Eigen::MatrixX3d SimilarityTransform::apply_all(
    const Eigen::MatrixX3d& points) const {
  Eigen::MatrixX3d out = scale * (points * rotation.transpose());
  out.rowwise() += translation.transpose();
  return out;
}

Mesh SimilarityTransform::apply_mesh(const Mesh& mesh) const {
  Mesh out;
  out.vertices = apply_all(mesh.vertices);
  out.topology = mesh.topology;
  return out;
}

ErrorStats compute_error_stats(const Eigen::VectorXd& errors) {
  ErrorStats stats;
  const int n = static_cast<int>(errors.size());
  if (n == 0) return stats;
  stats.mean = errors.mean();
  stats.stddev = std::sqrt((errors.array() - stats.mean).square().mean());
  stats.max = errors.maxCoeff();
  std::vector<double> sorted(errors.data(), errors.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const auto nearest_rank = [&](double q) {
    int idx = static_cast<int>(std::ceil(q * n)) - 1;
    idx = std::clamp(idx, 0, n - 1);
    return sorted[static_cast<size_t>(idx)];
  };
  stats.p50 = nearest_rank(0.50);
  stats.p90 = nearest_rank(0.90);
  stats.p95 = nearest_rank(0.95);
  stats.p99 = nearest_rank(0.99);
  return stats;
}

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double denom = d1 - d3;
    const double v = denom > 0.0 ? d1 / denom : 0.0;
    return a + v * ab;
  }

  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double denom = d2 - d6;
    const double w = denom > 0.0 ? d2 / denom : 0.0;
    return a + w * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double denom = (d4 - d3) + (d5 - d6);
    const double w = denom > 0.0 ? (d4 - d3) / denom : 0.0;
    return b + w * (c - b);
  }

  const double denom = va + vb + vc;
  if (denom <= 0.0) return a;
  const double v = vb / denom;
  const double w = vc / denom;
  return a + v * ab + w * ac;
}

TriangleGrid::TriangleGrid(const Mesh& mesh) : mesh_(mesh) {
  require(mesh.topology != nullptr, ErrorCode::kInvalidArgument,
          "mesh has no topology");
  const auto& tris = mesh.topology->triangles;
  require(!tris.empty(), ErrorCode::kInvalidArgument, "mesh has no triangles");
  require(mesh.vertex_count() > 0, ErrorCode::kInvalidArgument,
          "mesh has no vertices");

  const Eigen::Vector3d lo = mesh.vertices.colwise().minCoeff().transpose();
  const Eigen::Vector3d hi = mesh.vertices.colwise().maxCoeff().transpose();
  origin_ = lo;
  const Eigen::Vector3d extent = hi - lo;
  const double diag = extent.norm();

  // Grid resolution targets a few triangles per cell while keeping the cell
  // table bounded for flat or degenerate meshes.
  const double target = std::cbrt(static_cast<double>(tris.size()));
  const int max_dim = std::clamp(static_cast<int>(std::ceil(2.0 * target)), 1, 64);
  cell_ = diag > 0.0 ? diag / max_dim : 1.0;
  nx_ = std::max(1, static_cast<int>(std::floor(extent.x() / cell_)) + 1);
  ny_ = std::max(1, static_cast<int>(std::floor(extent.y() / cell_)) + 1);
  nz_ = std::max(1, static_cast<int>(std::floor(extent.z() / cell_)) + 1);
  cells_.assign(static_cast<size_t>(nx_) * ny_ * nz_, {});

  for (size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    Eigen::Vector3d tlo = mesh.vertices.row(tri[0]).transpose();
    Eigen::Vector3d thi = tlo;
    for (int k = 1; k < 3; ++k) {
      const Eigen::Vector3d v = mesh.vertices.row(tri[k]).transpose();
      tlo = tlo.cwiseMin(v);
      thi = thi.cwiseMax(v);
    }
    int clo[3];
    int chi[3];
    for (int axis = 0; axis < 3; ++axis) {
      clo[axis] = static_cast<int>(std::floor((tlo[axis] - origin_[axis]) / cell_));
      chi[axis] = static_cast<int>(std::floor((thi[axis] - origin_[axis]) / cell_));
      const int n = axis == 0 ? nx_ : (axis == 1 ? ny_ : nz_);
      clo[axis] = std::clamp(clo[axis], 0, n - 1);
      chi[axis] = std::clamp(chi[axis], 0, n - 1);
    }
    for (int z = clo[2]; z <= chi[2]; ++z) {
      for (int y = clo[1]; y <= chi[1]; ++y) {
        for (int x = clo[0]; x <= chi[0]; ++x) {
          cells_[(static_cast<size_t>(z) * ny_ + y) * nx_ + x].push_back(
              static_cast<int32_t>(t));
        }
      }
    }
  }
  seen_.assign(tris.size(), 0);
}

void TriangleGrid::consider(int32_t tri, const Eigen::Vector3d& p,
                            SurfacePoint* best) const {
  const auto& t = mesh_.topology->triangles[static_cast<size_t>(tri)];
  const Eigen::Vector3d q = closest_point_on_triangle(
      p, mesh_.vertices.row(t[0]).transpose(),
      mesh_.vertices.row(t[1]).transpose(), mesh_.vertices.row(t[2]).transpose());
  const double d = (p - q).norm();
  if (d < best->distance) {
    best->distance = d;
    best->point = q;
    best->triangle = tri;
  }
}

SurfacePoint TriangleGrid::closest(const Eigen::Vector3d& p) const {
  SurfacePoint best;
  best.distance = std::numeric_limits<double>::infinity();
  ++query_stamp_;
  if (query_stamp_ == 0) {
    std::fill(seen_.begin(), seen_.end(), 0);
    ++query_stamp_;
  }

  // Cell coordinates of the query, unclamped so rings grow correctly from
  // points outside the grid volume.
  int c0[3];
  c0[0] = static_cast<int>(std::floor((p.x() - origin_.x()) / cell_));
  c0[1] = static_cast<int>(std::floor((p.y() - origin_.y()) / cell_));
  c0[2] = static_cast<int>(std::floor((p.z() - origin_.z()) / cell_));

  const int dims[3] = {nx_, ny_, nz_};
  int max_ring = 0;
  for (int axis = 0; axis < 3; ++axis) {
    max_ring = std::max(max_ring, std::max(c0[axis], dims[axis] - 1 - c0[axis]));
  }

  for (int r = 0; r <= max_ring; ++r) {
    const int zlo = std::max(c0[2] - r, 0);
    const int zhi = std::min(c0[2] + r, nz_ - 1);
    const int ylo = std::max(c0[1] - r, 0);
    const int yhi = std::min(c0[1] + r, ny_ - 1);
    const int xlo = std::max(c0[0] - r, 0);
    const int xhi = std::min(c0[0] + r, nx_ - 1);
    for (int z = zlo; z <= zhi; ++z) {
      const bool z_edge = (z == c0[2] - r) || (z == c0[2] + r);
      for (int y = ylo; y <= yhi; ++y) {
        const bool y_edge = (y == c0[1] - r) || (y == c0[1] + r);
        for (int x = xlo; x <= xhi; ++x) {
          const bool x_edge = (x == c0[0] - r) || (x == c0[0] + r);
          if (r > 0 && !z_edge && !y_edge && !x_edge) continue;
          const auto& bucket =
              cells_[(static_cast<size_t>(z) * ny_ + y) * nx_ + x];
          for (const int32_t tri : bucket) {
            if (seen_[static_cast<size_t>(tri)] == query_stamp_) continue;
            seen_[static_cast<size_t>(tri)] = query_stamp_;
            consider(tri, p, &best);
          }
        }
      }
    }
    // Every triangle not yet visited lies in a cell at Chebyshev distance
    // greater than r, hence at least r * cell_ away from the query.
    if (best.triangle >= 0 && best.distance <= r * cell_) break;
  }
  return best;
}

SurfacePoint TriangleGrid::closest_exhaustive(const Eigen::Vector3d& p) const {
  SurfacePoint best;
  best.distance = std::numeric_limits<double>::infinity();
  const int32_t count = static_cast<int32_t>(mesh_.topology->triangles.size());
  for (int32_t t = 0; t < count; ++t) consider(t, p, &best);
  return best;
}

namespace {

template <typename ClosestFn>
ErrorMap point_to_plane_impl(const Mesh& pred, const Eigen::Vector3d& region_center,
                             double region_radius, const ClosestFn& closest) {
  require(pred.vertex_count() > 0, ErrorCode::kInvalidArgument,
          "prediction has no vertices");
  ErrorMap map;
  std::vector<double> errs;
  const bool crop = std::isfinite(region_radius);
  for (int32_t v = 0; v < static_cast<int32_t>(pred.vertex_count()); ++v) {
    const Eigen::Vector3d p = pred.vertices.row(v).transpose();
    if (crop && (p - region_center).norm() > region_radius) continue;
    map.vertex_ids.push_back(v);
    errs.push_back(closest(p).distance);
  }
  map.errors.resize(static_cast<int>(errs.size()));
  for (size_t i = 0; i < errs.size(); ++i) map.errors[static_cast<int>(i)] = errs[i];
  map.stats = compute_error_stats(map.errors);
  return map;
}

}  // namespace

ErrorMap point_to_plane_error(const Mesh& pred, const Mesh& truth,
                              const Eigen::Vector3d& region_center,
                              double region_radius) {
  TriangleGrid grid(truth);
  return point_to_plane_impl(pred, region_center, region_radius,
                             [&](const Eigen::Vector3d& p) { return grid.closest(p); });
}

ErrorMap point_to_plane_error_exhaustive(const Mesh& pred, const Mesh& truth,
                                         const Eigen::Vector3d& region_center,
                                         double region_radius) {
  TriangleGrid grid(truth);
  return point_to_plane_impl(
      pred, region_center, region_radius,
      [&](const Eigen::Vector3d& p) { return grid.closest_exhaustive(p); });
}

RigidAlignment rigid_align(const Mesh& source, const Mesh& target,
                           const Eigen::MatrixX3d& source_landmarks,
                           const Eigen::MatrixX3d& target_landmarks,
                           int max_icp_iterations) {
  require(source_landmarks.rows() == target_landmarks.rows(),
          ErrorCode::kInvalidArgument, "landmark counts differ");
  require(source_landmarks.rows() >= 3, ErrorCode::kInvalidArgument,
          "need at least three landmark pairs");
  require(source.vertex_count() > 0, ErrorCode::kInvalidArgument,
          "source mesh has no vertices");
  require_noncollinear(source_landmarks, "source");
  require_noncollinear(target_landmarks, "target");

  const Eigen::Matrix4d T = Eigen::umeyama(source_landmarks.transpose(),
                                           target_landmarks.transpose(), true);
  const Eigen::Matrix3d A = T.topLeftCorner<3, 3>();
  RigidAlignment out;
  out.transform.scale = std::cbrt(A.determinant());
  require(out.transform.scale > 0.0, ErrorCode::kDegenerate,
          "landmark alignment collapsed");
  out.transform.rotation = A / out.transform.scale;
  out.transform.translation = T.topRightCorner<3, 1>();

  TriangleGrid grid(target);
  const int32_t n = static_cast<int32_t>(source.vertex_count());
  const double extent =
      (target.vertices.colwise().maxCoeff() - target.vertices.colwise().minCoeff())
          .norm();
  const double contact = 1e-12 * std::max(extent, 1.0);
  for (int iter = 0; iter < max_icp_iterations; ++iter) {
    Eigen::Matrix<double, 6, 6> hessian = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> gradient = Eigen::Matrix<double, 6, 1>::Zero();
    int used = 0;
    for (int32_t v = 0; v < n; ++v) {
      const Eigen::Vector3d x =
          out.transform.apply(source.vertices.row(v).transpose());
      const SurfacePoint sp = grid.closest(x);
      // Direction of steepest increase of the clamped plane distance. Off the
      // surface this equals the triangle normal when the planar foot is
      // interior and stays continuous across edge and vertex feet, which
      // keeps the step independent of how nearest-triangle ties resolve. On
      // the surface the triangle plane itself constrains the point.
      Eigen::Vector3d normal;
      if (sp.distance > contact) {
        normal = (x - sp.point) / sp.distance;
      } else {
        const auto& tri =
            target.topology->triangles[static_cast<size_t>(sp.triangle)];
        const Eigen::Vector3d a = target.vertices.row(tri[0]).transpose();
        const Eigen::Vector3d b = target.vertices.row(tri[1]).transpose();
        const Eigen::Vector3d c = target.vertices.row(tri[2]).transpose();
        Eigen::Vector3d face = (b - a).cross(c - a);
        const double len = face.norm();
        if (len < 1e-300) continue;
        normal = face / len;
      }
      const double residual = (x - sp.point).dot(normal);
      Eigen::Matrix<double, 6, 1> row;
      row.head<3>() = x.cross(normal);
      row.tail<3>() = normal;
      hessian += row * row.transpose();
      gradient += row * residual;
      ++used;
    }
    if (used == 0) break;
    // Tiny Tikhonov term keeps the solve finite when the directions do not
    // constrain all six degrees of freedom.
    hessian.diagonal().array() += 1e-12 * hessian.trace();
    const Eigen::Matrix<double, 6, 1> delta = hessian.ldlt().solve(-gradient);
    if (!delta.allFinite()) break;
    const Eigen::Matrix3d d_rot = axis_angle_rotation(delta.head<3>());
    out.transform.rotation = d_rot * out.transform.rotation;
    out.transform.translation = d_rot * out.transform.translation + delta.tail<3>();
    ++out.icp_iterations;
    if (delta.norm() < 1e-15) break;
  }

  out.aligned = out.transform.apply_mesh(source);
  return out;
}

ShapeEvaluation evaluate_shape_error(const Mesh& pred, const Mesh& truth,
                                     int max_icp_iterations) {
  require(truth.vertex_count() > 0, ErrorCode::kInvalidArgument,
          "truth mesh has no vertices");
  require(pred.topology != nullptr && truth.topology != nullptr,
          ErrorCode::kInvalidArgument, "mesh has no topology");

  ShapeEvaluation eval;
  const Eigen::RowVector3d centroid = truth.vertices.colwise().mean();
  const Eigen::MatrixX3d centered = truth.vertices.rowwise() - centroid;
  const double rms = std::sqrt(centered.rowwise().squaredNorm().mean());
  require(rms > 0.0, ErrorCode::kDegenerate, "truth mesh has zero extent");
  eval.truth_normalizer.scale = 1.0 / rms;
  eval.truth_normalizer.rotation = Eigen::Matrix3d::Identity();
  eval.truth_normalizer.translation = -centroid.transpose() / rms;
  eval.normalized_truth = eval.truth_normalizer.apply_mesh(truth);

  const Eigen::MatrixX3d pred_landmarks = landmark_positions(pred);
  const Eigen::MatrixX3d truth_landmarks =
      landmark_positions(eval.normalized_truth);
  RigidAlignment alignment = rigid_align(pred, eval.normalized_truth,
                                         pred_landmarks, truth_landmarks,
                                         max_icp_iterations);
  eval.alignment = alignment.transform;
  eval.aligned_pred = std::move(alignment.aligned);
  eval.errors = point_to_plane_error(eval.aligned_pred, eval.normalized_truth);
  return eval;
}

RgbImage error_heatmap(const ErrorMap& map, const Mesh& mesh,
                       const CameraPose& pose, int width, int height,
                       double max_error) {
  require(width > 0 && height > 0, ErrorCode::kInvalidArgument,
          "heatmap size must be positive");
  const double cap = max_error > 0.0 ? max_error : map.stats.max;

  TextureMap texture;
  texture.colors = Eigen::MatrixX3d::Zero(mesh.vertex_count(), 3);
  texture.colors.col(2).setOnes();
  texture.valid.assign(static_cast<size_t>(mesh.vertex_count()), 1);
  for (size_t i = 0; i < map.vertex_ids.size(); ++i) {
    const int32_t v = map.vertex_ids[i];
    if (v < 0 || v >= static_cast<int32_t>(mesh.vertex_count())) continue;
    const double t =
        cap > 0.0 ? std::clamp(map.errors[static_cast<int>(i)] / cap, 0.0, 1.0)
                  : 0.0;
    texture.colors(v, 0) = t;
    texture.colors(v, 2) = 1.0 - t;
  }

  RenderResult rendered = render_textured(mesh, texture, pose, width, height);
  const VisibilityMask covered = coverage_mask(rendered.buffers);
  RgbImage out(width, height);
  for (int p = 0; p < width * height; ++p) {
    for (int c = 0; c < 3; ++c) {
      out.data[static_cast<size_t>(p) * 3 + c] =
          covered.membership[static_cast<size_t>(p)]
              ? rendered.image.data[static_cast<size_t>(p) * 3 + c]
              : 1.0;
    }
  }
  return out;
}

void write_error_csv(const ErrorMap& map, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot open " + path);
  out << "vertex_id,error\n";
  char buf[64];
  for (size_t i = 0; i < map.vertex_ids.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", map.errors[static_cast<int>(i)]);
    out << map.vertex_ids[i] << ',' << buf << '\n';
  }
  out.close();
  require(out.good(), ErrorCode::kIo, "failed writing " + path);
}

std::string error_summary_json(const ErrorMap& map) {
  nlohmann::json j;
  j["count"] = map.vertex_ids.size();
  j["mean"] = map.stats.mean;
  j["stddev"] = map.stats.stddev;
  j["max"] = map.stats.max;
  j["p50"] = map.stats.p50;
  j["p90"] = map.stats.p90;
  j["p95"] = map.stats.p95;
  j["p99"] = map.stats.p99;
  return j.dump(2);
}

}  // namespace facefit
