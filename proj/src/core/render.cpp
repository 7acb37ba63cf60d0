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

#include "core/render.hpp"

namespace facefit {

TextureMap sample_texture(const RgbImage& image, const Mesh& mesh,
                          const CameraPose& pose) {
  pose.validate();
  const ProjectedMesh pm = project_mesh(mesh, pose);
  TextureMap tex;
  tex.colors.resize(mesh.vertex_count(), 3);
  tex.valid.assign(mesh.vertex_count(), 0);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double x = pm.positions(v, 0);
    const double y = pm.positions(v, 1);
    const bool inside =
        x >= 0.0 && x <= image.width && y >= 0.0 && y <= image.height;
    tex.valid[v] = inside ? 255 : 0;
    tex.colors.row(v) = bilinear_sample(image, x, y).transpose();
  }
  return tex;
}

RenderResult render_textured(const Mesh& mesh, const TextureMap& texture,
                             const CameraPose& pose, int width, int height) {
  require(texture.colors.rows() == mesh.vertex_count(),
          ErrorCode::kDimensionMismatch, "texture length mismatch");
  require(texture.valid.size() == static_cast<size_t>(mesh.vertex_count()),
          ErrorCode::kDimensionMismatch, "texture validity length mismatch");
  RenderResult out;
  out.buffers = rasterize(mesh, pose, width, height);
  out.image = RgbImage(width, height, 0.0);
  out.valid.assign(static_cast<size_t>(width) * height, 0);
  const auto& tris = mesh.topology->triangles;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t at = out.buffers.index(x, y);
      const int32_t t = out.buffers.tri_id[at];
      if (t == RasterBuffers::kBackground) continue;
      const auto& tri = tris[t];
      const double* w = &out.buffers.bary[3 * at];
      for (int c = 0; c < 3; ++c) {
        out.image.at(x, y, c) = w[0] * texture.colors(tri[0], c) +
                                w[1] * texture.colors(tri[1], c) +
                                w[2] * texture.colors(tri[2], c);
      }
      out.valid[at] = (texture.valid[tri[0]] && texture.valid[tri[1]] &&
                       texture.valid[tri[2]])
                          ? 255
                          : 0;
    }
  }
  return out;
}

CrossProjection cross_project(const RgbImage& source_image, const Mesh& shape,
                              const CameraPose& pose_src,
                              const CameraPose& pose_dst, int width,
                              int height) {
  pose_src.validate();
  pose_dst.validate();
  const ProjectedMesh pm_src = project_mesh(shape, pose_src);
  const ProjectedMesh pm_dst = project_mesh(shape, pose_dst);
  CrossProjection out;
  out.positions_src = pm_src.positions;
  out.positions_dst = pm_dst.positions;
  out.buffers = rasterize_projected(pm_dst.positions, pm_dst.depths,
                                    shape.topology->triangles, width, height);
  out.image = RgbImage(width, height, 0.0);
  out.valid.assign(static_cast<size_t>(width) * height, 0);
  out.src_xy.assign(static_cast<size_t>(2) * width * height, 0.0);
  const auto& tris = shape.topology->triangles;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t at = out.buffers.index(x, y);
      const int32_t t = out.buffers.tri_id[at];
      if (t == RasterBuffers::kBackground) continue;
      const auto& tri = tris[t];
      const double* w = &out.buffers.bary[3 * at];
      // The camera is affine, so blending the projected corners equals
      // projecting the blended surface point.
      const double sx = w[0] * pm_src.positions(tri[0], 0) +
                        w[1] * pm_src.positions(tri[1], 0) +
                        w[2] * pm_src.positions(tri[2], 0);
      const double sy = w[0] * pm_src.positions(tri[0], 1) +
                        w[1] * pm_src.positions(tri[1], 1) +
                        w[2] * pm_src.positions(tri[2], 1);
      out.src_xy[2 * at + 0] = sx;
      out.src_xy[2 * at + 1] = sy;
      const Eigen::Vector3d color = bilinear_sample(source_image, sx, sy);
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = color[c];
      out.valid[at] = (sx >= 0.0 && sx <= source_image.width && sy >= 0.0 &&
                       sy <= source_image.height)
                          ? 255
                          : 0;
    }
  }
  return out;
}

ShapePoseGrad cross_project_backward(
    const CrossProjection& fwd, const RgbImage& source_image,
    const Mesh& shape, const CameraPose& pose_src, const CameraPose& pose_dst,
    const std::vector<double>& d_image,
    const std::vector<uint8_t>* pixel_filter) {
  const int width = fwd.buffers.width;
  const int height = fwd.buffers.height;
  require(d_image.size() == static_cast<size_t>(3) * width * height,
          ErrorCode::kDimensionMismatch, "color gradient size mismatch");
  const auto& tris = shape.topology->triangles;
  const int V = shape.vertex_count();

  // Accumulate in projected-position space first, then chain through the
  // camera once per vertex.
  Eigen::MatrixX2d d_src_pos = Eigen::MatrixX2d::Zero(V, 2);
  Eigen::MatrixX2d d_dst_pos = Eigen::MatrixX2d::Zero(V, 2);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t at = fwd.buffers.index(x, y);
      const int32_t t = fwd.buffers.tri_id[at];
      if (t == RasterBuffers::kBackground) continue;
      if (!fwd.valid[at]) continue;
      if (pixel_filter != nullptr && !(*pixel_filter)[at]) continue;
      const double gr = d_image[3 * at + 0];
      const double gg = d_image[3 * at + 1];
      const double gb = d_image[3 * at + 2];
      if (gr == 0.0 && gg == 0.0 && gb == 0.0) continue;

      const auto& tri = tris[t];
      const double* w = &fwd.buffers.bary[3 * at];
      const double sx = fwd.src_xy[2 * at + 0];
      const double sy = fwd.src_xy[2 * at + 1];
      const BilinearTap tap = bilinear_sample_grad(source_image, sx, sy);
      // Gradient with respect to the source sample position.
      const double gqx = gr * tap.d_x[0] + gg * tap.d_x[1] + gb * tap.d_x[2];
      const double gqy = gr * tap.d_y[0] + gg * tap.d_y[1] + gb * tap.d_y[2];
      if (gqx == 0.0 && gqy == 0.0) continue;

      // Source path: the sample position is the barycentric blend of the
      // source-projected corners.
      for (int k = 0; k < 3; ++k) {
        d_src_pos(tri[k], 0) += w[k] * gqx;
        d_src_pos(tri[k], 1) += w[k] * gqy;
      }

      // Destination path: barycentrics depend on the destination-projected
      // corners p0,p1,p2. With A the signed doubled area,
      // d w_j / d p_k = (w_k / A) * (cx_j, cy_j).
      const double x0 = fwd.positions_dst(tri[0], 0);
      const double y0 = fwd.positions_dst(tri[0], 1);
      const double x1 = fwd.positions_dst(tri[1], 0);
      const double y1 = fwd.positions_dst(tri[1], 1);
      const double x2 = fwd.positions_dst(tri[2], 0);
      const double y2 = fwd.positions_dst(tri[2], 1);
      const double area2 = signed_area2(x0, y0, x1, y1, x2, y2);
      if (area2 <= 0.0) continue;
      const double cx[3] = {y2 - y1, y0 - y2, y1 - y0};
      const double cy[3] = {x1 - x2, x2 - x0, x0 - x1};
      // d L / d w_j through the blended sample position.
      double h[3];
      for (int j = 0; j < 3; ++j) {
        h[j] = gqx * fwd.positions_src(tri[j], 0) +
               gqy * fwd.positions_src(tri[j], 1);
      }
      const double hx = h[0] * cx[0] + h[1] * cx[1] + h[2] * cx[2];
      const double hy = h[0] * cy[0] + h[1] * cy[1] + h[2] * cy[2];
      for (int k = 0; k < 3; ++k) {
        d_dst_pos(tri[k], 0) += w[k] / area2 * hx;
        d_dst_pos(tri[k], 1) += w[k] / area2 * hy;
      }
    }
  }

  ShapePoseGrad grad;
  grad.d_vertices = Eigen::MatrixX3d::Zero(V, 3);
  const Eigen::Matrix3d r_src =
      rotation_from_euler(pose_src.alpha, pose_src.beta, pose_src.gamma);
  const Eigen::Matrix3d r_dst =
      rotation_from_euler(pose_dst.alpha, pose_dst.beta, pose_dst.gamma);
  const Eigen::Matrix<double, 3, 2> vert_src =
      pose_src.f * r_src.topRows<2>().transpose();
  const Eigen::Matrix<double, 3, 2> vert_dst =
      pose_dst.f * r_dst.topRows<2>().transpose();
  for (int v = 0; v < V; ++v) {
    const Eigen::Vector2d gs = d_src_pos.row(v).transpose();
    const Eigen::Vector2d gd = d_dst_pos.row(v).transpose();
    if (gs.isZero(0.0) && gd.isZero(0.0)) continue;
    grad.d_vertices.row(v) = (vert_src * gs + vert_dst * gd).transpose();
    const Eigen::Vector3d vert = shape.vertices.row(v).transpose();
    grad.d_pose_src += pose_jacobian(vert, pose_src).transpose() * gs;
    grad.d_pose_dst += pose_jacobian(vert, pose_dst).transpose() * gd;
  }
  return grad;
}

}  // namespace facefit
