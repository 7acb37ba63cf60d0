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

#ifndef FACEFIT_CORE_MODEL_HPP_
#define FACEFIT_CORE_MODEL_HPP_

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace facefit {

// Shared, immutable connectivity. Vertex positions live in Mesh; a model and
// every mesh assembled from it point at the same topology.
struct MeshTopology {
  std::vector<std::array<int32_t, 3>> triangles;
  // Ordered vertex indices corresponding to 2D landmark points.
  std::vector<int32_t> landmarks;
  // Positions inside `landmarks` of the points bounding occlusion cuts
  // (image-left outer brow, image-right outer brow, nose tip); -1 if unknown.
  int32_t left_brow = -1;
  int32_t right_brow = -1;
  int32_t nose_tip = -1;
};

struct Mesh {
  Eigen::MatrixX3d vertices;
  std::shared_ptr<const MeshTopology> topology;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
};

struct ShapeParams {
  Eigen::VectorXd id;
  Eigen::VectorXd exp;

  static ShapeParams zeros(int id_dims, int exp_dims) {
    return ShapeParams{Eigen::VectorXd::Zero(id_dims),
                       Eigen::VectorXd::Zero(exp_dims)};
  }
};

// Linear statistical face shape model: mean plus identity and expression
// basis displacements. Immutable after construction and safe to share.
class MorphableModel {
 public:
  MorphableModel(Eigen::VectorXd mean_shape, Eigen::MatrixXd id_basis,
                 Eigen::MatrixXd exp_basis, Eigen::VectorXd id_sigma,
                 Eigen::VectorXd exp_sigma,
                 std::shared_ptr<const MeshTopology> topology);

  int vertex_count() const { return static_cast<int>(mean_shape_.size() / 3); }
  int id_dims() const { return static_cast<int>(id_basis_.cols()); }
  int exp_dims() const { return static_cast<int>(exp_basis_.cols()); }
  int landmark_count() const {
    return static_cast<int>(topology_->landmarks.size());
  }
  int triangle_count() const {
    return static_cast<int>(topology_->triangles.size());
  }

  const Eigen::VectorXd& mean_shape() const { return mean_shape_; }
  const Eigen::MatrixXd& id_basis() const { return id_basis_; }
  const Eigen::MatrixXd& exp_basis() const { return exp_basis_; }
  const Eigen::VectorXd& id_sigma() const { return id_sigma_; }
  const Eigen::VectorXd& exp_sigma() const { return exp_sigma_; }
  const std::shared_ptr<const MeshTopology>& topology() const {
    return topology_;
  }

  void save(const std::string& path) const;
  static MorphableModel load(const std::string& path);

 private:
  Eigen::VectorXd mean_shape_;  // 3V, interleaved x y z
  Eigen::MatrixXd id_basis_;    // 3V x D_id
  Eigen::MatrixXd exp_basis_;   // 3V x D_exp
  Eigen::VectorXd id_sigma_;
  Eigen::VectorXd exp_sigma_;
  std::shared_ptr<const MeshTopology> topology_;
};

// vertices = reshape(mean + id_basis * x_id + exp_basis * x_exp).
Mesh assemble_shape(const MorphableModel& model, const ShapeParams& params);

// Procedural stand-in for scan-derived bases: an oval face patch with nose,
// brow, cheek and chin relief, plus jointly orthonormal smooth displacement
// fields with geometrically decaying sigmas. Deterministic per seed. The
// generated vertex count is the largest grid fitting within vertex_budget.
MorphableModel generate_synthetic_model(uint64_t seed, int vertex_budget,
                                        int id_dims, int exp_dims);

constexpr int kSyntheticMinVertexBudget = 200;
constexpr int kSyntheticLandmarkCount = 17;

// Gathers mesh vertices at the topology's landmark indices, in order.
Eigen::MatrixX3d landmark_positions(const Mesh& mesh);

// Pulls a per-vertex position gradient back to stacked (id, exp) coefficient
// space through the linear shape assembly.
Eigen::VectorXd coefficient_gradient(const MorphableModel& model,
                                     const Eigen::MatrixX3d& d_vertices);
// Same for a sparse vertex subset; d_rows has one row per index.
Eigen::VectorXd coefficient_gradient(const MorphableModel& model,
                                     const std::vector<int32_t>& vertex_indices,
                                     const Eigen::MatrixX3d& d_rows);

// Wavefront OBJ with optional per-vertex "v x y z r g b" colors.
void export_mesh_obj(const Mesh& mesh, const std::string& path,
                     const Eigen::MatrixX3d* colors = nullptr);
std::string mesh_to_obj(const Mesh& mesh,
                        const Eigen::MatrixX3d* colors = nullptr);
// Reads v/f records; the resulting topology carries no landmarks.
Mesh import_mesh_obj(const std::string& path);

}  // namespace facefit

#endif  // FACEFIT_CORE_MODEL_HPP_
