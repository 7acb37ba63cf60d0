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

#include "core/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "core/rng.hpp"

namespace facefit {

namespace {

void check_topology(const MeshTopology& topo, int vertex_count) {
  std::set<std::pair<int32_t, int32_t>> directed_edges;
  for (const auto& tri : topo.triangles) {
    for (int k = 0; k < 3; ++k) {
      require(tri[k] >= 0 && tri[k] < vertex_count, ErrorCode::kInvalidArgument,
              "triangle index out of range");
      int32_t a = tri[k];
      int32_t b = tri[(k + 1) % 3];
      require(a != b, ErrorCode::kInvalidArgument, "degenerate triangle");
      // A directed edge shared by two triangles means inconsistent winding.
      require(directed_edges.insert({a, b}).second, ErrorCode::kInvalidArgument,
              "inconsistent triangle winding");
    }
  }
  for (int32_t lm : topo.landmarks) {
    require(lm >= 0 && lm < vertex_count, ErrorCode::kInvalidArgument,
            "landmark index out of range");
  }
  const int L = static_cast<int>(topo.landmarks.size());
  for (int32_t cut : {topo.left_brow, topo.right_brow, topo.nose_tip}) {
    require(cut >= -1 && cut < L, ErrorCode::kInvalidArgument,
            "cut anchor out of range");
  }
}

}  // namespace

MorphableModel::MorphableModel(Eigen::VectorXd mean_shape,
                               Eigen::MatrixXd id_basis,
                               Eigen::MatrixXd exp_basis,
                               Eigen::VectorXd id_sigma,
                               Eigen::VectorXd exp_sigma,
                               std::shared_ptr<const MeshTopology> topology)
    : mean_shape_(std::move(mean_shape)),
      id_basis_(std::move(id_basis)),
      exp_basis_(std::move(exp_basis)),
      id_sigma_(std::move(id_sigma)),
      exp_sigma_(std::move(exp_sigma)),
      topology_(std::move(topology)) {
  require(topology_ != nullptr, ErrorCode::kInvalidArgument, "null topology");
  require(mean_shape_.size() > 0 && mean_shape_.size() % 3 == 0,
          ErrorCode::kDimensionMismatch, "mean shape size not 3V");
  const Eigen::Index n = mean_shape_.size();
  require(id_basis_.rows() == n && exp_basis_.rows() == n,
          ErrorCode::kDimensionMismatch, "basis row count mismatch");
  require(id_basis_.cols() >= 1 && exp_basis_.cols() >= 1,
          ErrorCode::kDimensionMismatch, "basis needs at least one column");
  require(id_sigma_.size() == id_basis_.cols(), ErrorCode::kDimensionMismatch,
          "id sigma size mismatch");
  require(exp_sigma_.size() == exp_basis_.cols(), ErrorCode::kDimensionMismatch,
          "exp sigma size mismatch");
  require((id_sigma_.array() > 0).all() && (exp_sigma_.array() > 0).all(),
          ErrorCode::kInvalidArgument, "sigmas must be positive");
  require(mean_shape_.allFinite() && id_basis_.allFinite() &&
              exp_basis_.allFinite(),
          ErrorCode::kInvalidArgument, "non-finite model data");
  check_topology(*topology_, vertex_count());
}

Mesh assemble_shape(const MorphableModel& model, const ShapeParams& params) {
  require(params.id.size() == model.id_dims(), ErrorCode::kDimensionMismatch,
          "identity coefficient count mismatch");
  require(params.exp.size() == model.exp_dims(), ErrorCode::kDimensionMismatch,
          "expression coefficient count mismatch");
  Eigen::VectorXd flat = model.mean_shape() + model.id_basis() * params.id +
                         model.exp_basis() * params.exp;
  Mesh mesh;
  mesh.vertices = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3,
                                                 Eigen::RowMajor>>(
      flat.data(), flat.size() / 3, 3);
  mesh.topology = model.topology();
  return mesh;
}

Eigen::MatrixX3d landmark_positions(const Mesh& mesh) {
  const auto& lm = mesh.topology->landmarks;
  Eigen::MatrixX3d out(lm.size(), 3);
  for (size_t i = 0; i < lm.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = mesh.vertices.row(lm[i]);
  }
  return out;
}

Eigen::VectorXd coefficient_gradient(const MorphableModel& model,
                                     const Eigen::MatrixX3d& d_vertices) {
  require(d_vertices.rows() == model.vertex_count(),
          ErrorCode::kDimensionMismatch, "vertex gradient row count");
  Eigen::VectorXd flat(3 * model.vertex_count());
  for (Eigen::Index v = 0; v < d_vertices.rows(); ++v) {
    flat.segment<3>(3 * v) = d_vertices.row(v).transpose();
  }
  Eigen::VectorXd out(model.id_dims() + model.exp_dims());
  out.head(model.id_dims()) = model.id_basis().transpose() * flat;
  out.tail(model.exp_dims()) = model.exp_basis().transpose() * flat;
  return out;
}

Eigen::VectorXd coefficient_gradient(const MorphableModel& model,
                                     const std::vector<int32_t>& vertex_indices,
                                     const Eigen::MatrixX3d& d_rows) {
  require(d_rows.rows() == static_cast<Eigen::Index>(vertex_indices.size()),
          ErrorCode::kDimensionMismatch, "vertex gradient row count");
  Eigen::VectorXd out =
      Eigen::VectorXd::Zero(model.id_dims() + model.exp_dims());
  for (size_t i = 0; i < vertex_indices.size(); ++i) {
    const int32_t v = vertex_indices[i];
    require(v >= 0 && v < model.vertex_count(), ErrorCode::kInvalidArgument,
            "vertex index out of range");
    const Eigen::Vector3d g = d_rows.row(static_cast<Eigen::Index>(i));
    out.head(model.id_dims()) +=
        model.id_basis().middleRows(3 * v, 3).transpose() * g;
    out.tail(model.exp_dims()) +=
        model.exp_basis().middleRows(3 * v, 3).transpose() * g;
  }
  return out;
}

namespace {

double gauss2(double a, double b, double ca, double cb, double sa, double sb) {
  const double da = (a - ca) / sa;
  const double db = (b - cb) / sb;
  return std::exp(-da * da - db * db);
}

// Facial relief as a height field over the oval parameter patch. a spans the
// face left to right, b spans forehead (-1) to chin (+1).
double face_height(double a, double b) {
  double z = 0.55 * std::sqrt(std::max(0.0, 1.0 - 0.65 * a * a - 0.25 * b * b));
  z += 0.26 * gauss2(a, b, 0.0, 0.15, 0.14, 0.38);   // nose ridge
  z += 0.18 * gauss2(a, b, 0.0, 0.35, 0.16, 0.12);   // nose tip
  z += 0.06 * gauss2(a, b, -0.42, -0.30, 0.28, 0.10);  // brows
  z += 0.06 * gauss2(a, b, 0.42, -0.30, 0.28, 0.10);
  z -= 0.10 * gauss2(a, b, -0.38, -0.12, 0.22, 0.10);  // eye sockets
  z -= 0.10 * gauss2(a, b, 0.38, -0.12, 0.22, 0.10);
  z += 0.08 * gauss2(a, b, -0.55, 0.25, 0.30, 0.28);  // cheeks
  z += 0.08 * gauss2(a, b, 0.55, 0.25, 0.30, 0.28);
  z += 0.10 * gauss2(a, b, 0.0, 0.62, 0.24, 0.10);  // lips
  z += 0.08 * gauss2(a, b, 0.0, 0.88, 0.25, 0.14);  // chin
  return z;
}

// Smooth random field over the patch: a small sum of low-frequency cosines.
struct CosineField {
  struct Wave {
    double amp, wa, wb, phase;
  };
  std::array<Wave, 4> waves;

  static CosineField sample(Rng& rng) {
    CosineField f;
    for (auto& w : f.waves) {
      w.amp = rng.uniform(0.3, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      w.wa = rng.uniform(0.5, 2.5) * M_PI;
      w.wb = rng.uniform(0.5, 2.5) * M_PI;
      w.phase = rng.uniform(0.0, 2.0 * M_PI);
    }
    return f;
  }

  double operator()(double a, double b) const {
    double v = 0.0;
    for (const auto& w : waves) v += w.amp * std::cos(w.wa * a + w.wb * b + w.phase);
    return v;
  }
};

}  // namespace

MorphableModel generate_synthetic_model(uint64_t seed, int vertex_budget,
                                        int id_dims, int exp_dims) {
  require(vertex_budget >= kSyntheticMinVertexBudget,
          ErrorCode::kInvalidArgument,
          "vertex budget below face template minimum");
  require(id_dims >= 1 && exp_dims >= 1, ErrorCode::kInvalidArgument,
          "basis dimensions must be at least 1");

  // Grid sized to the budget with a 1:1.3 width:height vertex ratio. An odd
  // column count keeps a center column for the midline landmarks.
  int nu = static_cast<int>(std::floor(std::sqrt(vertex_budget / 1.3)));
  if (nu % 2 == 0) nu -= 1;
  int nv = std::min(vertex_budget / nu,
                    static_cast<int>(std::lround(1.3 * nu)));
  const int V = nu * nv;
  require(id_dims + exp_dims < 3 * V, ErrorCode::kInvalidArgument,
          "basis dimensions exceed shape degrees of freedom");

  const auto idx = [nu](int i, int j) { return j * nu + i; };
  const auto col_at = [nu](double a) {
    return static_cast<int>(std::lround((a + 1.0) / 2.0 * (nu - 1)));
  };
  const auto row_at = [nv](double b) {
    return static_cast<int>(std::lround((b + 1.0) / 2.0 * (nv - 1)));
  };

  Eigen::VectorXd mean(3 * V);
  for (int j = 0; j < nv; ++j) {
    const double b = 2.0 * j / (nv - 1) - 1.0;
    const double width = 0.80 + 0.20 * (1.0 - b * b);
    for (int i = 0; i < nu; ++i) {
      const double a = 2.0 * i / (nu - 1) - 1.0;
      const int v = idx(i, j);
      mean[3 * v + 0] = a * width;
      mean[3 * v + 1] = 1.3 * b;
      mean[3 * v + 2] = face_height(a, b);
    }
  }
  {
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> pts(
        mean.data(), V, 3);
    pts.rowwise() -= pts.colwise().mean();
  }

  auto topo = std::make_shared<MeshTopology>();
  topo->triangles.reserve(2 * (nu - 1) * (nv - 1));
  for (int j = 0; j + 1 < nv; ++j) {
    for (int i = 0; i + 1 < nu; ++i) {
      const int32_t v00 = idx(i, j);
      const int32_t v10 = idx(i + 1, j);
      const int32_t v01 = idx(i, j + 1);
      const int32_t v11 = idx(i + 1, j + 1);
      // Wound so that the projected signed area is positive in the y-down
      // image frame when the face looks toward +z.
      topo->triangles.push_back({v00, v10, v01});
      topo->triangles.push_back({v10, v11, v01});
    }
  }

  // 17-point layout: chin, jaw pair, face-side pair, outer/inner brow pairs,
  // nose bridge/tip/wing pair, eye pair, mouth-corner pair. "Left" is image
  // left (negative x) for a face looking at the camera.
  const auto at = [&](double a, double b) {
    return static_cast<int32_t>(idx(col_at(a), row_at(b)));
  };
  topo->landmarks = {
      at(0.0, 1.0),      // 0 chin
      at(-0.72, 0.72),   // 1 jaw left
      at(0.72, 0.72),    // 2 jaw right
      at(-1.0, 0.0),     // 3 side left
      at(1.0, 0.0),      // 4 side right
      at(-0.55, -0.32),  // 5 brow outer left
      at(0.55, -0.32),   // 6 brow outer right
      at(-0.18, -0.30),  // 7 brow inner left
      at(0.18, -0.30),   // 8 brow inner right
      at(0.0, -0.05),    // 9 nose bridge
      at(0.0, 0.35),     // 10 nose tip
      at(-0.16, 0.42),   // 11 nose wing left
      at(0.16, 0.42),    // 12 nose wing right
      at(-0.38, -0.12),  // 13 eye left
      at(0.38, -0.12),   // 14 eye right
      at(-0.28, 0.62),   // 15 mouth corner left
      at(0.28, 0.62),    // 16 mouth corner right
  };
  topo->left_brow = 5;
  topo->right_brow = 6;
  topo->nose_tip = 10;
  {
    std::set<int32_t> unique(topo->landmarks.begin(), topo->landmarks.end());
    require(unique.size() == topo->landmarks.size(), ErrorCode::kDegenerate,
            "landmark vertices collide at this resolution");
  }

  Rng rng(seed);
  const int D = id_dims + exp_dims;
  Eigen::MatrixXd fields(3 * V, D);
  for (int d = 0; d < D; ++d) {
    const CosineField fx = CosineField::sample(rng);
    const CosineField fy = CosineField::sample(rng);
    const CosineField fz = CosineField::sample(rng);
    for (int j = 0; j < nv; ++j) {
      const double b = 2.0 * j / (nv - 1) - 1.0;
      for (int i = 0; i < nu; ++i) {
        const double a = 2.0 * i / (nu - 1) - 1.0;
        const int v = idx(i, j);
        fields(3 * v + 0, d) = fx(a, b);
        fields(3 * v + 1, d) = fy(a, b);
        // Expression fields move the surface mostly in depth and vertically;
        // keeping them z-heavy is cosmetic, orthogonalization mixes anyway.
        fields(3 * v + 2, d) = 1.5 * fz(a, b);
      }
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(fields);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(3 * V, D);
  for (int d = 0; d < D; ++d) {
    // Deterministic sign convention: largest-magnitude entry positive.
    Eigen::Index imax;
    q.col(d).cwiseAbs().maxCoeff(&imax);
    if (q(imax, d) < 0) q.col(d) = -q.col(d);
  }
  require(q.allFinite(), ErrorCode::kDegenerate,
          "basis orthogonalization failed");

  Eigen::VectorXd id_sigma(id_dims), exp_sigma(exp_dims);
  for (int d = 0; d < id_dims; ++d) id_sigma[d] = 3.0 * std::pow(0.92, d);
  for (int d = 0; d < exp_dims; ++d) exp_sigma[d] = 1.8 * std::pow(0.85, d);

  return MorphableModel(std::move(mean), q.leftCols(id_dims),
                        q.rightCols(exp_dims), std::move(id_sigma),
                        std::move(exp_sigma), std::move(topo));
}

namespace {

constexpr char kModelMagic[4] = {'F', 'F', 'M', '1'};
constexpr uint32_t kModelVersion = 1;

void write_raw(std::ostream& os, const void* data, size_t bytes) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void read_raw(std::istream& is, void* data, size_t bytes) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  require(static_cast<size_t>(is.gcount()) == bytes, ErrorCode::kFormat,
          "model file truncated");
}

void write_f32(std::ostream& os, const Eigen::MatrixXd& m) {
  // Column-major, matching Eigen's in-memory order.
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const float v = static_cast<float>(m(r, c));
      write_raw(os, &v, sizeof(v));
    }
  }
}

Eigen::MatrixXd read_f32(std::istream& is, Eigen::Index rows,
                         Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      float v;
      read_raw(is, &v, sizeof(v));
      m(r, c) = v;
    }
  }
  return m;
}

}  // namespace

void MorphableModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::kIo, "cannot open model file for writing");
  write_raw(os, kModelMagic, sizeof(kModelMagic));
  const uint32_t version = kModelVersion;
  write_raw(os, &version, sizeof(version));
  const int32_t header[5] = {
      static_cast<int32_t>(vertex_count()), static_cast<int32_t>(id_dims()),
      static_cast<int32_t>(exp_dims()), static_cast<int32_t>(landmark_count()),
      static_cast<int32_t>(triangle_count())};
  write_raw(os, header, sizeof(header));
  const int32_t cut[3] = {topology_->left_brow, topology_->right_brow,
                          topology_->nose_tip};
  write_raw(os, cut, sizeof(cut));
  write_f32(os, mean_shape_);
  write_f32(os, id_basis_);
  write_f32(os, exp_basis_);
  write_f32(os, id_sigma_);
  write_f32(os, exp_sigma_);
  for (const auto& tri : topology_->triangles) {
    write_raw(os, tri.data(), 3 * sizeof(int32_t));
  }
  if (!topology_->landmarks.empty()) {
    write_raw(os, topology_->landmarks.data(),
              topology_->landmarks.size() * sizeof(int32_t));
  }
  os.flush();
  require(os.good(), ErrorCode::kIo, "model file write failed");
}

MorphableModel MorphableModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorCode::kIo, "cannot open model file");
  char magic[4];
  read_raw(is, magic, sizeof(magic));
  require(std::memcmp(magic, kModelMagic, sizeof(magic)) == 0,
          ErrorCode::kFormat, "not a model file");
  uint32_t version;
  read_raw(is, &version, sizeof(version));
  require(version == kModelVersion, ErrorCode::kFormat,
          "unsupported model file version");
  int32_t header[5];
  read_raw(is, header, sizeof(header));
  const int32_t V = header[0], Did = header[1], Dexp = header[2],
                L = header[3], T = header[4];
  require(V > 0 && Did > 0 && Dexp > 0 && L >= 0 && T >= 0, ErrorCode::kFormat,
          "invalid model file header");
  int32_t cut[3];
  read_raw(is, cut, sizeof(cut));
  Eigen::VectorXd mean = read_f32(is, 3 * V, 1);
  Eigen::MatrixXd id_basis = read_f32(is, 3 * V, Did);
  Eigen::MatrixXd exp_basis = read_f32(is, 3 * V, Dexp);
  Eigen::VectorXd id_sigma = read_f32(is, Did, 1);
  Eigen::VectorXd exp_sigma = read_f32(is, Dexp, 1);
  auto topo = std::make_shared<MeshTopology>();
  topo->triangles.resize(T);
  for (auto& tri : topo->triangles) {
    read_raw(is, tri.data(), 3 * sizeof(int32_t));
  }
  topo->landmarks.resize(L);
  if (L > 0) {
    read_raw(is, topo->landmarks.data(), L * sizeof(int32_t));
  }
  topo->left_brow = cut[0];
  topo->right_brow = cut[1];
  topo->nose_tip = cut[2];
  return MorphableModel(std::move(mean), std::move(id_basis),
                        std::move(exp_basis), std::move(id_sigma),
                        std::move(exp_sigma), std::move(topo));
}

std::string mesh_to_obj(const Mesh& mesh, const Eigen::MatrixX3d* colors) {
  if (colors != nullptr) {
    require(colors->rows() == mesh.vertices.rows(),
            ErrorCode::kDimensionMismatch, "color count mismatch");
  }
  std::ostringstream os;
  char line[256];
  for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v) {
    if (colors != nullptr) {
      std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g %.6g %.6g %.6g\n",
                    mesh.vertices(v, 0), mesh.vertices(v, 1),
                    mesh.vertices(v, 2), (*colors)(v, 0), (*colors)(v, 1),
                    (*colors)(v, 2));
    } else {
      std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n",
                    mesh.vertices(v, 0), mesh.vertices(v, 1),
                    mesh.vertices(v, 2));
    }
    os << line;
  }
  for (const auto& tri : mesh.topology->triangles) {
    os << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  }
  return os.str();
}

void export_mesh_obj(const Mesh& mesh, const std::string& path,
                     const Eigen::MatrixX3d* colors) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorCode::kIo, "cannot open mesh file for writing");
  os << mesh_to_obj(mesh, colors);
  os.flush();
  require(os.good(), ErrorCode::kIo, "mesh file write failed");
}

Mesh import_mesh_obj(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), ErrorCode::kIo, "cannot open mesh file");
  std::vector<std::array<double, 3>> verts;
  auto topo = std::make_shared<MeshTopology>();
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      std::array<double, 3> p;
      require(static_cast<bool>(ls >> p[0] >> p[1] >> p[2]),
              ErrorCode::kFormat, "malformed vertex line");
      verts.push_back(p);
    } else if (tag == "f") {
      std::array<int32_t, 3> tri;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        require(static_cast<bool>(ls >> tok), ErrorCode::kFormat,
                "face line needs three vertices");
        // "i", "i/t", "i/t/n", "i//n" all start with the vertex index.
        tri[k] = static_cast<int32_t>(std::stol(tok.substr(0, tok.find('/'))));
        require(tri[k] >= 1 && tri[k] <= static_cast<int32_t>(verts.size()),
                ErrorCode::kFormat, "face index out of range");
        tri[k] -= 1;
      }
      std::string extra;
      require(!(ls >> extra), ErrorCode::kFormat,
              "only triangular faces are supported");
      topo->triangles.push_back(tri);
    }
  }
  require(!verts.empty(), ErrorCode::kFormat, "mesh file has no vertices");
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t v = 0; v < verts.size(); ++v) {
    mesh.vertices.row(static_cast<Eigen::Index>(v)) =
        Eigen::RowVector3d(verts[v][0], verts[v][1], verts[v][2]);
  }
  mesh.topology = std::move(topo);
  return mesh;
}

}  // namespace facefit
