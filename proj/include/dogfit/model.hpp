#pragma once

// Skinned multi-part quadruped template and its evaluation pipeline:
//   shape_deform -> regress rest joints -> apply_scale -> forward_kinematics -> LBS.
// Every stage is templated on the scalar so it can run on plain doubles or be
// recorded on an ad::Tape.

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dogfit/errors.hpp"
#include "dogfit/geometry.hpp"

namespace dogfit {

struct SparseEntry {
  int col;
  double value;
};
using SparseRows = std::vector<std::vector<SparseEntry>>;

struct ScaleEntry {
  int joint;
  int axis;  // 0 = x, 1 = y, 2 = z
};

struct ScaleGroup {
  std::string name;
  std::vector<ScaleEntry> entries;
};

struct TemplateModel {
  std::vector<Vec3d> rest_vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<int> parents;  // root has parent -1
  std::vector<std::string> joint_names;
  SparseRows joint_regressor;  // one row per joint, columns index vertices
  SparseRows skin_weights;     // one row per vertex, columns index joints
  Eigen::MatrixXd blend_basis;  // (3 * num_vertices) x num_shapes, row 3*v + axis
  std::vector<ScaleGroup> scale_groups;
  std::vector<std::pair<int, int>> symmetric_joint_pairs;  // diagnostics only

  // Filled by finalize().
  std::vector<int> topological_order;
  std::vector<std::array<int, 3>> joint_axis_group;  // scale group index or -1

  int num_vertices() const { return static_cast<int>(rest_vertices.size()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_shapes() const { return static_cast<int>(blend_basis.cols()); }
  int num_scale_groups() const { return static_cast<int>(scale_groups.size()); }
  int root() const { return topological_order.empty() ? -1 : topological_order.front(); }

  // Checks every structural invariant and builds the derived tables. Throws
  // SchemaError naming the offending field, row or entry.
  void finalize();
};

template <class T>
struct BasicParamState {
  std::vector<T> pose;       // 3 per joint, axis-angle radians; root entry is the global rotation
  std::vector<T> shape;      // blendshape coefficients
  std::vector<T> log_scale;  // one per scale group; kappa = exp(log_scale)
  Vec3<T> translation{};
  T focal_length{};
};
using ParamState = BasicParamState<double>;

ParamState zero_params(const TemplateModel& model, double focal_length = 1.0,
                       Vec3d translation = {0.0, 0.0, 1.0});

// Sizes, finiteness, f > 0 and t_z > 0.
void validate_params(const TemplateModel& model, const ParamState& params);

template <class T>
struct PosedMesh {
  std::vector<Vec3<T>> vertices;
  std::vector<Vec3<T>> joints;
  // Global pose transform of each joint applied to the scaled rest skeleton.
  std::vector<RigidTransform<T>> joint_transforms;
};

template <class T>
struct BasicScaledRest {
  std::vector<Vec3<T>> vertices;
  std::vector<Vec3<T>> joints;
};

// ---------------------------------------------------------------------------

template <class T>
Mat3<T> rodrigues(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  for (const T& c : w) {
    if (!std::isfinite(value(c))) throw InvalidParameter("rodrigues: non-finite axis-angle");
  }
  // K = [w]_x
  const Mat3<T> k = {T(0.0), -w[2], w[1], w[2], T(0.0), -w[0], -w[1], w[0], T(0.0)};
  const Mat3<T> k2 = matmul(k, k);
  const double theta2 = value(w[0]) * value(w[0]) + value(w[1]) * value(w[1]) + value(w[2]) * value(w[2]);
  Mat3<T> r = identity3<T>();
  if (theta2 < 1e-16) {
    for (int i = 0; i < 9; ++i) r[i] = r[i] + k[i] + 0.5 * k2[i];
    return r;
  }
  const T theta = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  const T a = sin(theta) / theta;
  const T hs = sin(0.5 * theta) / theta;
  const T b = 2.0 * hs * hs;  // (1 - cos theta) / theta^2
  for (int i = 0; i < 9; ++i) r[i] = r[i] + a * k[i] + b * k2[i];
  return r;
}

// Inverse of rodrigues on doubles, angle in [0, pi].
Vec3d rotation_to_axis_angle(const Mat3d& r);

template <class T>
std::vector<Vec3<T>> shape_deform(const TemplateModel& model, std::span<const T> shape) {
  if (static_cast<int>(shape.size()) != model.num_shapes()) {
    throw DimensionMismatch("shape_deform: expected " + std::to_string(model.num_shapes()) +
                            " coefficients, got " + std::to_string(shape.size()));
  }
  const int nv = model.num_vertices();
  std::vector<Vec3<T>> out(nv);
  std::vector<double> row(shape.size());
  for (int v = 0; v < nv; ++v) {
    for (int a = 0; a < 3; ++a) {
      for (std::size_t k = 0; k < shape.size(); ++k) row[k] = model.blend_basis(3 * v + a, k);
      out[v][a] = model.rest_vertices[v][a] + weighted_sum<T>(shape, row);
    }
  }
  return out;
}

template <class T>
std::vector<Vec3<T>> regress_joints(const TemplateModel& model, std::span<const Vec3<T>> vertices) {
  std::vector<Vec3<T>> joints(model.num_joints());
  std::vector<T> xs;
  std::vector<double> ws;
  for (int j = 0; j < model.num_joints(); ++j) {
    for (int a = 0; a < 3; ++a) {
      xs.clear();
      ws.clear();
      for (const SparseEntry& e : model.joint_regressor[j]) {
        xs.push_back(vertices[e.col][a]);
        ws.push_back(e.value);
      }
      joints[j][a] = weighted_sum<T>(xs, ws);
    }
  }
  return joints;
}

namespace detail {

// Blends per-joint displacements d_j(x) with the skin weights of vertex v and
// adds them to x. Exact identity when every displacement is zero.
template <class T, class Disp>
Vec3<T> blend_displacement(const TemplateModel& model, int v, const Vec3<T>& x, Disp&& disp) {
  Vec3<T> out = x;
  const auto& row = model.skin_weights[v];
  if (row.empty()) return out;
  std::vector<T> xs(row.size());
  std::vector<double> ws(row.size());
  std::vector<Vec3<T>> ds(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    ds[i] = disp(row[i].col, x);
    ws[i] = row[i].value;
  }
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < row.size(); ++i) xs[i] = ds[i][a];
    out[a] = out[a] + weighted_sum<T>(xs, ws);
  }
  return out;
}

}  // namespace detail

// Per-part scaling applied to the rest mesh. Joint j carries a diagonal scale
// S_j (axes listed by the scale groups, 1 elsewhere) acting on j's subtree in
// the rest-aligned frame, composed down the kinematic tree:
//   D_j = D_parent * S_j,  P_j = P_parent + D_parent * (j_rest - parent_rest).
// Vertices move by the skin-weighted blend of x -> P_j + D_j * (x - j_rest).
template <class T>
BasicScaledRest<T> apply_scale(const TemplateModel& model, std::span<const Vec3<T>> rest_vertices,
                               std::span<const Vec3<T>> rest_joints, std::span<const T> kappa) {
  if (static_cast<int>(kappa.size()) != model.num_scale_groups()) {
    throw DimensionMismatch("apply_scale: expected " + std::to_string(model.num_scale_groups()) +
                            " scale factors, got " + std::to_string(kappa.size()));
  }
  for (std::size_t g = 0; g < kappa.size(); ++g) {
    if (!(value(kappa[g]) > 0.0) || !std::isfinite(value(kappa[g]))) {
      throw InvalidParameter("apply_scale: scale factor " + std::to_string(g) + " (" +
                             model.scale_groups[g].name + ") must be positive");
    }
  }
  const int nj = model.num_joints();
  std::vector<Vec3<T>> diag(nj);
  std::vector<Vec3<T>> offset(nj);  // P_j - j_rest
  for (int j : model.topological_order) {
    Vec3<T> own = {T(1.0), T(1.0), T(1.0)};
    for (int a = 0; a < 3; ++a) {
      const int g = model.joint_axis_group[j][a];
      if (g >= 0) own[a] = kappa[g];
    }
    const int p = model.parents[j];
    if (p < 0) {
      diag[j] = own;
      offset[j] = {T(0.0), T(0.0), T(0.0)};
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      diag[j][a] = diag[p][a] * own[a];
      const T bone = rest_joints[j][a] - rest_joints[p][a];
      offset[j][a] = offset[p][a] + (diag[p][a] - 1.0) * bone;
    }
  }
  BasicScaledRest<T> out;
  out.joints.resize(nj);
  for (int j = 0; j < nj; ++j) out.joints[j] = add(rest_joints[j], offset[j]);
  out.vertices.resize(rest_vertices.size());
  for (std::size_t v = 0; v < rest_vertices.size(); ++v) {
    out.vertices[v] = detail::blend_displacement<T>(
        model, static_cast<int>(v), rest_vertices[v], [&](int j, const Vec3<T>& x) {
          Vec3<T> d;
          for (int a = 0; a < 3; ++a) d[a] = offset[j][a] + (diag[j][a] - 1.0) * (x[a] - rest_joints[j][a]);
          return d;
        });
  }
  return out;
}

// G_root = [R(theta_root) | j_root];
// G_j = G_parent * T(j_rest - parent_rest) * R(theta_j).
template <class T>
std::vector<RigidTransform<T>> forward_kinematics(const TemplateModel& model, std::span<const T> pose,
                                                  std::span<const Vec3<T>> rest_joints) {
  const int nj = model.num_joints();
  if (static_cast<int>(pose.size()) != 3 * nj) {
    throw DimensionMismatch("forward_kinematics: expected " + std::to_string(3 * nj) +
                            " pose entries, got " + std::to_string(pose.size()));
  }
  if (static_cast<int>(rest_joints.size()) != nj) {
    throw DimensionMismatch("forward_kinematics: rest joint count mismatch");
  }
  std::vector<RigidTransform<T>> g(nj);
  for (int j : model.topological_order) {
    const Mat3<T> local = rodrigues<T>({pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]});
    const int p = model.parents[j];
    if (p < 0) {
      g[j] = {local, rest_joints[j]};
      continue;
    }
    const Vec3<T> bone = sub(rest_joints[j], rest_joints[p]);
    // translation = j_rest + (t_p - p_rest) + (R_p - I) * bone
    const Vec3<T> moved = sub(g[p].translation, rest_joints[p]);
    g[j].translation = add(add(rest_joints[j], moved), matvec_minus_identity(g[p].rotation, bone));
    g[j].rotation = matmul(g[p].rotation, local);
  }
  return g;
}

template <class T>
PosedMesh<T> skin(const TemplateModel& model, const BasicParamState<T>& params) {
  using std::exp;
  const std::vector<Vec3<T>> shaped = shape_deform<T>(model, params.shape);
  const std::vector<Vec3<T>> joints = regress_joints<T>(model, shaped);
  std::vector<T> kappa(params.log_scale.size());
  for (std::size_t g = 0; g < kappa.size(); ++g) kappa[g] = exp(params.log_scale[g]);
  const BasicScaledRest<T> scaled = apply_scale<T>(model, shaped, joints, kappa);
  PosedMesh<T> out;
  out.joint_transforms = forward_kinematics<T>(model, params.pose, scaled.joints);
  const auto& g = out.joint_transforms;
  out.joints.resize(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) out.joints[j] = g[j].translation;
  out.vertices.resize(scaled.vertices.size());
  for (std::size_t v = 0; v < scaled.vertices.size(); ++v) {
    // x -> x + sum_j w_j [ (R_j - I)(x - P_j) + (t_j - P_j) ]
    out.vertices[v] = detail::blend_displacement<T>(
        model, static_cast<int>(v), scaled.vertices[v], [&](int j, const Vec3<T>& x) {
          const Vec3<T> local = sub(x, scaled.joints[j]);
          return add(matvec_minus_identity(g[j].rotation, local), sub(g[j].translation, scaled.joints[j]));
        });
  }
  return out;
}

}  // namespace dogfit
