#include "dogfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dogfit {

namespace {

std::string where(const char* field, int row) { return std::string(field) + "[" + std::to_string(row) + "]"; }

void check_stochastic_rows(const SparseRows& rows, const char* field, int num_cols, bool non_negative) {
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    double sum = 0.0;
    for (const SparseEntry& e : rows[r]) {
      if (e.col < 0 || e.col >= num_cols) {
        throw SchemaError(where(field, r) + ": column " + std::to_string(e.col) + " out of range");
      }
      if (!std::isfinite(e.value)) throw SchemaError(where(field, r) + ": non-finite entry");
      if (non_negative && e.value < 0.0) {
        throw SchemaError(where(field, r) + ": negative weight " + std::to_string(e.value));
      }
      sum += e.value;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw SchemaError(where(field, r) + ": row sums to " + std::to_string(sum) + ", expected 1");
    }
  }
}

}  // namespace

void TemplateModel::finalize() {
  const int nv = num_vertices();
  const int nj = num_joints();
  if (nv == 0) throw SchemaError("rest_vertices: empty");
  if (nj == 0) throw SchemaError("kintree_parents: empty");
  for (int v = 0; v < nv; ++v) {
    for (double c : rest_vertices[v]) {
      if (!std::isfinite(c)) throw SchemaError(where("rest_vertices", v) + ": non-finite");
    }
  }
  for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= nv) throw SchemaError(where("faces", f) + ": vertex index out of range");
    }
  }
  if (!joint_names.empty() && static_cast<int>(joint_names.size()) != nj) {
    throw SchemaError("joint_names: expected " + std::to_string(nj) + " names");
  }

  // Single rooted tree: exactly one root, every joint reachable from it.
  int root_joint = -1;
  std::vector<std::vector<int>> children(nj);
  for (int j = 0; j < nj; ++j) {
    const int p = parents[j];
    if (p < 0) {
      if (root_joint >= 0) throw SchemaError(where("kintree_parents", j) + ": second root");
      root_joint = j;
    } else if (p >= nj || p == j) {
      throw SchemaError(where("kintree_parents", j) + ": invalid parent " + std::to_string(p));
    } else {
      children[p].push_back(j);
    }
  }
  if (root_joint < 0) throw SchemaError("kintree_parents: no root");
  topological_order.clear();
  topological_order.push_back(root_joint);
  for (std::size_t i = 0; i < topological_order.size(); ++i) {
    for (int c : children[topological_order[i]]) topological_order.push_back(c);
  }
  if (static_cast<int>(topological_order.size()) != nj) {
    throw SchemaError("kintree_parents: cycle or disconnected joints");
  }

  if (static_cast<int>(joint_regressor.size()) != nj) {
    throw SchemaError("joint_regressor: expected " + std::to_string(nj) + " rows");
  }
  if (static_cast<int>(skin_weights.size()) != nv) {
    throw SchemaError("skin_weights: expected " + std::to_string(nv) + " rows");
  }
  check_stochastic_rows(joint_regressor, "joint_regressor", nv, false);
  check_stochastic_rows(skin_weights, "skin_weights", nj, true);

  if (blend_basis.rows() != 3 * nv) {
    throw SchemaError("blend_basis: expected " + std::to_string(3 * nv) + " rows, got " +
                      std::to_string(blend_basis.rows()));
  }
  if (!blend_basis.allFinite()) throw SchemaError("blend_basis: non-finite entry");

  joint_axis_group.assign(nj, {-1, -1, -1});
  for (int g = 0; g < num_scale_groups(); ++g) {
    for (const ScaleEntry& e : scale_groups[g].entries) {
      if (e.joint < 0 || e.joint >= nj || e.axis < 0 || e.axis > 2) {
        throw SchemaError("scale_groups[" + scale_groups[g].name + "]: invalid entry");
      }
      int& slot = joint_axis_group[e.joint][e.axis];
      if (slot >= 0) {
        throw SchemaError("scale_groups[" + scale_groups[g].name + "]: joint " + std::to_string(e.joint) +
                          " axis " + std::to_string(e.axis) + " already in group " +
                          scale_groups[slot].name);
      }
      slot = g;
    }
  }
  for (const auto& [a, b] : symmetric_joint_pairs) {
    if (a < 0 || a >= nj || b < 0 || b >= nj) throw SchemaError("symmetric_joint_pairs: index out of range");
  }
}

ParamState zero_params(const TemplateModel& model, double focal_length, Vec3d translation) {
  ParamState p;
  p.pose.assign(3 * model.num_joints(), 0.0);
  p.shape.assign(model.num_shapes(), 0.0);
  p.log_scale.assign(model.num_scale_groups(), 0.0);
  p.translation = translation;
  p.focal_length = focal_length;
  return p;
}

void validate_params(const TemplateModel& model, const ParamState& params) {
  if (static_cast<int>(params.pose.size()) != 3 * model.num_joints()) {
    throw DimensionMismatch("params.pose: expected " + std::to_string(3 * model.num_joints()) + " entries");
  }
  if (static_cast<int>(params.shape.size()) != model.num_shapes()) {
    throw DimensionMismatch("params.shape: expected " + std::to_string(model.num_shapes()) + " entries");
  }
  if (static_cast<int>(params.log_scale.size()) != model.num_scale_groups()) {
    throw DimensionMismatch("params.log_scale: expected " + std::to_string(model.num_scale_groups()) +
                            " entries");
  }
  auto finite = [](const auto& xs) { return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); }); };
  if (!finite(params.pose) || !finite(params.shape) || !finite(params.log_scale) || !finite(params.translation) ||
      !std::isfinite(params.focal_length)) {
    throw InvalidParameter("params: non-finite entry");
  }
  if (!(params.focal_length > 0.0)) throw InvalidParameter("params.focal_length must be positive");
  if (!(params.translation[2] > 0.0)) throw InvalidParameter("params.translation: depth must be positive");
}

Vec3d rotation_to_axis_angle(const Mat3d& r) {
  const double trace = r[0] + r[4] + r[8];
  const double cos_theta = std::clamp(0.5 * (trace - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3d skew = {r[7] - r[5], r[2] - r[6], r[3] - r[1]};
  if (theta < 1e-6) {
    return {0.5 * skew[0], 0.5 * skew[1], 0.5 * skew[2]};
  }
  if (std::numbers::pi - theta > 1e-6) {
    const double s = theta / (2.0 * std::sin(theta));
    return {s * skew[0], s * skew[1], s * skew[2]};
  }
  // Near pi: axis from the diagonal of (R + I) / 2 = a a^T.
  int k = 0;
  if (r[4] > r[0]) k = 1;
  if (r[8] > r[3 * k + k]) k = 2;
  Vec3d axis;
  axis[k] = std::sqrt(std::max(0.0, 0.5 * (r[3 * k + k] + 1.0)));
  for (int i = 0; i < 3; ++i) {
    if (i != k) axis[i] = 0.5 * (r[3 * i + k] + r[3 * k + i]) / (2.0 * axis[k]);
  }
  const double n = norm(axis);
  // Resolve the sign with the (small) skew part when it is informative.
  const double sign = (skew[0] * axis[0] + skew[1] * axis[1] + skew[2] * axis[2]) < 0.0 ? -1.0 : 1.0;
  return {sign * theta * axis[0] / n, sign * theta * axis[1] / n, sign * theta * axis[2] / n};
}

}  // namespace dogfit
