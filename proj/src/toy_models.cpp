#include <cmath>
#include <numbers>
#include <string>

#include "dogfit/bundle.hpp"
#include "dogfit/rng.hpp"

namespace dogfit {

void ModelBundle::finalize() {
  model.finalize();
  const int nj = model.num_joints();
  if (pose_prior.dim() != 3 * nj) {
    throw SchemaError("pose_prior: expected dimension " + std::to_string(3 * nj) + ", got " +
                      std::to_string(pose_prior.dim()));
  }
  if (shape_prior.dim() != model.num_shapes()) {
    throw SchemaError("shape_prior: expected dimension " + std::to_string(model.num_shapes()) + ", got " +
                      std::to_string(shape_prior.dim()));
  }
  if (keypoint_joints.empty()) throw SchemaError("keypoint_joints: empty");
  for (std::size_t k = 0; k < keypoint_joints.size(); ++k) {
    if (keypoint_joints[k] < 0 || keypoint_joints[k] >= nj) {
      throw SchemaError("keypoint_joints[" + std::to_string(k) + "]: joint out of range");
    }
  }
  groups.validate(num_keypoints());
}

namespace {

// Accumulates vertices, faces, weights and basis columns by name.
struct Builder {
  ModelBundle b;
  std::vector<std::vector<std::pair<int, Vec3d>>> basis;  // per shape: (vertex, displacement)

  int vertex(double x, double y, double z, int joint) {
    b.model.rest_vertices.push_back({x, y, z});
    b.model.skin_weights.push_back({{joint, 1.0}});
    return static_cast<int>(b.model.rest_vertices.size()) - 1;
  }
  int joint(const std::string& name, int parent, std::vector<int> from) {
    b.model.joint_names.push_back(name);
    b.model.parents.push_back(parent);
    std::vector<SparseEntry> row;
    for (int v : from) row.push_back({v, 1.0 / static_cast<double>(from.size())});
    b.model.joint_regressor.push_back(row);
    return static_cast<int>(b.model.parents.size()) - 1;
  }
  void face(int a, int c, int d) { b.model.faces.push_back({a, c, d}); }
  void quad(int a, int c, int d, int e) {
    face(a, c, d);
    face(a, d, e);
  }
  void displace(int shape, int v, Vec3d d) { basis[shape].push_back({v, d}); }

  void build_basis() {
    const int nv = b.model.num_vertices();
    b.model.blend_basis = Eigen::MatrixXd::Zero(3 * nv, static_cast<Eigen::Index>(basis.size()));
    for (std::size_t s = 0; s < basis.size(); ++s) {
      for (const auto& [v, d] : basis[s]) {
        for (int a = 0; a < 3; ++a) b.model.blend_basis(3 * v + a, static_cast<Eigen::Index>(s)) += d[a];
      }
    }
  }
};

GaussianPrior pose_prior_for(int num_joints, int root, double root_std, double joint_std) {
  Eigen::VectorXd var = Eigen::VectorXd::Constant(3 * num_joints, joint_std * joint_std);
  for (int a = 0; a < 3; ++a) var[3 * root + a] = root_std * root_std;
  return GaussianPrior(Eigen::VectorXd::Zero(3 * num_joints), var.asDiagonal().toDenseMatrix());
}

GaussianPrior identity_prior(int dim) {
  return GaussianPrior(Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim));
}

}  // namespace

// x forward, y down, z to the dog's left. A side view looks down +z.
ModelBundle make_toy_quadruped() {
  Builder t;
  t.b.name = "toy_quadruped";
  t.basis.resize(4);
  constexpr double kShape = 0.12;
  enum { kBelly = 0, kLength = 1, kThickness = 2, kBack = 3 };

  // Body box, all skinned to the root (joint 0, created below with these vertices).
  int body[8];
  int n = 0;
  for (double x : {-1.0, 1.0}) {
    for (double y : {-0.3, 0.3}) {
      for (double z : {-0.3, 0.3}) {
        body[n] = t.vertex(x, y, z, 0);
        t.displace(kLength, body[n], {0.2 * x, 0.0, 0.0});
        if (y > 0) t.displace(kBelly, body[n], {0.0, kShape, 0.0});
        if (y < 0) t.displace(kBack, body[n], {0.0, -kShape, 0.0});
        ++n;
      }
    }
  }
  // body[(ix * 2 + iy) * 2 + iz]
  auto bv = [&](int ix, int iy, int iz) { return body[(ix * 2 + iy) * 2 + iz]; };
  t.joint("root", -1, std::vector<int>(body, body + 8));
  t.quad(bv(0, 0, 0), bv(1, 0, 0), bv(1, 1, 0), bv(0, 1, 0));
  t.quad(bv(0, 0, 1), bv(1, 0, 1), bv(1, 1, 1), bv(0, 1, 1));
  t.quad(bv(0, 0, 0), bv(1, 0, 0), bv(1, 0, 1), bv(0, 0, 1));
  t.quad(bv(0, 1, 0), bv(1, 1, 0), bv(1, 1, 1), bv(0, 1, 1));
  t.quad(bv(0, 0, 0), bv(0, 1, 0), bv(0, 1, 1), bv(0, 0, 1));
  t.quad(bv(1, 0, 0), bv(1, 1, 0), bv(1, 1, 1), bv(1, 0, 1));

  struct LegSpec {
    const char* name;
    double x, z;
  };
  const LegSpec legs[4] = {{"front_left", 0.8, 0.25}, {"front_right", 0.8, -0.25},
                           {"back_left", -0.8, 0.25}, {"back_right", -0.8, -0.25}};
  std::vector<int> hips;
  std::vector<int> keypoints;
  for (const LegSpec& leg : legs) {
    const std::string nm = leg.name;
    const double fwd = leg.x > 0 ? 1.0 : -1.0;
    // Joints are created after their vertices; indices are known in advance.
    const int hip = t.b.model.num_joints();
    const int knee = hip + 1;
    const int ankle = hip + 2;
    const int toe = hip + 3;
    const int h0 = t.vertex(leg.x - 0.1, 0.3, leg.z, hip);
    const int h1 = t.vertex(leg.x + 0.1, 0.3, leg.z, hip);
    const int k0 = t.vertex(leg.x - 0.08, 0.7, leg.z, hip);
    const int k1 = t.vertex(leg.x + 0.08, 0.7, leg.z, hip);
    const int a0 = t.vertex(leg.x - 0.06, 1.1, leg.z, knee);
    const int a1 = t.vertex(leg.x + 0.06, 1.1, leg.z, knee);
    const int tv = t.vertex(leg.x + 0.15, 1.2, leg.z, ankle);
    t.joint(nm + "_hip", 0, {h0, h1});
    t.joint(nm + "_knee", hip, {k0, k1});
    t.joint(nm + "_ankle", knee, {a0, a1});
    t.joint(nm + "_toe", ankle, {tv});
    (void)toe;
    for (int v : {h0, h1, k0, k1, a0, a1, tv}) t.displace(kLength, v, {0.2 * fwd, 0.0, 0.0});
    // Thickness scales each half-width by (1 + 0.15 beta).
    for (auto [v, half] : {std::pair{h0, -0.1}, {h1, 0.1}, {k0, -0.08}, {k1, 0.08}, {a0, -0.06}, {a1, 0.06}}) {
      t.displace(kThickness, v, {0.15 * half, 0.0, 0.0});
    }
    t.quad(h0, h1, k1, k0);
    t.quad(k0, k1, a1, a0);
    t.face(a0, a1, tv);
    hips.push_back(hip);
    keypoints.insert(keypoints.end(), {knee, ankle, toe});
  }

  // Tail hangs off the back top edge.
  const int tail_base = t.b.model.num_joints();
  const int tail_tip = tail_base + 1;
  const int t0 = t.vertex(-1.0, -0.25, 0.0, 0);
  const int t1 = t.vertex(-1.0, -0.05, 0.0, 0);
  const int tt = t.vertex(-1.6, -0.6, 0.0, tail_base);
  t.joint("tail_base", 0, {t0, t1});
  t.joint("tail_tip", tail_base, {tt});
  t.face(t0, t1, tt);
  for (int v : {t0, t1, tt}) {
    t.displace(kLength, v, {-0.2, 0.0, 0.0});
    t.displace(kBack, v, {0.0, -kShape, 0.0});
  }

  // Neck, head, snout.
  const int neck = t.b.model.num_joints();
  const int head = neck + 1;
  const int nose = neck + 2;
  const int jaw = neck + 3;
  const int h0 = t.vertex(1.15, -0.8, 0.0, neck);
  const int h1 = t.vertex(1.45, -0.8, 0.0, neck);
  const int h2 = t.vertex(1.15, -0.4, 0.0, neck);
  const int h3 = t.vertex(1.45, -0.4, 0.0, neck);
  const int nv = t.vertex(1.75, -0.5, 0.0, head);
  const int jv = t.vertex(1.55, -0.3, 0.0, head);
  t.joint("neck", 0, {bv(1, 0, 0), bv(1, 0, 1)});
  t.joint("head", neck, {h0, h1, h2, h3});
  t.joint("nose", head, {nv});
  t.joint("jaw", head, {jv});
  t.quad(h0, h1, h3, h2);
  t.face(h1, nv, h3);
  t.face(h3, jv, h2);
  t.face(bv(1, 0, 1), h2, h3);
  t.face(bv(1, 0, 1), bv(1, 1, 1), h3);

  // Ears on top of the head.
  const int ears_begin = t.b.model.num_joints();
  std::vector<int> ear_bases;
  std::vector<int> head_verts = {h0, h1, h2, h3, nv, jv};
  for (double z : {0.12, -0.12}) {
    const std::string side = z > 0 ? "left" : "right";
    const int base = t.b.model.num_joints();
    const int bvtx = t.vertex(1.3, -0.85, z, head);
    const int tvtx = t.vertex(1.25, -1.1, z, base);
    t.joint(side + "_ear_base", head, {bvtx});
    t.joint(side + "_ear_tip", base, {tvtx});
    t.face(bvtx, tvtx, h1);
    head_verts.insert(head_verts.end(), {bvtx, tvtx});
    ear_bases.push_back(base);
    keypoints.insert(keypoints.end(), {base, base + 1});
  }
  (void)ears_begin;
  for (int v : head_verts) {
    t.displace(kLength, v, {0.2, 0.0, 0.0});
    t.displace(kBack, v, {0.0, -kShape, 0.0});
  }
  keypoints.insert(keypoints.begin() + 12, {tail_base, tail_tip});
  keypoints.insert(keypoints.end(), {nose, jaw});

  t.build_basis();
  TemplateModel& m = t.b.model;
  ScaleGroup legs_g{"legs", {}};
  for (int h : hips) legs_g.entries.push_back({h, 1});
  m.scale_groups = {legs_g,
                    {"tail", {{tail_base, 0}}},
                    {"ears", {{ear_bases[0], 1}, {ear_bases[1], 1}}},
                    {"neck", {{neck, 0}}},
                    {"snout", {{head, 0}}},
                    {"torso_width", {{0, 2}}}};
  m.symmetric_joint_pairs = {{1, 5}, {2, 6}, {3, 7}, {4, 8}, {9, 13}, {10, 14}, {11, 15}, {12, 16},
                             {ear_bases[0], ear_bases[1]}, {ear_bases[0] + 1, ear_bases[1] + 1}};
  t.b.keypoint_joints = keypoints;
  t.b.groups = default_joint_groups();
  t.b.pose_prior = pose_prior_for(m.num_joints(), 0, 1.0, 0.2);
  t.b.shape_prior = identity_prior(4);
  t.b.finalize();
  return t.b;
}

// Four joints along x, three vertices around each.
ModelBundle make_toy_chain() {
  Builder t;
  t.b.name = "toy_chain";
  t.basis.resize(2);
  std::vector<int> ring[4];
  for (int j = 0; j < 4; ++j) {
    const double x = static_cast<double>(j);
    const int skin_to = j == 0 ? 0 : j - 1;
    ring[j] = {t.vertex(x, -0.2, 0.0, skin_to), t.vertex(x, 0.2, 0.0, skin_to), t.vertex(x, 0.0, 0.2, skin_to)};
    t.joint("j" + std::to_string(j), j - 1, ring[j]);
    for (int v : ring[j]) t.displace(0, v, {0.0, v % 3 == 0 ? -0.05 : (v % 3 == 1 ? 0.05 : 0.0), 0.0});
    t.displace(1, ring[j][2], {0.0, 0.0, 0.05 * x});
  }
  for (int j = 0; j + 1 < 4; ++j) t.quad(ring[j][0], ring[j + 1][0], ring[j + 1][1], ring[j][1]);
  t.build_basis();
  t.b.model.scale_groups = {{"middle", {{1, 0}}}};
  t.b.keypoint_joints = {1, 2, 3};
  t.b.groups = {{"all"}, {{0, 1, 2}}};
  t.b.pose_prior = pose_prior_for(4, 0, 1.0, 0.3);
  t.b.shape_prior = identity_prior(2);
  t.b.finalize();
  return t.b;
}

// Spine with legs, tail, neck/head and ears: 35 joints. Vertices are scattered
// around each bone and skinned to its two end joints.
ModelBundle make_dog_scale_model(std::uint64_t seed) {
  Rng rng(seed);
  ModelBundle b;
  b.name = "dog_scale";
  TemplateModel& m = b.model;
  std::vector<Vec3d> jpos;
  auto add_joint = [&](const std::string& name, int parent, Vec3d pos) {
    m.joint_names.push_back(name);
    m.parents.push_back(parent);
    jpos.push_back(pos);
    return static_cast<int>(jpos.size()) - 1;
  };
  int prev = add_joint("root", -1, {0.0, 0.0, 0.0});
  std::vector<int> spine = {prev};
  for (int i = 1; i <= 6; ++i) spine.push_back(prev = add_joint("spine" + std::to_string(i), prev, {0.2 * i, 0.0, 0.0}));
  std::vector<int> hip_joints;
  for (int leg = 0; leg < 4; ++leg) {
    const int attach = leg < 2 ? spine[5] : spine[0];
    const double z = leg % 2 == 0 ? 0.25 : -0.25;
    const Vec3d base = jpos[attach];
    int p = add_joint("leg" + std::to_string(leg) + "_hip", attach, {base[0], 0.3, z});
    hip_joints.push_back(p);
    for (int s = 1; s <= 3; ++s) p = add_joint("leg" + std::to_string(leg) + "_" + std::to_string(s), p, {base[0], 0.3 + 0.35 * s, z});
  }
  prev = spine[0];
  for (int i = 1; i <= 6; ++i) prev = add_joint("tail" + std::to_string(i), prev, {-0.25 * i, -0.1 * i, 0.0});
  prev = spine[6];
  const int tail_base = 23;
  const int tail_tip = 28;
  prev = add_joint("neck", prev, {1.4, -0.3, 0.0});
  const int head = prev = add_joint("head", prev, {1.6, -0.5, 0.0});
  add_joint("nose", head, {1.9, -0.45, 0.0});
  add_joint("jaw", head, {1.75, -0.3, 0.0});
  const int ear_l = add_joint("ear_left", head, {1.6, -0.75, 0.1});
  const int ear_r = add_joint("ear_right", head, {1.6, -0.75, -0.1});
  const int nj = m.num_joints();

  constexpr int kVertices = 3889;
  std::vector<std::vector<int>> near(nj);
  for (int v = 0; v < kVertices; ++v) {
    int j = v % nj;
    const int p = m.parents[j] < 0 ? j : m.parents[j];
    const double t = rng.uniform();
    Vec3d x;
    for (int a = 0; a < 3; ++a) x[a] = jpos[p][a] + t * (jpos[j][a] - jpos[p][a]) + 0.05 * rng.normal();
    m.rest_vertices.push_back(x);
    if (p == j) {
      m.skin_weights.push_back({{j, 1.0}});
    } else {
      m.skin_weights.push_back({{p, 1.0 - t}, {j, t}});
    }
    near[j].push_back(v);
  }
  // Each joint is the mean of the vertices scattered around its bone.
  for (int j = 0; j < nj; ++j) {
    std::vector<SparseEntry> row;
    const auto& vs = near[j];
    for (int v : vs) row.push_back({v, 1.0 / static_cast<double>(vs.size())});
    m.joint_regressor.push_back(row);
  }
  for (int v = 0; v + 2 < kVertices; v += 3) m.faces.push_back({v, v + 1, v + 2});
  m.blend_basis = Eigen::MatrixXd::Zero(3 * kVertices, 20);
  for (int s = 0; s < 20; ++s) {
    for (int r = 0; r < 3 * kVertices; ++r) m.blend_basis(r, s) = 0.01 * rng.normal();
  }
  ScaleGroup legs{"legs", {}};
  for (int h : hip_joints) legs.entries.push_back({h, 1});
  m.scale_groups = {legs,
                    {"tail", {{tail_base, 0}}},
                    {"ears", {{ear_l, 1}, {ear_r, 1}}},
                    {"neck", {{spine[6], 0}}},
                    {"snout", {{head, 0}}},
                    {"torso_width", {{0, 2}}}};
  b.pose_prior = pose_prior_for(nj, 0, 1.0, 0.2);
  b.shape_prior = identity_prior(20);
  b.keypoint_joints.clear();
  for (int leg = 0; leg < 4; ++leg) {
    for (int s = 1; s <= 3; ++s) b.keypoint_joints.push_back(hip_joints[leg] + s);
  }
  b.keypoint_joints.insert(b.keypoint_joints.end(), {tail_base, tail_tip, ear_l, ear_r, head - 1, spine[6], head + 1, head + 2});
  b.groups = default_joint_groups();
  b.finalize();
  return b;
}

}  // namespace dogfit
