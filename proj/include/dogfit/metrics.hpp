#pragma once

// Evaluation: silhouette IoU and PCK normalized by sqrt(silhouette area).

#include <span>
#include <string>
#include <vector>

#include "dogfit/geometry.hpp"
#include "dogfit/render.hpp"

namespace dogfit {

struct Annotation;

// Named partition of the K keypoints.
struct JointGroups {
  std::vector<std::string> names;
  std::vector<std::vector<int>> members;

  int size() const { return static_cast<int>(names.size()); }
  // Disjoint, in range and covering all of [0, K).
  void validate(int num_keypoints) const;
  // Group index of every keypoint.
  std::vector<int> group_of(int num_keypoints) const;
};

// legs 0..11 (knee, ankle, toe per leg), tail 12..13, ears 14..17, face 18..19.
JointGroups default_joint_groups();

// |pred & gt| / |pred | gt|, 1 when both are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

struct PckResult {
  double overall = 0.0;              // percent of visible keypoints within threshold
  std::vector<double> per_group;     // percent, 0 for groups without visible keypoints
  std::vector<int> visible_per_group;
  int visible = 0;
  int correct = 0;
};

// Keypoint k counts iff visible and ||pred_k - gt_k|| <= tau * sqrt(area).
PckResult pck(std::span<const Vec2d> predicted, std::span<const Vec2d> target, const std::vector<bool>& visible,
              const BinaryMask& silhouette, const JointGroups& groups, double tau);
PckResult pck(std::span<const Vec2d> predicted, const Annotation& ann, const JointGroups& groups, double tau);

}  // namespace dogfit
