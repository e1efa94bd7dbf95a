#include "dogfit/metrics.hpp"

#include <cmath>
#include <string>

#include "dogfit/errors.hpp"
#include "dogfit/losses.hpp"

namespace dogfit {

void JointGroups::validate(int num_keypoints) const {
  if (names.size() != members.size()) throw SchemaError("joint_groups: names and members differ in length");
  std::vector<int> seen(num_keypoints, 0);
  for (std::size_t g = 0; g < members.size(); ++g) {
    for (int k : members[g]) {
      if (k < 0 || k >= num_keypoints) {
        throw SchemaError("joint_groups: group '" + names[g] + "' has keypoint " + std::to_string(k) + " out of range");
      }
      if (seen[k]++) throw SchemaError("joint_groups: keypoint " + std::to_string(k) + " is in more than one group");
    }
  }
  for (int k = 0; k < num_keypoints; ++k) {
    if (!seen[k]) throw SchemaError("joint_groups: keypoint " + std::to_string(k) + " is in no group");
  }
}

std::vector<int> JointGroups::group_of(int num_keypoints) const {
  std::vector<int> out(num_keypoints, -1);
  for (std::size_t g = 0; g < members.size(); ++g) {
    for (int k : members[g]) out[k] = static_cast<int>(g);
  }
  return out;
}

JointGroups default_joint_groups() {
  JointGroups g;
  g.names = {"legs", "tail", "ears", "face"};
  g.members = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, {12, 13}, {14, 15, 16, 17}, {18, 19}};
  return g;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.values.size() != gt.values.size()) {
    throw DimensionMismatch("iou: mask sizes differ");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool a = pred.values[i] != 0;
    const bool b = gt.values[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

PckResult pck(std::span<const Vec2d> predicted, std::span<const Vec2d> target, const std::vector<bool>& visible,
              const BinaryMask& silhouette, const JointGroups& groups, double tau) {
  const int k_count = static_cast<int>(target.size());
  if (predicted.size() != target.size() || visible.size() != target.size()) {
    throw DimensionMismatch("pck: prediction, target and visibility lengths differ");
  }
  groups.validate(k_count);
  const std::size_t area = silhouette.count();
  if (area == 0) throw DegenerateAnnotation("pck: empty silhouette");
  const double thresh = tau * std::sqrt(static_cast<double>(area));
  const std::vector<int> group = groups.group_of(k_count);
  PckResult r;
  r.per_group.assign(groups.size(), 0.0);
  r.visible_per_group.assign(groups.size(), 0);
  std::vector<int> correct(groups.size(), 0);
  for (int k = 0; k < k_count; ++k) {
    if (!visible[k]) continue;
    const double dx = predicted[k][0] - target[k][0];
    const double dy = predicted[k][1] - target[k][1];
    const bool ok = std::sqrt(dx * dx + dy * dy) <= thresh;
    ++r.visible;
    ++r.visible_per_group[group[k]];
    if (ok) {
      ++r.correct;
      ++correct[group[k]];
    }
  }
  if (r.visible == 0) throw DegenerateAnnotation("pck: no visible keypoints");
  r.overall = 100.0 * r.correct / r.visible;
  for (int g = 0; g < groups.size(); ++g) {
    if (r.visible_per_group[g] > 0) r.per_group[g] = 100.0 * correct[g] / r.visible_per_group[g];
  }
  return r;
}

PckResult pck(std::span<const Vec2d> predicted, const Annotation& ann, const JointGroups& groups, double tau) {
  return pck(predicted, ann.keypoints, ann.visible, ann.silhouette, groups, tau);
}

}  // namespace dogfit
