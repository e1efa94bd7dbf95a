#pragma once

#include <string>
#include <vector>

#include "dogfit/gaussian.hpp"
#include "dogfit/losses.hpp"
#include "dogfit/metrics.hpp"
#include "dogfit/model.hpp"

namespace dogfit {

// Everything a model file carries: template, unimodal priors, keypoint map and
// keypoint groups.
struct ModelBundle {
  std::string name;
  TemplateModel model;
  GaussianPrior pose_prior;   // 3 * joints
  GaussianPrior shape_prior;  // num_shapes
  std::vector<int> keypoint_joints;
  JointGroups groups;

  int num_keypoints() const { return static_cast<int>(keypoint_joints.size()); }
  Priors priors() const { return {pose_prior, shape_prior}; }
  // Finalizes the model and checks priors, keypoint map and groups against it.
  void finalize();
};

// Bundled toy models built in code; data/*.json are their serialized form.
ModelBundle make_toy_quadruped();  // 49 vertices, 27 joints, 4 shapes, 6 scale groups, 20 keypoints
ModelBundle make_toy_chain();      // 12 vertices, 4 joints, 2 shapes, 1 scale group, 3 keypoints

// Procedural model with the full-size constants: 3889 vertices, 35 joints,
// 20 shapes, 6 scale groups.
ModelBundle make_dog_scale_model(std::uint64_t seed);

}  // namespace dogfit
