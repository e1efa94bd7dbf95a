#pragma once

// Synthetic corpora rendered from known parameters, used as oracles.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dogfit/bundle.hpp"
#include "dogfit/losses.hpp"

namespace dogfit {

struct ClusterSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct NoiseSpec {
  double keypoint_sigma = 0.0;  // pixels
  double dropout = 0.0;         // probability a visible keypoint is marked invisible
};

struct SynthOptions {
  int count = 20;
  int width = 128;
  int height = 128;
  std::vector<ClusterSpec> clusters;  // empty: the model's unimodal shape prior
  NoiseSpec noise;
  std::uint64_t seed = 0;
  double pose_scale = 0.5;     // multiplies the pose prior std of non-root joints
  double log_scale_std = 0.05;
  // Draw shapes in mirrored pairs mu +- L z so each cluster's sample mean is its
  // spec mean whenever the cluster receives an even number of images.
  bool antithetic = true;
};

struct SynthSample {
  Annotation annotation;
  ParamState truth;
  int cluster = 0;
};

// Cluster of image i is i mod C. Throws InvalidParameter on a degenerate cluster
// covariance.
std::vector<SynthSample> synth_generate(const ModelBundle& bundle, const SynthOptions& options);

// Two clusters at -/+ (separation / 2) along shape axis `axis`, generator
// covariance `stddev^2 I`.
std::vector<ClusterSpec> two_cluster_spec(int num_shapes, double separation, double stddev, int axis = 0);

// Keypoint pixel positions of the model at `params` for an image of this size.
std::vector<Vec2d> project_keypoints(const ModelBundle& bundle, const ParamState& params, int width, int height);

BinaryMask render_silhouette(const ModelBundle& bundle, const ParamState& params, int width, int height);

}  // namespace dogfit
