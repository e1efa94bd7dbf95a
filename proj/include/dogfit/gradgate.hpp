#pragma once

// Stage-2 gradient check at random non-degenerate parameter points, shared by
// the check-grads command and the test suites.

#include <cstdint>
#include <vector>

#include "dogfit/bundle.hpp"
#include "dogfit/gradcheck.hpp"

namespace dogfit {

struct GradGateOptions {
  int points = 20;
  std::uint64_t seed = 0;
  double sigma = 1e-2;
  int clusters = 3;
  int image_size = 64;
  double step = 1e-6;
};

struct GradGateResult {
  std::vector<GradCheckReport> points;
  double max_error(Block b) const;
  double max_error() const;
  int excluded() const;
  bool pass(double tolerance) const { return max_error() < tolerance; }
};

// Each point draws a synthetic side view and jitters its ground truth on every
// block. Odd points use responsibility weighting of the mixture term.
GradGateResult check_stage2_gradients(const ModelBundle& bundle, const GradGateOptions& options);

// Ground truth of a fresh synthetic sample for an image of this size, jittered
// on every block.
ParamState jittered_params(const ModelBundle& bundle, Rng& rng, int width, int height);

}  // namespace dogfit
