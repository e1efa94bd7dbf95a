#pragma once

// Energy gradients over a full ParamState and the central-difference checker
// used to validate them.

#include <functional>
#include <string>
#include <vector>

#include "dogfit/autodiff.hpp"
#include "dogfit/model.hpp"

namespace dogfit {

using VarParams = BasicParamState<ad::Var>;
using VarEnergy = std::function<ad::Var(const VarParams&)>;

enum class Block { Pose, Shape, LogScale, Translation, Focal };
const char* block_name(Block block);
inline constexpr Block kAllBlocks[] = {Block::Pose, Block::Shape, Block::LogScale, Block::Translation, Block::Focal};

// Flat coordinate layout: pose, shape, log_scale, translation, focal.
std::vector<double> flatten(const ParamState& p);
ParamState unflatten(const ParamState& layout, std::span<const double> flat);
Block block_of(const ParamState& layout, std::size_t flat_index);

struct Evaluation {
  double value = 0.0;
  ParamState gradient;  // same layout as the parameters
};

// Records the energy on `tape` (cleared first) and runs one reverse sweep.
Evaluation record_and_backward(const VarEnergy& energy, const ParamState& params, ad::Tape& tape);
Evaluation record_and_backward(const VarEnergy& energy, const ParamState& params);

// Energy value without recording (all inputs enter as constants).
double evaluate_energy(const VarEnergy& energy, const ParamState& params);

struct BlockCheck {
  Block block;
  double max_relative_error = 0.0;
  int coordinates = 0;
  int excluded = 0;  // one-sided slopes disagree: non-differentiable within the step
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double value = 0.0;
  double max_relative_error() const;
  int excluded() const;
  const BlockCheck& block(Block b) const;
};

// Central differences (E(p+h) - E(p-h)) / 2h per coordinate against the
// reverse-mode gradient; relative error uses max(1, |analytic|). A coordinate is
// excluded when its forward and backward one-sided slopes differ by more than
// kink_tolerance * max(1, |central|).
GradCheckReport finite_diff_check(const VarEnergy& energy, const ParamState& params, double h,
                                  double kink_tolerance = 1e-3);

}  // namespace dogfit
