#include "dogfit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dogfit {

const char* block_name(Block block) {
  switch (block) {
    case Block::Pose: return "pose";
    case Block::Shape: return "shape";
    case Block::LogScale: return "log_scale";
    case Block::Translation: return "translation";
    case Block::Focal: return "focal";
  }
  return "?";
}

std::vector<double> flatten(const ParamState& p) {
  std::vector<double> out;
  out.reserve(p.pose.size() + p.shape.size() + p.log_scale.size() + 4);
  out.insert(out.end(), p.pose.begin(), p.pose.end());
  out.insert(out.end(), p.shape.begin(), p.shape.end());
  out.insert(out.end(), p.log_scale.begin(), p.log_scale.end());
  out.insert(out.end(), p.translation.begin(), p.translation.end());
  out.push_back(p.focal_length);
  return out;
}

ParamState unflatten(const ParamState& layout, std::span<const double> flat) {
  ParamState p = layout;
  std::size_t i = 0;
  for (auto& v : p.pose) v = flat[i++];
  for (auto& v : p.shape) v = flat[i++];
  for (auto& v : p.log_scale) v = flat[i++];
  for (auto& v : p.translation) v = flat[i++];
  p.focal_length = flat[i++];
  return p;
}

Block block_of(const ParamState& layout, std::size_t index) {
  std::size_t end = layout.pose.size();
  if (index < end) return Block::Pose;
  end += layout.shape.size();
  if (index < end) return Block::Shape;
  end += layout.log_scale.size();
  if (index < end) return Block::LogScale;
  end += 3;
  if (index < end) return Block::Translation;
  return Block::Focal;
}

namespace {

template <class F>
VarParams map_params(const ParamState& p, F&& make) {
  VarParams v;
  v.pose.reserve(p.pose.size());
  for (double x : p.pose) v.pose.push_back(make(x));
  for (double x : p.shape) v.shape.push_back(make(x));
  for (double x : p.log_scale) v.log_scale.push_back(make(x));
  for (int a = 0; a < 3; ++a) v.translation[a] = make(p.translation[a]);
  v.focal_length = make(p.focal_length);
  return v;
}

double adjoint_of(const ad::Var& v, const std::vector<double>& adj) {
  return v.is_constant() ? 0.0 : adj[v.index()];
}

}  // namespace

Evaluation record_and_backward(const VarEnergy& energy, const ParamState& params, ad::Tape& tape) {
  tape.clear();
  const VarParams vars = map_params(params, [&](double x) { return tape.variable(x); });
  const ad::Var out = energy(vars);
  const std::vector<double> adj = tape.adjoints(out);
  Evaluation e;
  e.value = out.value();
  e.gradient = params;
  for (std::size_t i = 0; i < vars.pose.size(); ++i) e.gradient.pose[i] = adjoint_of(vars.pose[i], adj);
  for (std::size_t i = 0; i < vars.shape.size(); ++i) e.gradient.shape[i] = adjoint_of(vars.shape[i], adj);
  for (std::size_t i = 0; i < vars.log_scale.size(); ++i) e.gradient.log_scale[i] = adjoint_of(vars.log_scale[i], adj);
  for (int a = 0; a < 3; ++a) e.gradient.translation[a] = adjoint_of(vars.translation[a], adj);
  e.gradient.focal_length = adjoint_of(vars.focal_length, adj);
  return e;
}

Evaluation record_and_backward(const VarEnergy& energy, const ParamState& params) {
  ad::Tape tape;
  return record_and_backward(energy, params, tape);
}

double evaluate_energy(const VarEnergy& energy, const ParamState& params) {
  return energy(map_params(params, [](double x) { return ad::Var(x); })).value();
}

double GradCheckReport::max_relative_error() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_relative_error);
  return m;
}

int GradCheckReport::excluded() const {
  int n = 0;
  for (const auto& b : blocks) n += b.excluded;
  return n;
}

const BlockCheck& GradCheckReport::block(Block b) const {
  for (const auto& c : blocks) {
    if (c.block == b) return c;
  }
  throw InvalidParameter(std::string("gradcheck: no block ") + block_name(b));
}

GradCheckReport finite_diff_check(const VarEnergy& energy, const ParamState& params, double h, double kink_tolerance) {
  if (!(h > 0.0)) throw InvalidParameter("finite_diff_check: step must be positive");
  const Evaluation analytic = record_and_backward(energy, params);
  const std::vector<double> base = flatten(params);
  const std::vector<double> grad = flatten(analytic.gradient);
  GradCheckReport report;
  report.value = analytic.value;
  for (Block b : kAllBlocks) report.blocks.push_back({b});
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + h;
    const double up = evaluate_energy(energy, unflatten(params, probe));
    probe[i] = base[i] - h;
    const double down = evaluate_energy(energy, unflatten(params, probe));
    probe[i] = base[i];
    const double central = (up - down) / (2.0 * h);
    const double forward = (up - analytic.value) / h;
    const double backward = (analytic.value - down) / h;
    BlockCheck& bc = report.blocks[static_cast<int>(block_of(params, i))];
    ++bc.coordinates;
    if (std::abs(forward - backward) > kink_tolerance * std::max(1.0, std::abs(central))) {
      ++bc.excluded;
      continue;
    }
    const double rel = std::abs(central - grad[i]) / std::max(1.0, std::abs(grad[i]));
    bc.max_relative_error = std::max(bc.max_relative_error, rel);
  }
  return report;
}

}  // namespace dogfit
