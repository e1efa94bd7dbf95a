#include "dogfit/gradgate.hpp"

#include <algorithm>

#include "dogfit/losses.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/synth.hpp"

namespace dogfit {

double GradGateResult::max_error(Block b) const {
  double e = 0.0;
  for (const GradCheckReport& r : points) e = std::max(e, r.block(b).max_relative_error);
  return e;
}

double GradGateResult::max_error() const {
  double e = 0.0;
  for (const GradCheckReport& r : points) e = std::max(e, r.max_relative_error());
  return e;
}

int GradGateResult::excluded() const {
  int n = 0;
  for (const GradCheckReport& r : points) n += r.excluded();
  return n;
}

ParamState jittered_params(const ModelBundle& bundle, Rng& rng, int width, int height) {
  SynthOptions o;
  o.count = 1;
  o.width = width;
  o.height = height;
  o.seed = rng.next();
  ParamState p = synth_generate(bundle, o).front().truth;
  for (auto& v : p.pose) v += 0.05 * rng.normal();
  for (auto& v : p.shape) v += 0.3 * rng.normal();
  for (auto& v : p.log_scale) v += 0.05 * rng.normal();
  p.translation[0] += 0.1 * rng.normal();
  p.translation[1] += 0.1 * rng.normal();
  p.focal_length *= 1.0 + 0.05 * rng.normal();
  return p;
}

GradGateResult check_stage2_gradients(const ModelBundle& bundle, const GradGateOptions& options) {
  if (options.points < 1) throw InvalidParameter("check_stage2_gradients: points must be >= 1");
  Rng rng(options.seed);
  const Priors priors = bundle.priors();
  GradGateResult result;
  for (int i = 0; i < options.points; ++i) {
    SynthOptions o;
    o.count = 1;
    o.width = options.image_size;
    o.height = options.image_size;
    o.seed = rng.next();
    const Annotation ann = synth_generate(bundle, o).front().annotation;
    const MixturePrior mix = init_mixture(bundle.shape_prior, options.clusters, rng.next(), 1);
    std::vector<double> row(options.clusters);
    double total = 0.0;
    for (double& w : row) total += (w = 0.1 + rng.uniform());
    for (double& w : row) w /= total;

    EnergyOptions opt;
    opt.stage = 2;
    opt.sigma = options.sigma;
    opt.mixture = &mix;
    if (i % 2 == 1) {
      opt.mixture_weighting = MixtureWeighting::Responsibilities;
      opt.responsibilities = row;
    }
    const VarEnergy energy = [&](const VarParams& p) { return total_energy(p, bundle.model, ann, priors, opt); };
    const ParamState p = jittered_params(bundle, rng, ann.width, ann.height);
    result.points.push_back(finite_diff_check(energy, p, options.step));
  }
  return result;
}

}  // namespace dogfit
