#include <cmath>

#include "doctest.h"
#include "dogfit/bundle.hpp"
#include "dogfit/gradcheck.hpp"
#include "dogfit/losses.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/rng.hpp"
#include "helpers.hpp"

using namespace dogfit;

TEST_SUITE("autodiff") {
  TEST_CASE("stage-2 energy gradient matches central differences on the toy model") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 11);
    const MixturePrior mix = init_mixture(b.shape_prior, 3, 5);
    EnergyOptions opt;
    opt.stage = 2;
    opt.sigma = 1e-2;
    opt.mixture = &mix;
    const Priors priors = b.priors();
    const VarEnergy energy = [&](const VarParams& p) { return total_energy(p, b.model, ann, priors, opt); };
    Rng rng(3);
    ParamState p = test::random_params(b, rng, ann);
    const GradCheckReport rep = finite_diff_check(energy, p, 1e-6);
    for (const auto& blk : rep.blocks) {
      INFO(block_name(blk.block), " err=", blk.max_relative_error, " excluded=", blk.excluded);
      CHECK(blk.max_relative_error < 1e-4);
    }
  }
}
