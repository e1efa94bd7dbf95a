#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "dogfit/bundle.hpp"
#include "dogfit/errors.hpp"
#include "dogfit/gradcheck.hpp"
#include "dogfit/losses.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/rng.hpp"
#include "helpers.hpp"

using namespace dogfit;

namespace {

ad::Var squared_norm(const VarParams& p) {
  ad::Var s = 0.0;
  for (const auto& x : p.pose) s += x * x;
  for (const auto& x : p.shape) s += x * x;
  for (const auto& x : p.log_scale) s += x * x;
  for (const auto& x : p.translation) s += x * x;
  s += p.focal_length * p.focal_length;
  return s;
}

ParamState random_state(const TemplateModel& m, Rng& rng) {
  ParamState p = zero_params(m);
  std::vector<double> flat = flatten(p);
  for (double& x : flat) x = rng.uniform(-2.0, 2.0);
  return unflatten(p, flat);
}

// Random expression over a few leaves; returns the root.
ad::Var random_graph(Rng& rng, const std::vector<ad::Var>& leaves, int depth) {
  if (depth == 0) return leaves[rng.next() % leaves.size()];
  const ad::Var a = random_graph(rng, leaves, depth - 1);
  const ad::Var b = random_graph(rng, leaves, depth - 1);
  switch (rng.next() % 6) {
    case 0: return a + b;
    case 1: return a - b;
    case 2: return a * b;
    case 3: return ad::sin(a) + ad::cos(b);
    case 4: return ad::sigmoid(a) * ad::exp(0.1 * b);
    default: return ad::sqrt(a * a + b * b + 1.0);
  }
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("squared norm has gradient 2 theta") {
    const ModelBundle b = make_toy_chain();
    Rng rng(1);
    const ParamState p = random_state(b.model, rng);
    const Evaluation e = record_and_backward(squared_norm, p);
    const std::vector<double> x = flatten(p);
    const std::vector<double> g = flatten(e.gradient);
    REQUIRE(g.size() == x.size());
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(g[i] == 2.0 * x[i]);
      v += x[i] * x[i];
    }
    CHECK(e.value == doctest::Approx(v).epsilon(1e-14));
  }

  TEST_CASE("constant energy has zero gradient") {
    const ModelBundle b = make_toy_chain();
    const ParamState p = zero_params(b.model);
    const Evaluation e = record_and_backward([](const VarParams&) { return ad::Var(3.5); }, p);
    CHECK(e.value == 3.5);
    for (double g : flatten(e.gradient)) CHECK(g == 0.0);
  }

  TEST_CASE("finite differences on a smooth quadratic") {
    const ModelBundle b = make_toy_chain();
    Rng rng(2);
    const ParamState p = random_state(b.model, rng);
    const GradCheckReport rep = finite_diff_check(squared_norm, p, 1e-5);
    CHECK(rep.max_relative_error() < 1e-8);
    CHECK(rep.excluded() == 0);
  }

  TEST_CASE("a max kink is reported as excluded") {
    const ModelBundle b = make_toy_chain();
    ParamState p = zero_params(b.model);
    p.shape[0] = 0.0;
    const VarEnergy e = [](const VarParams& q) { return ad::max(q.shape[0], ad::Var(0.0)) + q.shape[1] * q.shape[1]; };
    const GradCheckReport rep = finite_diff_check(e, p, 1e-6);
    CHECK(rep.block(Block::Shape).excluded == 1);
    CHECK(rep.excluded() == 1);
    CHECK(rep.max_relative_error() < 1e-8);
  }

  TEST_CASE("joint loss gradient on the toy model") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 4);
    const VarEnergy e = [&](const VarParams& q) { return joint_loss(q, b.model, ann); };
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
      const ParamState p = test::random_params(b, rng, ann);
      const GradCheckReport rep = finite_diff_check(e, p, 1e-6);
      CHECK(rep.max_relative_error() < 1e-6);
    }
  }

  TEST_CASE("full stage-2 energy on the chain model") {
    const ModelBundle b = make_toy_chain();
    const Annotation ann = test::side_view_annotation(b, 6);
    const MixturePrior mix = init_mixture(b.shape_prior, 2, 1);
    EnergyOptions opt;
    opt.stage = 2;
    opt.mixture = &mix;
    const Priors priors = b.priors();
    const VarEnergy e = [&](const VarParams& q) { return total_energy(q, b.model, ann, priors, opt); };
    Rng rng(8);
    const ParamState p = test::random_params(b, rng, ann);
    const GradCheckReport rep = finite_diff_check(e, p, 1e-6);
    for (const auto& blk : rep.blocks) {
      INFO(block_name(blk.block), " err=", blk.max_relative_error);
      CHECK(blk.max_relative_error < 1e-4);
    }
  }

  TEST_CASE("every loss term passes the finite-difference check") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 9);
    const MixturePrior mix = init_mixture(b.shape_prior, 3, 2);
    const std::vector<double> resp{0.2, 0.5, 0.3};
    std::vector<VarEnergy> terms{
        [&](const VarParams& q) { return silhouette_loss(q, b.model, ann, 1e-2); },
        [&](const VarParams& q) { return gaussian_prior_loss(q.pose, b.pose_prior); },
        [&](const VarParams& q) { return gaussian_prior_loss(q.shape, b.shape_prior); },
        [&](const VarParams& q) { return mixture_loss(q.shape, mix); },
        [&](const VarParams& q) { return mixture_loss(q.shape, mix, resp); },
    };
    Rng rng(10);
    const ParamState p = test::random_params(b, rng, ann);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const GradCheckReport rep = finite_diff_check(terms[t], p, 1e-6);
      INFO("term ", t, " err=", rep.max_relative_error());
      CHECK(rep.max_relative_error() < 1e-4);
    }
  }

  TEST_CASE("gradients of sums are sums of gradients on random graphs") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      ad::Tape tape;
      std::vector<ad::Var> leaves;
      for (int i = 0; i < 4; ++i) leaves.push_back(tape.variable(rng.uniform(-1.5, 1.5)));
      const ad::Var f = random_graph(rng, leaves, 3);
      const ad::Var g = random_graph(rng, leaves, 3);
      const ad::Var h = f + g;
      const std::vector<double> af = tape.adjoints(f);
      const std::vector<double> ag = tape.adjoints(g);
      const std::vector<double> ah = tape.adjoints(h);
      for (const auto& x : leaves) {
        const double sum = af[x.index()] + ag[x.index()];
        CHECK(std::abs(ah[x.index()] - sum) <= 1e-12 * std::max(1.0, std::abs(sum)));
      }
    }
  }

  TEST_CASE("backward visits each node once") {
    ad::Tape tape;
    const ad::Var x = tape.variable(0.3);
    ad::Var y = x;
    for (int i = 0; i < 50; ++i) y = ad::sin(y) * x + 1.0;
    const std::vector<double> adj = tape.adjoints(y);
    CHECK(adj.size() == tape.size());
    CHECK(tape.last_visit_count() <= tape.size());
    CHECK(tape.last_visit_count() == y.index() + 1);
  }

  TEST_CASE("operations on constants are not recorded") {
    ad::Tape tape;
    const ad::Var a = 2.0;
    const ad::Var c = ad::exp(a) * 3.0 + ad::sin(a);
    CHECK(c.is_constant());
    CHECK(tape.size() == 0);
    CHECK(c.value() == doctest::Approx(std::exp(2.0) * 3.0 + std::sin(2.0)));
  }

  TEST_CASE("non-finite forward values name the primitive") {
    ad::Tape tape;
    const ad::Var x = tape.variable(-1.0);
    try {
      (void)ad::log(x);
      FAIL("expected PoisonedValue");
    } catch (const PoisonedValue& e) {
      CHECK(e.op() == "log");
    }
    const ad::Var z = tape.variable(0.0);
    CHECK_THROWS_AS((void)(ad::Var(1.0) / z), PoisonedValue);
    CHECK_THROWS_AS((void)tape.variable(std::numeric_limits<double>::quiet_NaN()), PoisonedValue);
  }
}
