#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dogfit/bundle.hpp"
#include "dogfit/errors.hpp"
#include "dogfit/evaluation.hpp"
#include "dogfit/metrics.hpp"
#include "dogfit/rng.hpp"
#include "dogfit/synth.hpp"
#include "oracles.hpp"

using namespace dogfit;
using namespace dogfit::oracle;

namespace {

BinaryMask random_mask(Rng& rng, int w, int h, double p) {
  BinaryMask m(w, h);
  for (auto& v : m.values) v = rng.uniform() < p ? 1 : 0;
  return m;
}

struct Instance {
  std::vector<Vec2d> pred, gt;
  std::vector<bool> vis;
  BinaryMask sil;
};

Instance random_instance(Rng& rng, int w, int h) {
  Instance in;
  in.sil = random_mask(rng, w, h, rng.uniform(0.05, 0.6));
  if (in.sil.count() == 0) in.sil.values[0] = 1;
  const double scale = 0.3 * std::sqrt(static_cast<double>(in.sil.count()));
  for (int k = 0; k < 20; ++k) {
    in.gt.push_back({rng.uniform(0, w), rng.uniform(0, h)});
    in.pred.push_back({in.gt[k][0] + scale * rng.normal(), in.gt[k][1] + scale * rng.normal()});
    in.vis.push_back(rng.uniform() < 0.7);
  }
  in.vis[rng.next() % 20] = true;
  return in;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("iou examples") {
    BinaryMask a(4, 4), b(4, 4);
    a.at(1, 1) = a.at(1, 2) = 1;
    CHECK(iou(a, a) == 1.0);
    b.at(3, 3) = 1;
    CHECK(iou(a, b) == 0.0);
    b = BinaryMask(4, 4);
    b.at(1, 2) = b.at(2, 2) = 1;
    CHECK(iou(a, b) == 1.0 / 3.0);
    CHECK(iou(BinaryMask(4, 4), BinaryMask(4, 4)) == 1.0);
    CHECK_THROWS_AS(iou(a, BinaryMask(4, 3)), DimensionMismatch);
  }

  TEST_CASE("iou matches the brute-force oracle and is symmetric") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
      const int w = 1 + static_cast<int>(rng.next() % 40), h = 1 + static_cast<int>(rng.next() % 40);
      const BinaryMask a = random_mask(rng, w, h, rng.uniform());
      const BinaryMask b = random_mask(rng, w, h, rng.uniform());
      CHECK(iou(a, b) == iou_oracle(a, b));
      CHECK(iou(a, b) == iou(b, a));
    }
  }

  TEST_CASE("iou is invariant to a common translation") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      BinaryMask a(30, 30), b(30, 30), sa(30, 30), sb(30, 30);
      for (int r = 5; r < 20; ++r) {
        for (int c = 5; c < 20; ++c) {
          a.at(r, c) = rng.uniform() < 0.5;
          b.at(r, c) = rng.uniform() < 0.5;
        }
      }
      const int dr = static_cast<int>(rng.next() % 10), dc = static_cast<int>(rng.next() % 10);
      for (int r = 0; r < 20; ++r) {
        for (int c = 0; c < 20; ++c) {
          sa.at(r + dr, c + dc) = a.at(r, c);
          sb.at(r + dr, c + dc) = b.at(r, c);
        }
      }
      CHECK(iou(a, b) == iou(sa, sb));
    }
  }

  TEST_CASE("pck examples") {
    const JointGroups g = default_joint_groups();
    Rng rng(3);
    Instance in = random_instance(rng, 64, 64);
    const PckResult exact = pck(in.gt, in.gt, in.vis, in.sil, g, 0.15);
    CHECK(exact.overall == 100.0);
    for (int k = 0; k < g.size(); ++k) {
      if (exact.visible_per_group[k] > 0) CHECK(exact.per_group[k] == 100.0);
    }

    std::vector<bool> one(20, false);
    one[5] = true;
    std::vector<Vec2d> moved = in.gt;
    const double t = 0.15 * std::sqrt(static_cast<double>(in.sil.count()));
    moved[5][0] += t + 1.0;
    CHECK(pck(moved, in.gt, one, in.sil, g, 0.15).overall == 0.0);
    moved[5][0] = in.gt[5][0] + t - 1e-9;
    CHECK(pck(moved, in.gt, one, in.sil, g, 0.15).overall == 100.0);

    CHECK_THROWS_AS(pck(in.gt, in.gt, std::vector<bool>(20, false), in.sil, g, 0.15), DegenerateAnnotation);
    CHECK_THROWS_AS(pck(in.gt, in.gt, in.vis, BinaryMask(64, 64), g, 0.15), DegenerateAnnotation);
  }

  TEST_CASE("pck matches the brute-force oracle") {
    const JointGroups g = default_joint_groups();
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
      const Instance in = random_instance(rng, 48, 40);
      const double tau = rng.uniform(0.05, 0.3);
      const PckResult r = pck(in.pred, in.gt, in.vis, in.sil, g, tau);
      const PckOracle o = pck_oracle(in.pred, in.gt, in.vis, in.sil, g, tau);
      CHECK(r.overall == o.overall);
      for (int k = 0; k < g.size(); ++k) CHECK(r.per_group[k] == o.groups[k]);
    }
  }

  TEST_CASE("group pck weighted by visible counts averages to the overall pck") {
    const JointGroups g = default_joint_groups();
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
      const Instance in = random_instance(rng, 32, 32);
      const PckResult r = pck(in.pred, in.gt, in.vis, in.sil, g, 0.15);
      double s = 0.0;
      for (int k = 0; k < g.size(); ++k) s += r.per_group[k] * r.visible_per_group[k];
      CHECK(std::abs(s / r.visible - r.overall) <= 1e-9);
    }
  }

  TEST_CASE("pck is monotone in the prediction error") {
    const JointGroups g = default_joint_groups();
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
      const Instance in = random_instance(rng, 32, 32);
      std::vector<Vec2d> worse = in.pred;
      for (int k = 0; k < 20; ++k) {
        const double f = rng.uniform(1.0, 3.0);
        for (int a = 0; a < 2; ++a) worse[k][a] = in.gt[k][a] + f * (in.pred[k][a] - in.gt[k][a]);
      }
      const PckResult r = pck(in.pred, in.gt, in.vis, in.sil, g, 0.15);
      const PckResult w = pck(worse, in.gt, in.vis, in.sil, g, 0.15);
      CHECK(w.overall <= r.overall);
      for (int k = 0; k < g.size(); ++k) CHECK(w.per_group[k] <= r.per_group[k]);
    }
  }

  TEST_CASE("pck is invariant to a uniform integer rescale") {
    const JointGroups g = default_joint_groups();
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const Instance in = random_instance(rng, 20, 20);
      const int s = 2 + static_cast<int>(rng.next() % 3);
      Instance big;
      big.sil = BinaryMask(20 * s, 20 * s);
      for (int r = 0; r < big.sil.height; ++r)
        for (int c = 0; c < big.sil.width; ++c) big.sil.at(r, c) = in.sil.at(r / s, c / s);
      for (int k = 0; k < 20; ++k) {
        big.gt.push_back({s * in.gt[k][0], s * in.gt[k][1]});
        big.pred.push_back({s * in.pred[k][0], s * in.pred[k][1]});
      }
      const PckResult a = pck(in.pred, in.gt, in.vis, in.sil, g, 0.15);
      const PckResult b = pck(big.pred, big.gt, in.vis, big.sil, g, 0.15);
      CHECK(a.overall == b.overall);
    }
  }

  TEST_CASE("joint groups validate as a partition") {
    JointGroups g = default_joint_groups();
    CHECK_NOTHROW(g.validate(20));
    CHECK_THROWS_AS(g.validate(21), SchemaError);
    g.members[1].push_back(0);
    CHECK_THROWS_AS(g.validate(20), SchemaError);
  }

  TEST_CASE("corpus evaluation") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 5;
    o.width = o.height = 96;
    o.seed = 3;
    const std::vector<SynthSample> s = synth_generate(b, o);
    std::vector<Annotation> anns;
    std::vector<FitReport> reports;
    for (const auto& x : s) {
      anns.push_back(x.annotation);
      FitReport r;
      r.id = x.annotation.id;
      r.params = x.truth;
      reports.push_back(r);
    }
    const CorpusMetrics perfect = evaluate_corpus(reports, anns, b, 0.15);
    CHECK(perfect.mean_iou == 1.0);
    CHECK(perfect.mean_pck == 100.0);
    for (const auto& im : perfect.images) CHECK(im.iou == 1.0);

    // single image
    const CorpusMetrics single = evaluate_corpus({reports[2]}, {anns[2]}, b, 0.15);
    CHECK(single.mean_iou == single.images[0].iou);
    CHECK(single.mean_pck == single.images[0].pck.overall);

    // shift annotated keypoints just inside / outside the threshold
    int expect_ok = 0, expect_n = 0;
    double expect_mean = 0.0;
    for (std::size_t i = 0; i < anns.size(); ++i) {
      const double t = 0.15 * std::sqrt(static_cast<double>(anns[i].silhouette.count()));
      int ok = 0, n = 0;
      for (std::size_t k = 0; k < anns[i].keypoints.size(); ++k) {
        if (!anns[i].visible[k]) continue;
        const bool outside = (k + i) % 3 == 0;
        anns[i].keypoints[k][1] += outside ? t * 1.01 : t * 0.99;
        ++n;
        ok += !outside;
      }
      expect_ok += ok;
      expect_n += n;
      expect_mean += 100.0 * ok / n;
    }
    expect_mean /= static_cast<double>(anns.size());
    std::reverse(reports.begin(), reports.end());
    const CorpusMetrics shifted = evaluate_corpus(reports, anns, b, 0.15);
    CHECK(shifted.mean_pck == doctest::Approx(expect_mean).epsilon(1e-12));
    CHECK(expect_ok < expect_n);
    for (std::size_t i = 0; i < reports.size(); ++i) CHECK(shifted.images[i].id == reports[i].id);

    reports[0].id = "nope";
    CHECK_THROWS_AS(evaluate_corpus(reports, anns, b, 0.15), InvalidParameter);
  }
}
