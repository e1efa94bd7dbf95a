#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "dogfit/bundle.hpp"
#include "dogfit/camera.hpp"
#include "dogfit/errors.hpp"
#include "dogfit/fitter.hpp"
#include "dogfit/io.hpp"
#include "dogfit/synth.hpp"
#include "helpers.hpp"

using namespace dogfit;

namespace {

FitConfig short_config() {
  FitConfig c;
  c.stage1_iterations = 30;
  c.stage2_iterations = 20;
  c.em_interval = 10;
  c.clusters = 2;
  c.sigma = 0.02;
  c.sigma_final = 0.01;
  return c;
}

std::string dump(const FitReport& r) { return dump_json(report_to_json(r)); }

Mat3d root_rotation(const ModelBundle& b, const ParamState& p) {
  const int r = b.model.root();
  return rodrigues<double>({p.pose[3 * r], p.pose[3 * r + 1], p.pose[3 * r + 2]});
}

double rotation_angle(const Mat3d& a, const Mat3d& b) {
  double tr = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) tr += a[3 * k + i] * b[3 * k + i];
  return std::acos(std::clamp(0.5 * (tr - 1.0), -1.0, 1.0));
}

Vec2d vertex_centroid(const ModelBundle& b, const ParamState& p, const Annotation& ann) {
  const PosedMesh<double> mesh = skin(b.model, p);
  const std::vector<Vec2d> uv = project(std::span<const Vec3d>(mesh.vertices), camera_for(ann, p.focal_length, p.translation));
  Vec2d c{0.0, 0.0};
  for (const auto& q : uv) {
    c[0] += q[0] / uv.size();
    c[1] += q[1] / uv.size();
  }
  return c;
}

Vec2d mask_centroid(const BinaryMask& m) {
  Vec2d c{0.0, 0.0};
  double n = 0.0;
  for (int r = 0; r < m.height; ++r) {
    for (int col = 0; col < m.width; ++col) {
      if (!m.at(r, col)) continue;
      c[0] += col + 0.5;
      c[1] += r + 0.5;
      n += 1.0;
    }
  }
  return {c[0] / n, c[1] / n};
}

// Annotation rendered from the prior means at the truth camera of a synthetic sample.
SynthSample mean_shape_sample(const ModelBundle& b, std::uint64_t seed, int size) {
  SynthSample s = test::side_view_sample(b, seed, size);
  ParamState& p = s.truth;
  const int root = b.model.root();
  const Eigen::VectorXd& mp = b.pose_prior.mean();
  for (int j = 0; j < b.model.num_joints(); ++j) {
    if (j == root) continue;
    for (int a = 0; a < 3; ++a) p.pose[3 * j + a] = mp[3 * j + a];
  }
  const Eigen::VectorXd& ms = b.shape_prior.mean();
  p.shape.assign(ms.data(), ms.data() + ms.size());
  std::fill(p.log_scale.begin(), p.log_scale.end(), 0.0);
  p.focal_length = size;
  s.annotation.keypoints = project_keypoints(b, p, size, size);
  s.annotation.silhouette = render_silhouette(b, p, size, size);
  return s;
}

}  // namespace

TEST_SUITE("fitter") {
  TEST_CASE("zero weights leave the initialization unchanged") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 1);
    FitConfig c = short_config();
    c.weights = {0, 0, 0, 0, 0};
    const ParamState init = init_params(ann, b, c);
    const FitReport r = fit_single(ann, b, init_mixture(b.shape_prior, 2, 0, 1), c);
    CHECK(flatten(r.params) == flatten(init));
  }

  TEST_CASE("stage 1 alone never evaluates the silhouette") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 2);
    FitConfig c = short_config();
    c.stage2_iterations = 0;
    c.weights.silhouette = 5.0;
    const FitReport r = fit_single(ann, b, init_mixture(b.shape_prior, 2, 0, 1), c);
    CHECK(r.silhouette_evaluations == 0);
    CHECK(r.iterations == c.stage1_iterations);
    for (int s : r.trajectory.stage) CHECK(s == 1);

    c.stage2_iterations = 5;
    c.em_interval = 5;
    CHECK(fit_single(ann, b, init_mixture(b.shape_prior, 2, 0, 1), c).silhouette_evaluations > 0);
  }

  TEST_CASE("em interval longer than stage 2 leaves the initial mixture") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 3;
    o.width = o.height = 32;
    const auto anns = test::annotations_of(synth_generate(b, o));
    FitConfig c = short_config();
    c.em_interval = c.stage2_iterations + 1;
    const BatchResult r = fit_batch_with_em(anns, b, c, true);
    const MixturePrior init = init_mixture(b.shape_prior, c.clusters, c.seed, 3);
    CHECK(r.em_events.empty());
    CHECK(dump_json(mixture_to_json(r.mixture)) == dump_json(mixture_to_json(init)));
  }

  TEST_CASE("one image and one component: the mean is that image's shape") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 3, 32);
    FitConfig c = short_config();
    c.clusters = 1;
    const BatchResult r = fit_batch_with_em({ann}, b, c, true);
    REQUIRE(r.em_events.size() == 2);
    const Eigen::VectorXd& mu = r.mixture.components[0].gaussian.mean();
    for (int k = 0; k < mu.size(); ++k) CHECK(std::abs(mu[k] - r.reports[0].params.shape[k]) <= 1e-12);
  }

  TEST_CASE("log-likelihood does not decrease at an EM firing") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 6;
    o.width = o.height = 32;
    o.clusters = two_cluster_spec(4, 6.0, 1.0, 2);
    const auto anns = test::annotations_of(synth_generate(b, o));
    FitConfig c = short_config();
    for (int rounds : {1, 5}) {
      for (int restarts : {0, 3}) {
        c.em_rounds = rounds;
        c.em_restarts = restarts;
        const BatchResult r = fit_batch_with_em(anns, b, c, true);
        REQUIRE(r.em_events.size() == 2);
        for (const auto& ev : r.em_events) CHECK(ev.log_likelihood_after >= ev.log_likelihood_before - 1e-9);
      }
    }
  }

  TEST_CASE("init recovers depth and centres the silhouette") {
    const ModelBundle b = make_toy_quadruped();
    const FitConfig c;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const SynthSample s = mean_shape_sample(b, 40 + seed, 96);
      const ParamState init = init_params(s.annotation, b, c);
      CHECK(init.focal_length == 96.0);
      CHECK(std::abs(init.translation[2] - s.truth.translation[2]) <= 0.1 * s.truth.translation[2]);
      const Vec2d pc = vertex_centroid(b, init, s.annotation);
      const Vec2d mc = mask_centroid(s.annotation.silhouette);
      CHECK(std::hypot(pc[0] - mc[0], pc[1] - mc[1]) <= 1.0);
    }
  }

  TEST_CASE("centred silhouette gives a centred initial projection") {
    const ModelBundle b = make_toy_quadruped();
    SynthSample s = test::side_view_sample(b, 9, 64);
    // move the truth so the silhouette centroid sits at the image centre
    for (int pass = 0; pass < 3; ++pass) {
      const Vec2d mc = mask_centroid(render_silhouette(b, s.truth, 64, 64));
      s.truth.translation[0] -= (mc[0] - 32.0) * s.truth.translation[2] / s.truth.focal_length;
      s.truth.translation[1] -= (mc[1] - 32.0) * s.truth.translation[2] / s.truth.focal_length;
    }
    s.annotation.silhouette = render_silhouette(b, s.truth, 64, 64);
    s.annotation.keypoints = project_keypoints(b, s.truth, 64, 64);
    const Vec2d mc = mask_centroid(s.annotation.silhouette);
    REQUIRE(std::hypot(mc[0] - 32.0, mc[1] - 32.0) < 0.5);
    const Vec2d pc = vertex_centroid(b, init_params(s.annotation, b, FitConfig{}), s.annotation);
    CHECK(std::hypot(pc[0] - 32.0, pc[1] - 32.0) <= 1.0);
  }

  TEST_CASE("yaw hypothesis matches the generator's facing") {
    const ModelBundle b = make_toy_quadruped();
    int facing_left = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SynthSample s = test::side_view_sample(b, 60 + seed, 96);
      const ParamState init = init_params(s.annotation, b, FitConfig{});
      const double angle = rotation_angle(root_rotation(b, init), root_rotation(b, s.truth));
      INFO("seed ", seed, " angle ", angle);
      CHECK(angle < std::numbers::pi / 4);
      facing_left += root_rotation(b, s.truth)[0] < 0.0;
    }
    CHECK(facing_left > 0);
    CHECK(facing_left < 10);
  }

  TEST_CASE("best energy never increases within a segment") {
    const ModelBundle b = make_toy_quadruped();
    const Annotation ann = test::side_view_annotation(b, 4, 48);
    const FitConfig c = short_config();
    const FitReport r = fit_single(ann, b, init_mixture(b.shape_prior, 2, 0, 1), c);
    const Trajectory& t = r.trajectory;
    REQUIRE(t.size() == static_cast<std::size_t>(c.stage1_iterations + c.stage2_iterations));
    for (std::size_t i = 1; i < t.size(); ++i) {
      const bool boundary = i == static_cast<std::size_t>(c.stage1_iterations) ||
                            (i > static_cast<std::size_t>(c.stage1_iterations) && (i - c.stage1_iterations) % c.em_interval == 0);
      if (!boundary) CHECK(t.best[i] <= t.best[i - 1]);
      CHECK(std::isfinite(t.total[i]));
    }
    CHECK(r.final_energy == t.best.back());
  }

  TEST_CASE("fits are deterministic across runs and worker counts") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 4;
    o.width = o.height = 32;
    const auto anns = test::annotations_of(synth_generate(b, o));
    const FitConfig c = short_config();
    const char* old = std::getenv("DOGFIT_WORKERS");
    const std::string saved = old ? old : "";
    setenv("DOGFIT_WORKERS", "1", 1);
    const BatchResult a = fit_batch_with_em(anns, b, c, true);
    setenv("DOGFIT_WORKERS", "3", 1);
    CHECK(worker_count() == 3);
    const BatchResult d = fit_batch_with_em(anns, b, c, true);
    if (old) setenv("DOGFIT_WORKERS", saved.c_str(), 1);
    else unsetenv("DOGFIT_WORKERS");
    for (std::size_t i = 0; i < anns.size(); ++i) CHECK(dump(a.reports[i]) == dump(d.reports[i]));
    CHECK(dump_json(mixture_to_json(a.mixture)) == dump_json(mixture_to_json(d.mixture)));
    const MixturePrior m = init_mixture(b.shape_prior, 2, 0, 1);
    CHECK(dump(fit_single(anns[0], b, m, c)) == dump(fit_single(anns[0], b, m, c)));
  }

  TEST_CASE("a quarantined image does not change the others without EM") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 2;
    o.width = o.height = 32;
    std::vector<Annotation> anns = test::annotations_of(synth_generate(b, o));
    Annotation bad = anns[0];
    bad.id = "empty";
    std::fill(bad.silhouette.values.begin(), bad.silhouette.values.end(), 0);
    const FitConfig c = short_config();
    const BatchResult clean = fit_batch_with_em(anns, b, c, false);
    const BatchResult mixed = fit_batch_with_em({anns[0], bad, anns[1]}, b, c, false);
    CHECK(mixed.reports[1].quarantined);
    CHECK_FALSE(mixed.reports[1].error.empty());
    CHECK(dump(mixed.reports[0]) == dump(clean.reports[0]));
    CHECK(dump(mixed.reports[2]) == dump(clean.reports[1]));
  }

  TEST_CASE("config validation") {
    FitConfig c;
    CHECK_NOTHROW(c.validate());
    c.step_size = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = FitConfig{};
    c.em_interval = 0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = FitConfig{};
    c.em_rounds = 0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = FitConfig{};
    c.em_restarts = -1;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = FitConfig{};
    c.clusters = 0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
  }
}
