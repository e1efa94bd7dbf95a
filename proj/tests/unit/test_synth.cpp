#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "dogfit/bundle.hpp"
#include "dogfit/errors.hpp"
#include "dogfit/io.hpp"
#include "dogfit/synth.hpp"
#include "helpers.hpp"

using namespace dogfit;

TEST_SUITE("synth") {
  TEST_CASE("noiseless keypoints reproject from the sidecar parameters") {
    const ModelBundle b = make_toy_quadruped();
    const fs::path dir = fs::temp_directory_path() / "dogfit_synth_reproject";
    fs::remove_all(dir);
    SynthOptions o;
    o.count = 10;
    o.seed = 3;
    const auto s = synth_generate(b, o);
    save_ground_truth(s, dir / "gt.json");
    const auto gt = load_ground_truth(dir / "gt.json", b.model);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& a = s[i].annotation;
      const std::vector<Vec2d> p = project_keypoints(b, gt[i].params, a.width, a.height);
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (!a.visible[k]) continue;
        CHECK(std::abs(p[k][0] - a.keypoints[k][0]) <= 1e-9);
        CHECK(std::abs(p[k][1] - a.keypoints[k][1]) <= 1e-9);
      }
      CHECK(render_silhouette(b, gt[i].params, a.width, a.height) == a.silhouette);
    }
  }

  TEST_CASE("same seed gives the same corpus bytes") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 6;
    o.seed = 11;
    o.noise = {2.0, 0.1};
    o.clusters = two_cluster_spec(4, 6.0, 1.0, 2);
    const fs::path d1 = fs::temp_directory_path() / "dogfit_synth_a";
    const fs::path d2 = fs::temp_directory_path() / "dogfit_synth_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    save_annotations(test::annotations_of(synth_generate(b, o)), d1 / "annotations.json");
    save_annotations(test::annotations_of(synth_generate(b, o)), d2 / "annotations.json");
    CHECK(read_text(d1 / "annotations.json") == read_text(d2 / "annotations.json"));
    for (int i = 0; i < 6; ++i) {
      const std::string m = "masks/img000" + std::to_string(i) + ".pgm";
      CHECK(read_text(d1 / m) == read_text(d2 / m));
    }
    o.seed = 12;
    save_annotations(test::annotations_of(synth_generate(b, o)), d2 / "annotations.json");
    CHECK(read_text(d1 / "annotations.json") != read_text(d2 / "annotations.json"));
  }

  TEST_CASE("cluster labels are recoverable by nearest mean") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 400;
    o.width = o.height = 16;
    o.seed = 5;
    o.antithetic = false;
    o.clusters = two_cluster_spec(4, 6.0, 1.0, 1);
    const auto s = synth_generate(b, o);
    int right = 0;
    for (const auto& x : s) {
      const Eigen::Map<const Eigen::VectorXd> beta(x.truth.shape.data(), 4);
      const int nearest = (beta - o.clusters[0].mean).norm() <= (beta - o.clusters[1].mean).norm() ? 0 : 1;
      right += nearest == x.cluster;
    }
    CHECK(static_cast<double>(right) / s.size() > 0.99);
  }

  TEST_CASE("noise and dropout") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 40;
    o.seed = 2;
    o.noise = {2.0, 0.1};
    const auto noisy = synth_generate(b, o);
    int hidden = 0, inside = 0;
    double ss = 0.0;
    int n = 0;
    for (const auto& x : noisy) {
      const auto& a = x.annotation;
      CHECK(a.num_visible() >= 1);
      const std::vector<Vec2d> p = project_keypoints(b, x.truth, a.width, a.height);
      for (std::size_t k = 0; k < p.size(); ++k) {
        const bool in = p[k][0] > 8 && p[k][0] < a.width - 8 && p[k][1] > 8 && p[k][1] < a.height - 8;
        if (!in) continue;
        ++inside;
        if (!a.visible[k]) {
          ++hidden;
          continue;
        }
        const double dx = a.keypoints[k][0] - p[k][0], dy = a.keypoints[k][1] - p[k][1];
        ss += dx * dx + dy * dy;
        n += 2;
      }
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (!a.visible[k]) continue;
        CHECK(a.keypoints[k][0] >= 0.0);
        CHECK(a.keypoints[k][0] <= a.width);
        CHECK(a.keypoints[k][1] >= 0.0);
        CHECK(a.keypoints[k][1] <= a.height);
      }
    }
    const double rate = static_cast<double>(hidden) / inside;
    CHECK(rate > 0.05);
    CHECK(rate < 0.16);
    CHECK(std::sqrt(ss / n) == doctest::Approx(2.0).epsilon(0.15));
  }

  TEST_CASE("antithetic draws put each cluster's sample mean on its spec mean") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.count = 8;
    o.width = o.height = 16;
    o.clusters = two_cluster_spec(4, 6.0, 1.0, 0);
    const auto s = synth_generate(b, o);
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
      for (const auto& x : s) {
        if (x.cluster == c) mean += Eigen::Map<const Eigen::VectorXd>(x.truth.shape.data(), 4) / 4.0;
      }
      CHECK((mean - o.clusters[c].mean).norm() < 1e-12);
    }
  }

  TEST_CASE("degenerate cluster covariance is rejected") {
    const ModelBundle b = make_toy_quadruped();
    SynthOptions o;
    o.clusters = two_cluster_spec(4, 6.0, 1.0);
    o.clusters[1].covariance(2, 2) = 0.0;
    CHECK_THROWS_AS(synth_generate(b, o), InvalidParameter);
  }
}
