#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "dogfit/errors.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/rng.hpp"
#include "oracles.hpp"

using namespace dogfit;
using namespace dogfit::oracle;

namespace {

Eigen::MatrixXd em_data(Rng& rng, int n, int d, int clusters) {
  std::vector<Eigen::VectorXd> centers;
  for (int c = 0; c < clusters; ++c) centers.push_back(3.0 * rng.normal_vector(d));
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) x.row(i) = (centers[i % clusters] + rng.normal_vector(d)).transpose();
  return x;
}

GaussianPrior unit_prior(int d) { return GaussianPrior(Eigen::VectorXd::Zero(d), 4.0 * Eigen::MatrixXd::Identity(d, d)); }

EmSettings settings_with(double lambda, int d) {
  EmSettings s;
  s.unimodal = unit_prior(d);
  s.regularization = lambda;
  return s;
}

// One e_step/m_step round through the library.
MixturePrior em_round(MixturePrior mix, const Eigen::MatrixXd& x, const EmSettings& s) {
  mix.responsibilities = e_step(mix, x);
  return m_step(mix, x, s).mixture;
}

}  // namespace

TEST_SUITE("mixture") {
  TEST_CASE("ten rounds match the textbook oracle") {
    Rng rng(1);
    for (int instance = 0; instance < 10; ++instance) {
      const Eigen::MatrixXd x = em_data(rng, 50, 3, 2);
      const double lambda = 1e-6 * 4.0;
      MixturePrior mix = init_mixture(unit_prior(3), 2, 100 + instance, 50);
      RefMixture ref;
      for (const auto& c : mix.components) {
        ref.mu.push_back(c.gaussian.mean());
        ref.cov.push_back(c.gaussian.covariance());
        ref.pi.push_back(c.weight);
      }
      const EmSettings s = settings_with(lambda, 3);
      for (int round = 0; round < 10; ++round) {
        mix = em_round(mix, x, s);
        ref_round(ref, x, lambda);
        for (int m = 0; m < 2; ++m) {
          const auto& g = mix.components[m].gaussian;
          INFO("instance ", instance, " round ", round, " component ", m);
          CHECK((g.mean() - ref.mu[m]).cwiseAbs().maxCoeff() < 1e-8);
          CHECK((g.covariance() - ref.cov[m]).cwiseAbs().maxCoeff() < 1e-8);
          CHECK(std::abs(mix.components[m].weight - ref.pi[m]) < 1e-8);
        }
      }
    }
  }

  TEST_CASE("log likelihood never decreases") {
    Rng rng(2);
    int checked = 0;
    for (int instance = 0; instance < 200; ++instance) {
      const int d = 2 + instance % 3;
      const int k = 2 + instance % 2;
      const Eigen::MatrixXd x = em_data(rng, 40, d, k);
      MixturePrior mix = init_mixture(unit_prior(d), k, instance, 40);
      const EmSettings s = settings_with(1e-6, d);
      double prev = log_likelihood(mix, x);
      for (int round = 0; round < 15; ++round) {
        mix = em_round(mix, x, s);
        const double ll = log_likelihood(mix, x);
        CHECK(ll - prev >= -1e-9);
        prev = ll;
        ++checked;
      }
    }
    CHECK(checked == 3000);
  }

  TEST_CASE("weights and responsibilities stay stochastic") {
    Rng rng(3);
    for (int instance = 0; instance < 50; ++instance) {
      const Eigen::MatrixXd x = em_data(rng, 30, 3, 3);
      MixturePrior mix = init_mixture(unit_prior(3), 3, instance, 30);
      const EmSettings s = EmSettings::defaults_for(unit_prior(3));
      for (int round = 0; round < 5; ++round) {
        mix = em_round(mix, x, s);
        CHECK_NOTHROW(mix.validate());
        const Eigen::MatrixXd r = e_step(mix, x);
        for (Eigen::Index i = 0; i < r.rows(); ++i) CHECK(std::abs(r.row(i).sum() - 1.0) <= 1e-12);
      }
    }
  }

  TEST_CASE("init mixture") {
    const GaussianPrior prior = unit_prior(4);
    for (int m : {1, 3, 7}) {
      const MixturePrior mix = init_mixture(prior, m, 9, 5);
      REQUIRE(mix.size() == m);
      for (const auto& c : mix.components) {
        CHECK(c.weight == 1.0 / m);
        CHECK(c.gaussian.covariance() == prior.covariance());
      }
      CHECK(mix.responsibilities.rows() == 5);
      CHECK((mix.responsibilities.array() == 1.0 / m).all());
    }
    const MixturePrior a = init_mixture(prior, 3, 42);
    const MixturePrior b = init_mixture(prior, 3, 42);
    for (int m = 0; m < 3; ++m) CHECK(a.components[m].gaussian.mean() == b.components[m].gaussian.mean());
    CHECK_THROWS_AS(init_mixture(prior, 0, 1), InvalidParameter);
  }

  TEST_CASE("data-seeded init picks distinct rows") {
    const GaussianPrior prior = unit_prior(3);
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::MatrixXd x = em_data(rng, 30, 3, 3);
      const MixturePrior mix = init_mixture_from_data(prior, 3, x, trial);
      REQUIRE(mix.size() == 3);
      for (int m = 0; m < 3; ++m) {
        bool is_row = false;
        for (Eigen::Index i = 0; i < x.rows(); ++i) is_row = is_row || x.row(i).transpose() == mix.components[m].gaussian.mean();
        CHECK(is_row);
        CHECK(mix.components[m].weight == 1.0 / 3.0);
        for (int k = 0; k < m; ++k) CHECK(mix.components[m].gaussian.mean() != mix.components[k].gaussian.mean());
      }
    }
    // all rows equal: still M components, all on that row
    const Eigen::MatrixXd same = Eigen::MatrixXd::Ones(5, 3);
    const MixturePrior mix = init_mixture_from_data(prior, 2, same, 1);
    CHECK(mix.components[1].gaussian.mean() == Eigen::VectorXd::Ones(3));
    CHECK_THROWS_AS(init_mixture_from_data(prior, 2, Eigen::MatrixXd(0, 3), 1), InvalidParameter);
    CHECK_THROWS_AS(init_mixture_from_data(prior, 2, same.leftCols(2), 1), DimensionMismatch);
  }

  TEST_CASE("e_step examples") {
    MixturePrior same;
    const GaussianPrior g(Eigen::Vector2d(1, 2), Eigen::Matrix2d::Identity());
    same.components = {{g, 0.5}, {g, 0.5}};
    Rng rng(4);
    const Eigen::MatrixXd x = em_data(rng, 20, 2, 1);
    const Eigen::MatrixXd r = e_step(same, x);
    CHECK((r.array() == 0.5).all());

    MixturePrior sharp;
    sharp.components = {{GaussianPrior(Eigen::Vector2d(0, 0), 1e-6 * Eigen::Matrix2d::Identity()), 0.5},
                        {GaussianPrior(Eigen::Vector2d(10, 10), Eigen::Matrix2d::Identity()), 0.5}};
    const Eigen::MatrixXd at = Eigen::MatrixXd::Zero(1, 2);
    const Eigen::MatrixXd rs = e_step(sharp, at);
    CHECK(rs(0, 0) > 1.0 - 1e-12);
    // oracle from the two log densities
    const double l0 = sharp.components[0].gaussian.log_density(Eigen::Vector2d(0, 0));
    const double l1 = sharp.components[1].gaussian.log_density(Eigen::Vector2d(0, 0));
    CHECK(rs(0, 1) == doctest::Approx(std::exp(l1 - l0)).epsilon(1e-9));
  }

  TEST_CASE("e_step is invariant to a common density shift") {
    Rng rng(5);
    const Eigen::MatrixXd x = em_data(rng, 20, 3, 2);
    MixturePrior mix = init_mixture(unit_prior(3), 2, 1);
    const Eigen::MatrixXd r = e_step(mix, x);
    // every weighted density times the same constant
    MixturePrior scaled = mix;
    for (auto& c : scaled.components) c.weight *= 3.0;
    const Eigen::MatrixXd r2 = e_step(scaled, x);
    CHECK((r - r2).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("e_step reports underflow by index") {
    MixturePrior mix;
    mix.components = {{GaussianPrior(Eigen::VectorXd::Zero(1), 1e-300 * Eigen::MatrixXd::Identity(1, 1)), 1.0}};
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1e300;
    try {
      (void)e_step(mix, x);
      FAIL("expected NumericalDegeneracy");
    } catch (const NumericalDegeneracy& e) {
      CHECK(std::string(e.what()).find("estimate 1") != std::string::npos);
    }
  }

  TEST_CASE("m_step examples") {
    const EmSettings s = EmSettings::defaults_for(unit_prior(3));
    MixturePrior one = init_mixture(unit_prior(3), 1, 1, 1);
    Eigen::MatrixXd x(1, 3);
    x << 0.3, -1.2, 2.5;
    const MixturePrior r = m_step(one, x, s).mixture;
    CHECK(r.components[0].gaussian.mean() == x.row(0).transpose());
    CHECK(r.components[0].weight == 1.0);
    CHECK((r.components[0].gaussian.covariance() - s.regularization * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

    MixturePrior two = init_mixture(unit_prior(3), 2, 1, 2);
    Eigen::MatrixXd y(2, 3);
    y << 1, 2, 3, -4, -5, -6;
    two.responsibilities << 1, 0, 0, 1;
    const MixturePrior t = m_step(two, y, s).mixture;
    CHECK(t.components[0].gaussian.mean() == y.row(0).transpose());
    CHECK(t.components[1].gaussian.mean() == y.row(1).transpose());
  }

  TEST_CASE("one component reproduces the sample mean and covariance") {
    Rng rng(6);
    const Eigen::MatrixXd x = em_data(rng, 25, 3, 1);
    const double lambda = 1e-4;
    const MixturePrior r = em_round(init_mixture(unit_prior(3), 1, 2, 25), x, settings_with(lambda, 3));
    const Eigen::VectorXd mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd c = x.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = c.transpose() * c / 25.0 + lambda * Eigen::MatrixXd::Identity(3, 3);
    CHECK((r.components[0].gaussian.mean() - mean).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((r.components[0].gaussian.covariance() - cov).cwiseAbs().maxCoeff() < 1e-13);
  }

  TEST_CASE("collapsed components are reseeded") {
    MixturePrior two = init_mixture(unit_prior(2), 2, 1, 3);
    two.responsibilities << 1, 0, 1, 0, 1, 0;
    Eigen::MatrixXd x(3, 2);
    x << 0, 0, 1, 0, 0, 1;
    const MStepResult r = m_step(two, x, EmSettings::defaults_for(unit_prior(2), 5));
    REQUIRE(r.reseeded == std::vector<int>{1});
    CHECK_NOTHROW(r.mixture.validate());
    CHECK(r.mixture.components[0].weight == doctest::Approx(2.0 / 3.0));
    CHECK(r.mixture.components[1].weight == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("tied covariance is shared") {
    Rng rng(7);
    const Eigen::MatrixXd x = em_data(rng, 30, 3, 2);
    EmSettings s = EmSettings::defaults_for(unit_prior(3));
    s.tied_covariance = true;
    const MixturePrior r = em_round(init_mixture(unit_prior(3), 2, 3, 30), x, s);
    CHECK(r.components[0].gaussian.covariance() == r.components[1].gaussian.covariance());
  }

  TEST_CASE("log likelihood examples") {
    const Eigen::Vector3d mu(1, -1, 0.5);
    Eigen::Matrix3d cov;
    cov << 2, 0.3, 0, 0.3, 1, 0.1, 0, 0.1, 0.5;
    MixturePrior one;
    one.components = {{GaussianPrior(mu, cov), 1.0}};
    Eigen::MatrixXd at(4, 3);
    for (int i = 0; i < 4; ++i) at.row(i) = mu.transpose();
    const double expect = 4.0 * (-0.5 * std::log(std::pow(2 * std::numbers::pi, 3) * cov.determinant()));
    CHECK(log_likelihood(one, at) == doctest::Approx(expect).epsilon(1e-13));

    Rng rng(8);
    const MixturePrior mix = init_mixture(unit_prior(3), 3, 4);
    const Eigen::MatrixXd x = em_data(rng, 10, 3, 2);
    Eigen::MatrixXd more(11, 3);
    more << x, x.row(6);
    CHECK(log_likelihood(mix, more) ==
          doctest::Approx(log_likelihood(mix, x) + log_mixture_density(mix, x.row(6).transpose())).epsilon(1e-13));
  }

  TEST_CASE("log likelihood matches a long double oracle") {
    Rng rng(9);
    for (int instance = 0; instance < 20; ++instance) {
      const Eigen::MatrixXd x = em_data(rng, 30, 3, 2);
      MixturePrior mix = init_mixture(unit_prior(3), 2, instance);
      mix.components[0].weight = 0.3;
      mix.components[1].weight = 0.7;
      long double total = 0.0L;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        long double s = 0.0L;
        for (const auto& c : mix.components) {
          s += static_cast<long double>(c.weight) * ref_density(x.row(i).transpose(), c.gaussian.mean(), c.gaussian.covariance());
        }
        total += std::log(s);
      }
      CHECK(std::abs(log_likelihood(mix, x) - static_cast<double>(total)) < 1e-10 * std::max(1.0L, std::abs(total)));
    }
  }
}
