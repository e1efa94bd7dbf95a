#include "dogfit/mixture.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dogfit/errors.hpp"

namespace dogfit {

Eigen::VectorXd MixturePrior::weights() const {
  Eigen::VectorXd w(size());
  for (int m = 0; m < size(); ++m) w[m] = components[m].weight;
  return w;
}

void MixturePrior::validate() const {
  if (components.empty()) throw InvalidParameter("mixture: no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (c.gaussian.dim() != dim()) throw DimensionMismatch("mixture: component dimensions differ");
    if (!(c.weight >= 0.0)) throw InvalidParameter("mixture: negative component weight");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidParameter("mixture: weights sum to " + std::to_string(total) + ", expected 1");
  }
  if (responsibilities.rows() > 0) {
    if (responsibilities.cols() != size()) throw DimensionMismatch("mixture: responsibility columns != M");
    for (Eigen::Index i = 0; i < responsibilities.rows(); ++i) {
      const double s = responsibilities.row(i).sum();
      if (std::abs(s - 1.0) > 1e-9 || (responsibilities.row(i).array() < 0.0).any()) {
        throw InvalidParameter("mixture: responsibility row " + std::to_string(i) + " is not stochastic");
      }
    }
  }
}

MixturePrior init_mixture(const GaussianPrior& unimodal, int num_components, std::uint64_t seed, int num_images) {
  if (num_components < 1) throw InvalidParameter("init_mixture: need at least one component");
  Rng rng(seed);
  MixturePrior mix;
  for (int m = 0; m < num_components; ++m) {
    mix.components.push_back({GaussianPrior(unimodal.sample(rng), unimodal.covariance()), 1.0 / num_components});
  }
  mix.responsibilities = Eigen::MatrixXd::Constant(num_images, num_components, 1.0 / num_components);
  return mix;
}

MixturePrior init_mixture_from_data(const GaussianPrior& unimodal, int num_components, const Eigen::MatrixXd& betas,
                                    std::uint64_t seed) {
  if (num_components < 1) throw InvalidParameter("init_mixture_from_data: need at least one component");
  if (betas.rows() < 1) throw InvalidParameter("init_mixture_from_data: need at least one shape estimate");
  if (betas.cols() != unimodal.dim()) throw DimensionMismatch("init_mixture_from_data: shape dimension mismatch");
  Rng rng(seed);
  const Eigen::Index n = betas.rows();
  std::vector<Eigen::VectorXd> means{betas.row(static_cast<Eigen::Index>(rng.next() % n)).transpose()};
  Eigen::VectorXd d2(n);
  while (static_cast<int>(means.size()) < num_components) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto& mu : means) d2[i] = std::min(d2[i], (betas.row(i).transpose() - mu).squaredNorm());
    }
    const double total = d2.sum();
    Eigen::Index pick = static_cast<Eigen::Index>(rng.next() % n);
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    }
    means.push_back(betas.row(pick).transpose());
  }
  MixturePrior mix;
  for (const auto& mu : means) mix.components.push_back({GaussianPrior(mu, unimodal.covariance()), 1.0 / num_components});
  mix.responsibilities = Eigen::MatrixXd::Constant(n, num_components, 1.0 / num_components);
  return mix;
}

namespace {

Eigen::VectorXd log_joint(const MixturePrior& mix, const Eigen::VectorXd& beta) {
  Eigen::VectorXd lw(mix.size());
  for (int m = 0; m < mix.size(); ++m) {
    const auto& c = mix.components[m];
    lw[m] = std::log(c.weight) + c.gaussian.log_density(beta);
  }
  return lw;
}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double hi = x.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((x.array() - hi).exp().sum());
}

}  // namespace

Eigen::MatrixXd e_step(const MixturePrior& mix, const Eigen::MatrixXd& betas) {
  if (betas.rows() < 1) throw InvalidParameter("e_step: need at least one shape estimate");
  if (betas.cols() != mix.dim()) throw DimensionMismatch("e_step: shape dimension mismatch");
  Eigen::MatrixXd w(betas.rows(), mix.size());
  for (Eigen::Index i = 0; i < betas.rows(); ++i) {
    const Eigen::VectorXd lw = log_joint(mix, betas.row(i).transpose());
    const double norm = log_sum_exp(lw);
    if (!std::isfinite(norm)) {
      throw NumericalDegeneracy("e_step: all component densities vanish for shape estimate " + std::to_string(i));
    }
    w.row(i) = (lw.array() - norm).exp().transpose();
    w.row(i) /= w.row(i).sum();
  }
  return w;
}

EmSettings EmSettings::defaults_for(const GaussianPrior& unimodal, std::uint64_t seed) {
  EmSettings s;
  s.unimodal = unimodal;
  s.regularization = 1e-6 * unimodal.covariance().trace() / static_cast<double>(unimodal.dim());
  s.seed = seed;
  return s;
}

MStepResult m_step(const MixturePrior& mix, const Eigen::MatrixXd& betas, const EmSettings& settings) {
  const Eigen::Index n = betas.rows();
  const int num = mix.size();
  const int dim = mix.dim();
  if (n < 1) throw InvalidParameter("m_step: need at least one shape estimate");
  if (betas.cols() != dim) throw DimensionMismatch("m_step: shape dimension mismatch");
  if (mix.responsibilities.rows() != n || mix.responsibilities.cols() != num) {
    throw DimensionMismatch("m_step: responsibilities must be N x M");
  }
  const Eigen::MatrixXd& w = mix.responsibilities;
  const Eigen::MatrixXd reg = settings.regularization * Eigen::MatrixXd::Identity(dim, dim);

  MStepResult out;
  std::vector<Eigen::VectorXd> means(num);
  std::vector<Eigen::MatrixXd> scatter(num);
  std::vector<double> weights(num);
  std::vector<bool> collapsed(num, false);
  for (int m = 0; m < num; ++m) {
    const double eff = w.col(m).sum();
    if (eff <= settings.collapse_fraction * static_cast<double>(n)) {
      collapsed[m] = true;
      continue;
    }
    means[m] = (betas.transpose() * w.col(m)) / eff;
    const Eigen::MatrixXd centered = betas.rowwise() - means[m].transpose();
    scatter[m] = centered.transpose() * w.col(m).asDiagonal() * centered;
    weights[m] = eff / static_cast<double>(n);
  }

  Eigen::MatrixXd tied = Eigen::MatrixXd::Zero(dim, dim);
  if (settings.tied_covariance) {
    for (int m = 0; m < num; ++m) {
      if (!collapsed[m]) tied += scatter[m];
    }
    tied = tied / static_cast<double>(n) + reg;
  }

  Rng rng(settings.seed);
  double total = 0.0;
  for (int m = 0; m < num; ++m) {
    if (collapsed[m]) {
      out.reseeded.push_back(m);
      const Eigen::MatrixXd cov = settings.tied_covariance ? tied : settings.unimodal.covariance();
      out.mixture.components.push_back({GaussianPrior(settings.unimodal.sample(rng), cov), 1.0 / num});
    } else {
      Eigen::MatrixXd cov = settings.tied_covariance ? tied : Eigen::MatrixXd(scatter[m] / (weights[m] * n) + reg);
      cov = 0.5 * (cov + cov.transpose());
      out.mixture.components.push_back({GaussianPrior(means[m], cov), weights[m]});
    }
    total += out.mixture.components.back().weight;
  }
  if (!out.reseeded.empty()) {
    for (auto& c : out.mixture.components) c.weight /= total;
  }
  out.mixture.responsibilities = w;
  return out;
}

double log_mixture_density(const MixturePrior& mix, const Eigen::VectorXd& beta) {
  return log_sum_exp(log_joint(mix, beta));
}

double log_likelihood(const MixturePrior& mix, const Eigen::MatrixXd& betas) {
  if (betas.cols() != mix.dim()) throw DimensionMismatch("log_likelihood: shape dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < betas.rows(); ++i) total += log_mixture_density(mix, betas.row(i).transpose());
  return total;
}

}  // namespace dogfit
