#pragma once

// Mixture-of-Gaussians shape prior refined by expectation maximization over
// per-image shape estimates. All densities are handled in log space.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dogfit/gaussian.hpp"

namespace dogfit {

struct MixtureComponent {
  GaussianPrior gaussian;
  double weight = 0.0;
};

struct MixturePrior {
  std::vector<MixtureComponent> components;
  Eigen::MatrixXd responsibilities;  // N x M, row-stochastic; may have zero rows

  int size() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : components.front().gaussian.dim(); }
  Eigen::VectorXd weights() const;

  // Weights sum to 1 (1e-9), responsibilities row-stochastic (1e-9), equal dims.
  void validate() const;
};

// Means drawn from the unimodal prior, covariances copied from it, weights 1/M.
// `num_images` uniform responsibility rows are attached.
MixturePrior init_mixture(const GaussianPrior& unimodal, int num_components, std::uint64_t seed,
                          int num_images = 0);

// k-means++ seeding: means picked from the rows of betas (N x B), covariances
// copied from the unimodal prior, weights 1/M.
MixturePrior init_mixture_from_data(const GaussianPrior& unimodal, int num_components, const Eigen::MatrixXd& betas,
                                    std::uint64_t seed);

// betas is N x B, one shape estimate per row. Returns the N x M responsibilities.
Eigen::MatrixXd e_step(const MixturePrior& mix, const Eigen::MatrixXd& betas);

struct EmSettings {
  GaussianPrior unimodal;    // reseeding source for collapsed components
  double regularization = 0.0;  // lambda added to every covariance diagonal
  bool tied_covariance = false;
  double collapse_fraction = 1e-8;  // effective weight below fraction * N collapses
  std::uint64_t seed = 0;

  // lambda = 1e-6 * trace(Sigma) / B of the unimodal prior.
  static EmSettings defaults_for(const GaussianPrior& unimodal, std::uint64_t seed = 0);
};

struct MStepResult {
  MixturePrior mixture;
  std::vector<int> reseeded;  // indices of collapsed components that were reseeded
};

// Uses mix.responsibilities (N x M) as fixed latent weights.
MStepResult m_step(const MixturePrior& mix, const Eigen::MatrixXd& betas, const EmSettings& settings);

// sum_i log sum_m Pi_m N(beta_i | mu_m, Sigma_m).
double log_likelihood(const MixturePrior& mix, const Eigen::MatrixXd& betas);

// log sum_m Pi_m N(beta | mu_m, Sigma_m) for one row.
double log_mixture_density(const MixturePrior& mix, const Eigen::VectorXd& beta);

}  // namespace dogfit
