#pragma once

#include <Eigen/Dense>

#include "dogfit/rng.hpp"

namespace dogfit {

// Multivariate normal with a cached Cholesky factor. Construction rejects
// covariances that are not symmetric (1e-10) or not positive definite.
class GaussianPrior {
 public:
  GaussianPrior() = default;
  GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& inverse() const { return inverse_; }
  double log_det() const { return log_det_; }

  // (x - mu)^T Sigma^-1 (x - mu) via triangular solves.
  double mahalanobis(const Eigen::VectorXd& x) const;
  // Sigma^-1 d.
  Eigen::VectorXd solve(const Eigen::VectorXd& d) const;
  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd inverse_;
  double log_det_ = 0.0;
};

}  // namespace dogfit
