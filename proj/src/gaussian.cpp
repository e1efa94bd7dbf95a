#include "dogfit/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dogfit/errors.hpp"

namespace dogfit {

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const auto n = mean_.size();
  if (covariance_.rows() != n || covariance_.cols() != n) {
    throw DimensionMismatch("gaussian: covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) throw InvalidParameter("gaussian: non-finite entry");
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw InvalidParameter("gaussian: covariance is not symmetric");
  }
  llt_.compute(covariance_);
  if (llt_.info() != Eigen::Success) throw InvalidParameter("gaussian: covariance is not positive definite");
  const Eigen::MatrixXd l = llt_.matrixL();
  log_det_ = 2.0 * l.diagonal().array().log().sum();
  if (!std::isfinite(log_det_) || (l.diagonal().array() <= 0.0).any()) {
    throw InvalidParameter("gaussian: covariance is not positive definite");
  }
  inverse_ = llt_.solve(Eigen::MatrixXd::Identity(n, n));
}

double GaussianPrior::mahalanobis(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw DimensionMismatch("gaussian: dimension mismatch");
  const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
  return z.squaredNorm();
}

Eigen::VectorXd GaussianPrior::solve(const Eigen::VectorXd& d) const {
  if (d.size() != mean_.size()) throw DimensionMismatch("gaussian: dimension mismatch");
  return llt_.solve(d);
}

double GaussianPrior::log_density(const Eigen::VectorXd& x) const {
  return -0.5 * (static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi) + log_det_ + mahalanobis(x));
}

Eigen::VectorXd GaussianPrior::sample(Rng& rng) const {
  return mean_ + llt_.matrixL() * rng.normal_vector(dim());
}

}  // namespace dogfit
