#pragma once

#include <span>
#include <string>
#include <vector>

#include "dogfit/autodiff.hpp"
#include "dogfit/camera.hpp"
#include "dogfit/gaussian.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/model.hpp"
#include "dogfit/render.hpp"

namespace dogfit {

struct Annotation {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<Vec2d> keypoints;    // pixels
  std::vector<bool> visible;
  BinaryMask silhouette;
  std::vector<int> keypoint_joints;  // model joint for each keypoint

  int num_visible() const;
  // Bounds, sizes and distinct joints; throws DegenerateAnnotation / DimensionMismatch.
  void validate(const TemplateModel& model) const;
};

using VarParams = BasicParamState<ad::Var>;

struct Priors {
  GaussianPrior pose;
  GaussianPrior shape;
};

struct LossWeights {
  double joints = 10.0;
  double silhouette = 1.0;
  double pose = 0.1;
  double shape = 0.5;
  double mixture = 0.5;
};

enum class MixtureWeighting {
  ComponentWeights,  // sum_m Pi_m L_shape(beta; mu_m, Sigma_m)
  Responsibilities,  // sum_m w_i^m L_shape(beta; mu_m, Sigma_m)
};

struct EnergyOptions {
  int stage = 1;        // 1: joints + unimodal priors; 2: adds silhouette and mixture
  double sigma = 1e-2;  // soft rasterizer sharpness, normalized image units
  LossWeights weights;
  MixtureWeighting mixture_weighting = MixtureWeighting::ComponentWeights;
  const MixturePrior* mixture = nullptr;      // required in stage 2 when the mixture weight is non-zero
  std::span<const double> responsibilities;  // this image's row, Responsibilities mode only
};

// Unweighted term values of the last total_energy evaluation.
struct EnergyTerms {
  double joints = 0.0;
  double silhouette = 0.0;
  double pose = 0.0;
  double shape = 0.0;
  double mixture = 0.0;
  double total = 0.0;
  bool silhouette_evaluated = false;
};

Camera camera_for(const Annotation& ann, double focal_length, const Vec3d& translation);

// || X_hat - pi(F_J) ||_2 over visible keypoints.
double joint_loss(const ParamState& params, const TemplateModel& model, const Annotation& ann);
ad::Var joint_loss(const VarParams& params, const TemplateModel& model, const Annotation& ann);

// || S_hat - R(F_V) ||_2 over all pixels with the soft rasterizer.
double silhouette_loss(const ParamState& params, const TemplateModel& model, const Annotation& ann, double sigma);
ad::Var silhouette_loss(const VarParams& params, const TemplateModel& model, const Annotation& ann, double sigma);

// (x - mu)^T Sigma^-1 (x - mu).
double gaussian_prior_loss(std::span<const double> x, const GaussianPrior& prior);
ad::Var gaussian_prior_loss(std::span<const ad::Var> x, const GaussianPrior& prior);

// sum_m c_m (beta - mu_m)^T Sigma_m^-1 (beta - mu_m) with c = Pi, or c = the given
// responsibilities when non-empty. Coefficients must sum to 1 within 1e-6.
double mixture_loss(std::span<const double> beta, const MixturePrior& mix,
                    std::span<const double> responsibilities = {});
ad::Var mixture_loss(std::span<const ad::Var> beta, const MixturePrior& mix,
                     std::span<const double> responsibilities = {});

double total_energy(const ParamState& params, const TemplateModel& model, const Annotation& ann,
                    const Priors& priors, const EnergyOptions& options, EnergyTerms* terms = nullptr);
ad::Var total_energy(const VarParams& params, const TemplateModel& model, const Annotation& ann,
                     const Priors& priors, const EnergyOptions& options, EnergyTerms* terms = nullptr);

}  // namespace dogfit
