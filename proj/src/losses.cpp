#include "dogfit/losses.hpp"

#include <cmath>
#include <set>
#include <string>

namespace dogfit {

namespace {

constexpr double kNormEps = 1e-12;

template <class T>
std::span<const T> as_span(const std::vector<T>& v) {
  return {v.data(), v.size()};
}

std::vector<Vec2d> to_values(std::span<const Vec2<ad::Var>> xs) {
  std::vector<Vec2d> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = {xs[i][0].value(), xs[i][1].value()};
  return out;
}

std::vector<Vec2d> to_values(std::span<const Vec2d> xs) { return {xs.begin(), xs.end()}; }

template <class T>
std::vector<Vec2<T>> project_for(std::span<const Vec3<T>> points, const BasicParamState<T>& params,
                                 const Annotation& ann) {
  return project<T>(points, params.focal_length, params.translation, 0.5 * ann.width, 0.5 * ann.height);
}

template <class T>
T joint_loss_from_mesh(const PosedMesh<T>& mesh, const BasicParamState<T>& params, const Annotation& ann) {
  if (ann.num_visible() == 0) throw DegenerateAnnotation("joint_loss: annotation '" + ann.id + "' has no visible keypoints");
  std::vector<Vec3<T>> picked;
  for (std::size_t k = 0; k < ann.keypoints.size(); ++k) {
    if (ann.visible[k]) picked.push_back(mesh.joints[ann.keypoint_joints[k]]);
  }
  const std::vector<Vec2<T>> proj = project_for<T>(picked, params, ann);
  std::vector<T> residual;
  residual.reserve(2 * proj.size());
  std::size_t i = 0;
  for (std::size_t k = 0; k < ann.keypoints.size(); ++k) {
    if (!ann.visible[k]) continue;
    residual.push_back(ann.keypoints[k][0] - proj[i][0]);
    residual.push_back(ann.keypoints[k][1] - proj[i][1]);
    ++i;
  }
  return squared_norm_sqrt<T>(residual, kNormEps);
}

template <class T>
T silhouette_loss_from_mesh(const PosedMesh<T>& mesh, const BasicParamState<T>& params, const TemplateModel& model,
                            const Annotation& ann, double sigma) {
  if (ann.silhouette.width != ann.width || ann.silhouette.height != ann.height) {
    throw DimensionMismatch("silhouette_loss: mask size differs from annotation size for '" + ann.id + "'");
  }
  const std::vector<Vec2<T>> proj = project_for<T>(as_span(mesh.vertices), params, ann);
  const std::vector<Vec2d> vals = to_values(std::span<const Vec2<T>>(proj));
  const double sigma_px = sigma_in_pixels(sigma, ann.width, ann.height);
  const SoftMask rendered = soft_rasterize(vals, model.faces, ann.width, ann.height, sigma_px);
  std::vector<double> residual(rendered.values.size());
  double ss = kNormEps * kNormEps;
  for (std::size_t p = 0; p < residual.size(); ++p) {
    residual[p] = static_cast<double>(ann.silhouette.values[p]) - rendered.values[p];
    ss += residual[p] * residual[p];
  }
  const double loss = std::sqrt(ss);
  if constexpr (std::is_same_v<T, double>) {
    return loss;
  } else {
    ad::Tape* tape = nullptr;
    for (const auto& uv : proj) {
      for (const auto& c : uv) {
        if (!c.is_constant()) tape = c.tape();
      }
    }
    if (tape == nullptr) return ad::Var(loss);
    std::vector<double> upstream(residual.size());
    for (std::size_t p = 0; p < residual.size(); ++p) upstream[p] = -residual[p] / loss;
    const std::vector<Vec2d> grad =
        soft_rasterize_backward(vals, model.faces, ann.width, ann.height, sigma_px, upstream);
    std::vector<ad::Var> parents;
    std::vector<double> partials;
    parents.reserve(2 * proj.size());
    partials.reserve(2 * proj.size());
    for (std::size_t v = 0; v < proj.size(); ++v) {
      for (int a = 0; a < 2; ++a) {
        parents.push_back(proj[v][a]);
        partials.push_back(grad[v][a]);
      }
    }
    return tape->record("silhouette", loss, parents, partials);
  }
}

Eigen::VectorXd to_eigen(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

ad::Tape* tape_of(std::span<const ad::Var> xs) {
  for (const auto& x : xs) {
    if (!x.is_constant()) return x.tape();
  }
  return nullptr;
}

std::vector<double> mixture_coefficients(const MixturePrior& mix, std::span<const double> responsibilities) {
  if (mix.size() < 1) throw InvalidParameter("mixture_loss: need at least one component");
  std::vector<double> c(mix.size());
  if (responsibilities.empty()) {
    for (int m = 0; m < mix.size(); ++m) c[m] = mix.components[m].weight;
  } else {
    if (static_cast<int>(responsibilities.size()) != mix.size()) {
      throw DimensionMismatch("mixture_loss: responsibility row length != M");
    }
    c.assign(responsibilities.begin(), responsibilities.end());
  }
  double total = 0.0;
  for (double v : c) total += v;
  if (std::abs(total - 1.0) > 1e-6) {
    throw InvalidParameter("mixture_loss: weights sum to " + std::to_string(total) + ", expected 1");
  }
  return c;
}

template <class T>
T total_energy_impl(const BasicParamState<T>& params, const TemplateModel& model, const Annotation& ann,
                    const Priors& priors, const EnergyOptions& options, EnergyTerms* terms) {
  if (options.stage != 1 && options.stage != 2) throw InvalidParameter("total_energy: stage must be 1 or 2");
  const LossWeights& w = options.weights;
  EnergyTerms local;
  T total = 0.0;
  const bool need_sil = options.stage == 2 && w.silhouette != 0.0;
  const bool need_mesh = w.joints != 0.0 || need_sil;
  if (need_mesh) {
    const PosedMesh<T> mesh = skin<T>(model, params);
    if (w.joints != 0.0) {
      const T l = joint_loss_from_mesh<T>(mesh, params, ann);
      local.joints = value(l);
      total = total + w.joints * l;
    }
    if (need_sil) {
      const T l = silhouette_loss_from_mesh<T>(mesh, params, model, ann, options.sigma);
      local.silhouette = value(l);
      local.silhouette_evaluated = true;
      total = total + w.silhouette * l;
    }
  }
  if (w.pose != 0.0) {
    const T l = gaussian_prior_loss(as_span(params.pose), priors.pose);
    local.pose = value(l);
    total = total + w.pose * l;
  }
  if (options.stage == 1 && w.shape != 0.0) {
    const T l = gaussian_prior_loss(as_span(params.shape), priors.shape);
    local.shape = value(l);
    total = total + w.shape * l;
  }
  if (options.stage == 2 && w.mixture != 0.0) {
    if (options.mixture == nullptr) throw InvalidParameter("total_energy: stage 2 requires a mixture prior");
    const std::span<const double> resp =
        options.mixture_weighting == MixtureWeighting::Responsibilities ? options.responsibilities
                                                                         : std::span<const double>{};
    if (options.mixture_weighting == MixtureWeighting::Responsibilities && resp.empty()) {
      throw InvalidParameter("total_energy: responsibility weighting needs this image's responsibilities");
    }
    const T l = mixture_loss(as_span(params.shape), *options.mixture, resp);
    local.mixture = value(l);
    total = total + w.mixture * l;
  }
  local.total = value(total);
  if (terms != nullptr) *terms = local;
  return total;
}

}  // namespace

int Annotation::num_visible() const {
  int n = 0;
  for (bool v : visible) n += v ? 1 : 0;
  return n;
}

void Annotation::validate(const TemplateModel& model) const {
  if (keypoints.size() != visible.size() || keypoints.size() != keypoint_joints.size()) {
    throw DimensionMismatch("annotation '" + id + "': keypoint, visibility and joint map lengths differ");
  }
  if (width < 1 || height < 1) throw DegenerateAnnotation("annotation '" + id + "': empty image size");
  if (silhouette.width != width || silhouette.height != height) {
    throw DimensionMismatch("annotation '" + id + "': mask is " + std::to_string(silhouette.width) + "x" +
                            std::to_string(silhouette.height) + ", declared " + std::to_string(width) + "x" +
                            std::to_string(height));
  }
  std::set<int> seen;
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const int j = keypoint_joints[k];
    if (j < 0 || j >= model.num_joints()) throw DimensionMismatch("annotation '" + id + "': keypoint joint out of range");
    if (!seen.insert(j).second) throw DimensionMismatch("annotation '" + id + "': two keypoints map to joint " + std::to_string(j));
    if (!visible[k]) continue;
    const auto& p = keypoints[k];
    if (!(p[0] >= 0.0 && p[0] <= width && p[1] >= 0.0 && p[1] <= height)) {
      throw DegenerateAnnotation("annotation '" + id + "': visible keypoint " + std::to_string(k) + " outside the image");
    }
  }
}

Camera camera_for(const Annotation& ann, double focal_length, const Vec3d& translation) {
  return Camera::centered(focal_length, ann.width, ann.height, translation);
}

double joint_loss(const ParamState& params, const TemplateModel& model, const Annotation& ann) {
  return joint_loss_from_mesh<double>(skin<double>(model, params), params, ann);
}

ad::Var joint_loss(const VarParams& params, const TemplateModel& model, const Annotation& ann) {
  return joint_loss_from_mesh<ad::Var>(skin<ad::Var>(model, params), params, ann);
}

double silhouette_loss(const ParamState& params, const TemplateModel& model, const Annotation& ann, double sigma) {
  return silhouette_loss_from_mesh<double>(skin<double>(model, params), params, model, ann, sigma);
}

ad::Var silhouette_loss(const VarParams& params, const TemplateModel& model, const Annotation& ann, double sigma) {
  return silhouette_loss_from_mesh<ad::Var>(skin<ad::Var>(model, params), params, model, ann, sigma);
}

double gaussian_prior_loss(std::span<const double> x, const GaussianPrior& prior) {
  if (static_cast<int>(x.size()) != prior.dim()) throw DimensionMismatch("gaussian_prior_loss: dimension mismatch");
  return prior.mahalanobis(to_eigen(x));
}

ad::Var gaussian_prior_loss(std::span<const ad::Var> x, const GaussianPrior& prior) {
  if (static_cast<int>(x.size()) != prior.dim()) throw DimensionMismatch("gaussian_prior_loss: dimension mismatch");
  const std::vector<double> vals = values_of<ad::Var>(x);
  const Eigen::VectorXd xv = to_eigen(vals);
  const double loss = prior.mahalanobis(xv);
  ad::Tape* tape = tape_of(x);
  if (tape == nullptr) return ad::Var(loss);
  const Eigen::VectorXd g = 2.0 * prior.solve(xv - prior.mean());
  return tape->record("gaussian_prior", loss, x, std::span<const double>(g.data(), g.size()));
}

double mixture_loss(std::span<const double> beta, const MixturePrior& mix, std::span<const double> responsibilities) {
  const std::vector<double> c = mixture_coefficients(mix, responsibilities);
  double total = 0.0;
  for (int m = 0; m < mix.size(); ++m) total += c[m] * gaussian_prior_loss(beta, mix.components[m].gaussian);
  return total;
}

ad::Var mixture_loss(std::span<const ad::Var> beta, const MixturePrior& mix, std::span<const double> responsibilities) {
  const std::vector<double> c = mixture_coefficients(mix, responsibilities);
  if (static_cast<int>(beta.size()) != mix.dim()) throw DimensionMismatch("mixture_loss: dimension mismatch");
  const std::vector<double> vals = values_of<ad::Var>(beta);
  const Eigen::VectorXd xv = to_eigen(vals);
  double total = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(xv.size());
  for (int m = 0; m < mix.size(); ++m) {
    const GaussianPrior& g = mix.components[m].gaussian;
    total += c[m] * g.mahalanobis(xv);
    grad += 2.0 * c[m] * g.solve(xv - g.mean());
  }
  ad::Tape* tape = tape_of(beta);
  if (tape == nullptr) return ad::Var(total);
  return tape->record("mixture", total, beta, std::span<const double>(grad.data(), grad.size()));
}

double total_energy(const ParamState& params, const TemplateModel& model, const Annotation& ann, const Priors& priors,
                    const EnergyOptions& options, EnergyTerms* terms) {
  return total_energy_impl<double>(params, model, ann, priors, options, terms);
}

ad::Var total_energy(const VarParams& params, const TemplateModel& model, const Annotation& ann, const Priors& priors,
                     const EnergyOptions& options, EnergyTerms* terms) {
  return total_energy_impl<ad::Var>(params, model, ann, priors, options, terms);
}

}  // namespace dogfit
