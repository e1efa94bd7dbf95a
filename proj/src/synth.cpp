#include "dogfit/synth.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dogfit/rng.hpp"

namespace dogfit {

std::vector<ClusterSpec> two_cluster_spec(int num_shapes, double separation, double stddev, int axis) {
  if (axis < 0 || axis >= num_shapes) throw InvalidParameter("two_cluster_spec: axis out of range");
  std::vector<ClusterSpec> out(2);
  for (int c = 0; c < 2; ++c) {
    out[c].mean = Eigen::VectorXd::Zero(num_shapes);
    out[c].mean[axis] = (c == 0 ? -0.5 : 0.5) * separation;
    out[c].covariance = stddev * stddev * Eigen::MatrixXd::Identity(num_shapes, num_shapes);
  }
  return out;
}

std::vector<Vec2d> project_keypoints(const ModelBundle& bundle, const ParamState& params, int width, int height) {
  const PosedMesh<double> mesh = skin<double>(bundle.model, params);
  std::vector<Vec3d> pts;
  for (int j : bundle.keypoint_joints) pts.push_back(mesh.joints[j]);
  return project<double>(pts, params.focal_length, params.translation, 0.5 * width, 0.5 * height);
}

BinaryMask render_silhouette(const ModelBundle& bundle, const ParamState& params, int width, int height) {
  const PosedMesh<double> mesh = skin<double>(bundle.model, params);
  return render_hard(mesh, bundle.model.faces,
                     Camera::centered(params.focal_length, width, height, params.translation));
}

namespace {

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov, int c) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || !cov.allFinite()) {
    throw InvalidParameter("synth: cluster " + std::to_string(c) + " covariance is not positive definite");
  }
  return llt.matrixL();
}

Mat3d yaw_matrix(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c};
}

}  // namespace

std::vector<SynthSample> synth_generate(const ModelBundle& bundle, const SynthOptions& options) {
  if (options.count < 1) throw InvalidParameter("synth: count must be at least 1");
  if (options.width < 8 || options.height < 8) throw InvalidParameter("synth: image must be at least 8x8");
  if (options.noise.dropout < 0.0 || options.noise.dropout >= 1.0) {
    throw InvalidParameter("synth: dropout must be in [0, 1)");
  }
  const TemplateModel& model = bundle.model;
  const int nb = model.num_shapes();
  std::vector<ClusterSpec> clusters = options.clusters;
  if (clusters.empty()) clusters.push_back({bundle.shape_prior.mean(), bundle.shape_prior.covariance()});
  std::vector<Eigen::MatrixXd> factors;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].mean.size() != nb || clusters[c].covariance.rows() != nb || clusters[c].covariance.cols() != nb) {
      throw DimensionMismatch("synth: cluster " + std::to_string(c) + " has the wrong dimension");
    }
    factors.push_back(cholesky_factor(clusters[c].covariance, static_cast<int>(c)));
  }
  const int num_clusters = static_cast<int>(clusters.size());
  Rng rng(options.seed);
  std::vector<Eigen::VectorXd> pending(num_clusters);  // mirrored half of an antithetic pair
  std::vector<bool> has_pending(num_clusters, false);
  const Eigen::VectorXd pose_std = bundle.pose_prior.covariance().diagonal().cwiseSqrt();
  const int root = model.root();
  const double size = std::max(options.width, options.height);

  std::vector<SynthSample> out;
  for (int i = 0; i < options.count; ++i) {
    SynthSample s;
    s.cluster = i % num_clusters;
    Eigen::VectorXd z;
    if (options.antithetic && has_pending[s.cluster]) {
      z = -pending[s.cluster];
      has_pending[s.cluster] = false;
    } else {
      z = rng.normal_vector(nb);
      pending[s.cluster] = z;
      has_pending[s.cluster] = options.antithetic;
    }
    const Eigen::VectorXd beta = clusters[s.cluster].mean + factors[s.cluster] * z;

    // Rejection loop on the camera and pose until the whole dog is in frame.
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw NumericalDegeneracy("synth: could not frame image " + std::to_string(i));
      ParamState p = zero_params(model);
      p.shape.assign(beta.data(), beta.data() + nb);
      for (int j = 0; j < model.num_joints(); ++j) {
        if (j == root) continue;
        for (int a = 0; a < 3; ++a) {
          p.pose[3 * j + a] = bundle.pose_prior.mean()[3 * j + a] + options.pose_scale * pose_std[3 * j + a] * rng.normal();
        }
      }
      const double yaw = (rng.uniform() < 0.5 ? 0.0 : std::numbers::pi) + 0.15 * (rng.uniform() - 0.5);
      const Mat3d tilt = rodrigues<double>({0.05 * rng.normal(), 0.0, 0.05 * rng.normal()});
      const Vec3d root_aa = rotation_to_axis_angle(matmul(tilt, yaw_matrix(yaw)));
      for (int a = 0; a < 3; ++a) p.pose[3 * root + a] = root_aa[a];
      for (auto& k : p.log_scale) k = options.log_scale_std * rng.normal();
      p.focal_length = size * rng.uniform(0.9, 1.1);
      p.translation = {rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(5.5, 7.0)};

      const PosedMesh<double> mesh = skin<double>(model, p);
      bool framed = true;
      for (const Vec3d& v : mesh.vertices) framed = framed && v[2] + p.translation[2] > 0.5;
      if (!framed) continue;
      const Camera cam = Camera::centered(p.focal_length, options.width, options.height, p.translation);
      for (const Vec2d& uv : project(mesh.vertices, cam)) {
        framed = framed && uv[0] > 1.0 && uv[0] < options.width - 1.0 && uv[1] > 1.0 && uv[1] < options.height - 1.0;
      }
      if (!framed) continue;

      Annotation& ann = s.annotation;
      char id[32];
      std::snprintf(id, sizeof id, "img%04d", i);
      ann.id = id;
      ann.width = options.width;
      ann.height = options.height;
      ann.keypoint_joints = bundle.keypoint_joints;
      ann.silhouette = render_hard(mesh, model.faces, cam);
      ann.keypoints = project_keypoints(bundle, p, options.width, options.height);
      ann.visible.assign(ann.keypoints.size(), true);
      for (std::size_t k = 0; k < ann.keypoints.size(); ++k) {
        if (options.noise.keypoint_sigma > 0.0) {
          ann.keypoints[k][0] += options.noise.keypoint_sigma * rng.normal();
          ann.keypoints[k][1] += options.noise.keypoint_sigma * rng.normal();
        }
        if (options.noise.dropout > 0.0 && rng.uniform() < options.noise.dropout) ann.visible[k] = false;
        const Vec2d& q = ann.keypoints[k];
        if (!(q[0] >= 0.0 && q[0] <= options.width && q[1] >= 0.0 && q[1] <= options.height)) ann.visible[k] = false;
      }
      if (ann.num_visible() == 0) ann.visible[0] = true;
      s.truth = p;
      break;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dogfit
