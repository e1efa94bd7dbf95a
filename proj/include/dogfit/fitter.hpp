#pragma once

// Per-image two-stage energy minimization with Adam, and the batch driver that
// interleaves fitting with EM updates of the shape mixture.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dogfit/bundle.hpp"
#include "dogfit/losses.hpp"
#include "dogfit/mixture.hpp"

namespace dogfit {

struct FitConfig {
  int stage1_iterations = 250;
  int stage2_iterations = 150;
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double stage_lr_decay = 1.0;  // step size multiplier entering stage 2
  double sigma = 1e-2;          // soft rasterizer sharpness at the start of stage 2, normalized units
  double sigma_final = 1e-2;    // sharpness of the last stage-2 segment; geometric in between
  int em_interval = 50;         // stage-2 iterations between EM firings (segment length)
  int em_rounds = 1;            // e_step/m_step rounds per firing on the frozen betas
  int em_restarts = 0;          // extra data-seeded EM runs per firing; highest likelihood wins
  int clusters = 10;
  LossWeights weights;
  MixtureWeighting mixture_weighting = MixtureWeighting::ComponentWeights;
  bool tied_covariance = false;
  int warmup_iterations = 10;  // per yaw hypothesis in init_params
  int max_backtracks = 10;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidParameter
};

struct Trajectory {
  std::vector<int> stage;
  std::vector<double> joints, silhouette, pose, shape, mixture, total;
  std::vector<double> best;  // running best energy within the current segment

  std::size_t size() const { return total.size(); }
};

struct FitReport {
  std::string id;
  ParamState params;  // best iterate of the final segment
  Trajectory trajectory;
  int iterations = 0;
  double final_energy = 0.0;
  double wall_time = 0.0;  // seconds; not serialized
  bool converged = false;
  std::vector<double> responsibilities;  // under the final mixture
  bool quarantined = false;
  std::string error;
  int rejected_steps = 0;        // steps abandoned after exhausting backtracking
  int silhouette_evaluations = 0;
};

// Mean pose and shape, unit scale, f = max(W, H); t_z from the silhouette
// bounding-box height, t_xy putting the projected vertex centroid on the
// silhouette centroid; root yaw picked from {0, 90, 180, 270} degrees by the
// lowest stage-1 energy after `warmup_iterations` steps. The returned state is
// the chosen hypothesis before warmup.
ParamState init_params(const Annotation& ann, const ModelBundle& bundle, const FitConfig& config);

// Throws PoisonedValue when the energy becomes non-finite.
FitReport fit_single(const Annotation& ann, const ModelBundle& bundle, const MixturePrior& mixture,
                     const FitConfig& config, std::ostream* progress = nullptr);

struct EmEvent {
  int iteration = 0;  // overall iteration index at the firing
  double log_likelihood_before = 0.0;
  double log_likelihood_after = 0.0;
  std::vector<int> reseeded;
  MixturePrior mixture;  // after the M-step
};

struct BatchResult {
  std::vector<FitReport> reports;
  MixturePrior mixture;
  std::vector<EmEvent> em_events;
  double log_likelihood = 0.0;  // final betas under the final mixture, active images only
};

// `initial` defaults to init_mixture(shape prior, clusters, seed, N). Images that
// hit a numerical error are quarantined and excluded from later EM steps.
BatchResult fit_batch_with_em(const std::vector<Annotation>& anns, const ModelBundle& bundle,
                              const FitConfig& config, bool em_enabled, const MixturePrior* initial = nullptr,
                              std::ostream* progress = nullptr);

// Worker threads for batch fitting: DOGFIT_WORKERS, default 1.
int worker_count();

}  // namespace dogfit
