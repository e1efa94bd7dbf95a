#include "dogfit/fitter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <thread>

#include "dogfit/gradcheck.hpp"

namespace dogfit {

void FitConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidParameter(std::string("config: ") + what);
  };
  require(stage1_iterations >= 0 && stage2_iterations >= 0, "iteration counts must be non-negative");
  require(stage1_iterations + stage2_iterations >= 1, "at least one iteration is required");
  require(step_size > 0.0 && std::isfinite(step_size), "step_size must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
  require(epsilon > 0.0, "epsilon must be positive");
  require(stage_lr_decay > 0.0, "stage_lr_decay must be positive");
  require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
  require(sigma_final > 0.0 && std::isfinite(sigma_final), "sigma_final must be positive");
  require(em_interval >= 1, "em_interval must be at least 1");
  require(em_rounds >= 1, "em_rounds must be at least 1");
  require(em_restarts >= 0, "em_restarts must be non-negative");
  require(clusters >= 1, "clusters must be at least 1");
  require(warmup_iterations >= 0, "warmup_iterations must be non-negative");
  require(max_backtracks >= 0, "max_backtracks must be non-negative");
  for (double w : {weights.joints, weights.silhouette, weights.pose, weights.shape, weights.mixture}) {
    require(w >= 0.0 && std::isfinite(w), "loss weights must be finite and non-negative");
  }
}

int worker_count() {
  const char* env = std::getenv("DOGFIT_WORKERS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return std::clamp(n, 1, 64);
}

namespace {

std::mutex progress_mutex;

struct Evaluated {
  double energy = 0.0;
  std::vector<double> grad;
  EnergyTerms terms;
};

// Optimizer state of one image.
class ImageFitter {
 public:
  ImageFitter(const Annotation& ann, const ModelBundle& bundle, const FitConfig& config, ParamState init,
              std::ostream* progress)
      : ann_(ann), bundle_(bundle), config_(config), priors_(bundle.priors()), progress_(progress) {
    p_ = std::move(init);
    best_ = p_;
    report_.id = ann.id;
    options_.weights = config.weights;
    options_.mixture_weighting = config.mixture_weighting;
    options_.sigma = config.sigma;
  }

  void begin_stage(int stage, double lr, const MixturePrior* mix, std::span<const double> resp) {
    stage_ = stage;
    lr_ = lr;
    t_ = 0;
    const std::size_t n = flatten(p_).size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
    begin_segment(mix, config_.sigma, resp);
  }

  // Re-evaluates the current iterate under a new mixture / sharpness.
  void begin_segment(const MixturePrior* mix, double sigma, std::span<const double> resp) {
    options_.stage = stage_;
    options_.mixture = mix;
    options_.sigma = sigma;
    resp_.assign(resp.begin(), resp.end());
    options_.responsibilities = resp_;
    cur_ = evaluate(p_);
    best_ = p_;
    best_energy_ = cur_.energy;
  }

  void step() {
    ++t_;
    const std::vector<double> x = flatten(p_);
    std::vector<double> delta(x.size());
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = cur_.grad[i];
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
      delta[i] = lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.epsilon);
    }
    double scale = 1.0;
    bool accepted = false;
    std::vector<double> cand(x.size());
    for (int attempt = 0; attempt <= config_.max_backtracks && !accepted; ++attempt) {
      for (std::size_t i = 0; i < x.size(); ++i) cand[i] = x[i] - scale * delta[i];
      ParamState next = unflatten(p_, cand);
      if (!(next.translation[2] > 0.0) || !(next.focal_length > 0.0)) {
        scale *= 0.5;
        continue;
      }
      try {
        cur_ = evaluate(next);
        p_ = std::move(next);
        accepted = true;
      } catch (const BehindCamera&) {
        scale *= 0.5;
      }
    }
    if (!accepted) ++report_.rejected_steps;
    ++iteration_;
    record();
  }

  void reset_to_best() {
    p_ = best_;
    cur_ = evaluate(p_);
  }

  const ParamState& params() const { return p_; }
  const ParamState& best() const { return best_; }
  double best_energy() const { return best_energy_; }
  FitReport& report() { return report_; }

  FitReport finish(double seconds) {
    report_.params = best_;
    report_.final_energy = best_energy_;
    report_.iterations = iteration_;
    report_.wall_time = seconds;
    const auto& b = report_.trajectory.best;
    if (b.size() >= 11) {
      const double e = b.back();
      report_.converged = std::abs(b[b.size() - 11] - e) <= 1e-6 * std::max(1.0, std::abs(e));
    }
    return report_;
  }

 private:
  Evaluated evaluate(const ParamState& p) {
    EnergyTerms terms;
    const VarEnergy energy = [&](const VarParams& v) {
      return total_energy(v, bundle_.model, ann_, priors_, options_, &terms);
    };
    const Evaluation e = record_and_backward(energy, p, tape_);
    if (!std::isfinite(e.value)) throw PoisonedValue("total_energy", e.value);
    if (terms.silhouette_evaluated) ++report_.silhouette_evaluations;
    return {e.value, flatten(e.gradient), terms};
  }

  void record() {
    Trajectory& tr = report_.trajectory;
    if (cur_.energy < best_energy_) {
      best_energy_ = cur_.energy;
      best_ = p_;
    }
    tr.stage.push_back(stage_);
    tr.joints.push_back(cur_.terms.joints);
    tr.silhouette.push_back(cur_.terms.silhouette);
    tr.pose.push_back(cur_.terms.pose);
    tr.shape.push_back(cur_.terms.shape);
    tr.mixture.push_back(cur_.terms.mixture);
    tr.total.push_back(cur_.energy);
    tr.best.push_back(best_energy_);
    if (progress_ != nullptr && iteration_ % 10 == 0) {
      char line[160];
      std::snprintf(line, sizeof line, "%s iter %d stage %d energy %.6g\n", ann_.id.c_str(), iteration_, stage_,
                    cur_.energy);
      std::lock_guard<std::mutex> lock(progress_mutex);
      *progress_ << line << std::flush;
    }
  }

  const Annotation& ann_;
  const ModelBundle& bundle_;
  const FitConfig& config_;
  Priors priors_;
  std::ostream* progress_;
  EnergyOptions options_;
  std::vector<double> resp_;
  ad::Tape tape_;
  ParamState p_, best_;
  Evaluated cur_;
  double best_energy_ = std::numeric_limits<double>::infinity();
  std::vector<double> m_, v_;
  double lr_ = 0.0;
  int t_ = 0;
  int stage_ = 1;
  int iteration_ = 0;
  FitReport report_;
};

// Runs fn(i) for i in [0, n) on worker threads; fn must not throw.
template <class F>
void parallel_for(int n, F&& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

Mat3d yaw_matrix(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c};
}

struct SilhouetteStats {
  double u = 0.0, v = 0.0;  // centroid of pixel centers
  int row_min = 0, row_max = 0;
};

SilhouetteStats silhouette_stats(const Annotation& ann) {
  const BinaryMask& m = ann.silhouette;
  SilhouetteStats s;
  s.row_min = m.height;
  s.row_max = -1;
  std::size_t n = 0;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      ++n;
      s.u += c + 0.5;
      s.v += r + 0.5;
      s.row_min = std::min(s.row_min, r);
      s.row_max = std::max(s.row_max, r);
    }
  }
  if (n == 0) throw DegenerateAnnotation("init_params: annotation '" + ann.id + "' has an empty silhouette");
  s.u /= static_cast<double>(n);
  s.v /= static_cast<double>(n);
  return s;
}

// Places the rest-posed mesh of `p` (translation ignored) over the silhouette.
void place_camera(ParamState& p, const ModelBundle& bundle, const Annotation& ann, const SilhouetteStats& s) {
  ParamState at_origin = p;
  at_origin.translation = {0.0, 0.0, 0.0};
  const PosedMesh<double> mesh = skin<double>(bundle.model, at_origin);
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  double zmin = ymin;
  Vec3d c{0.0, 0.0, 0.0};
  for (const Vec3d& x : mesh.vertices) {
    ymin = std::min(ymin, x[1]);
    ymax = std::max(ymax, x[1]);
    zmin = std::min(zmin, x[2]);
    for (int a = 0; a < 3; ++a) c[a] += x[a] / static_cast<double>(mesh.vertices.size());
  }
  const double h_px = static_cast<double>(s.row_max - s.row_min + 1);
  double tz = p.focal_length * (ymax - ymin) / h_px - c[2];
  tz = std::max(tz, 0.1 - zmin);
  const double depth = c[2] + tz;
  p.translation = {(s.u - 0.5 * ann.width) * depth / p.focal_length - c[0],
                   (s.v - 0.5 * ann.height) * depth / p.focal_length - c[1], tz};
}

}  // namespace

ParamState init_params(const Annotation& ann, const ModelBundle& bundle, const FitConfig& config) {
  config.validate();
  const TemplateModel& model = bundle.model;
  const SilhouetteStats stats = silhouette_stats(ann);
  ParamState base = zero_params(model, static_cast<double>(std::max(ann.width, ann.height)));
  const Eigen::VectorXd& mu_pose = bundle.pose_prior.mean();
  const Eigen::VectorXd& mu_shape = bundle.shape_prior.mean();
  base.pose.assign(mu_pose.data(), mu_pose.data() + mu_pose.size());
  base.shape.assign(mu_shape.data(), mu_shape.data() + mu_shape.size());
  const int root = model.root();
  const Mat3d mean_root = rodrigues<double>({mu_pose[3 * root], mu_pose[3 * root + 1], mu_pose[3 * root + 2]});

  ParamState chosen;
  double chosen_energy = std::numeric_limits<double>::infinity();
  for (int h = 0; h < 4; ++h) {
    ParamState p = base;
    const Vec3d aa = rotation_to_axis_angle(matmul(yaw_matrix(0.5 * std::numbers::pi * h), mean_root));
    for (int a = 0; a < 3; ++a) p.pose[3 * root + a] = aa[a];
    place_camera(p, bundle, ann, stats);
    double energy = std::numeric_limits<double>::infinity();
    try {
      ImageFitter f(ann, bundle, config, p, nullptr);
      f.begin_stage(1, config.step_size, nullptr, {});
      for (int i = 0; i < config.warmup_iterations; ++i) f.step();
      energy = f.best_energy();
    } catch (const NumericalError&) {
    }
    if (h == 0 || energy < chosen_energy) {
      chosen = p;
      chosen_energy = energy;
    }
  }
  return chosen;
}

namespace {

BatchResult run_batch(const std::vector<Annotation>& anns, const ModelBundle& bundle, const FitConfig& config,
                      bool em_enabled, const MixturePrior* initial, std::ostream* progress, bool quarantine) {
  config.validate();
  const int n = static_cast<int>(anns.size());
  if (n == 0) throw InvalidParameter("fit: no annotations");
  for (const Annotation& a : anns) a.validate(bundle.model);

  BatchResult result;
  result.mixture = initial != nullptr ? *initial : init_mixture(bundle.shape_prior, config.clusters, config.seed, n);
  MixturePrior& mix = result.mixture;
  if (mix.dim() != bundle.model.num_shapes()) throw DimensionMismatch("fit: mixture dimension != number of shapes");
  const int m = mix.size();
  if (mix.responsibilities.rows() != n || mix.responsibilities.cols() != m) {
    mix.responsibilities = Eigen::MatrixXd::Constant(n, m, 1.0 / m);
  }
  mix.validate();
  if (em_enabled && n < m && progress != nullptr) {
    std::lock_guard<std::mutex> lock(progress_mutex);
    *progress << "warning: " << n << " images for " << m << " mixture components\n";
  }

  std::vector<std::optional<ImageFitter>> fitters(n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<double> seconds(n, 0.0);
  auto guarded = [&](int i, auto&& body) {
    if (errors[i]) return;
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const NumericalError&) {
      errors[i] = std::current_exception();
    } catch (const ValidationError&) {
      errors[i] = std::current_exception();
    }
    seconds[i] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  auto responsibility_row = [&](int i) {
    std::vector<double> row(m);
    for (int k = 0; k < m; ++k) row[k] = mix.responsibilities(i, k);
    return row;
  };
  auto rethrow_if_strict = [&] {
    if (quarantine) return;
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  };

  parallel_for(n, [&](int i) {
    guarded(i, [&] {
      fitters[i].emplace(anns[i], bundle, config, init_params(anns[i], bundle, config), progress);
      fitters[i]->begin_stage(1, config.step_size, nullptr, {});
      for (int it = 0; it < config.stage1_iterations; ++it) fitters[i]->step();
    });
  });
  rethrow_if_strict();

  if (config.stage2_iterations > 0) {
    const int segments = (config.stage2_iterations + config.em_interval - 1) / config.em_interval;
    auto sigma_at = [&](int segment) {
      if (segments <= 1) return config.sigma;
      return config.sigma * std::pow(config.sigma_final / config.sigma, static_cast<double>(segment) / (segments - 1));
    };
    const double lr = config.step_size * config.stage_lr_decay;
    parallel_for(n, [&](int i) {
      guarded(i, [&] {
        fitters[i]->reset_to_best();
        fitters[i]->begin_stage(2, lr, &mix, responsibility_row(i));
      });
    });
    rethrow_if_strict();
    int done = 0;
    int firing = 0;
    while (done < config.stage2_iterations) {
      const int len = std::min(config.em_interval, config.stage2_iterations - done);
      parallel_for(n, [&](int i) {
        guarded(i, [&] {
          for (int it = 0; it < len; ++it) fitters[i]->step();
        });
      });
      rethrow_if_strict();
      done += len;
      if (len < config.em_interval) break;

      // Barrier: every image resumes from its segment best.
      parallel_for(n, [&](int i) { guarded(i, [&] { fitters[i]->reset_to_best(); }); });
      rethrow_if_strict();
      if (em_enabled) {
        std::vector<int> active;
        for (int i = 0; i < n; ++i) {
          if (!errors[i]) active.push_back(i);
        }
        if (!active.empty()) {
          const int nb = mix.dim();
          Eigen::MatrixXd betas(static_cast<Eigen::Index>(active.size()), nb);
          MixturePrior sub = mix;
          sub.responsibilities.resize(betas.rows(), m);
          for (std::size_t r = 0; r < active.size(); ++r) {
            const auto& shape = fitters[active[r]]->params().shape;
            for (int b = 0; b < nb; ++b) betas(static_cast<Eigen::Index>(r), b) = shape[b];
          }
          EmEvent ev;
          ev.iteration = config.stage1_iterations + done;
          ev.log_likelihood_before = log_likelihood(mix, betas);
          EmSettings settings = EmSettings::defaults_for(bundle.shape_prior, config.seed + 1 + firing);
          settings.tied_covariance = config.tied_covariance;
          auto run_em = [&](MixturePrior& cand) {
            for (int round = 0; round < config.em_rounds; ++round) {
              cand.responsibilities = e_step(cand, betas);
              MStepResult next = m_step(cand, betas, settings);
              cand.components = std::move(next.mixture.components);
              ev.reseeded.insert(ev.reseeded.end(), next.reseeded.begin(), next.reseeded.end());
              settings.seed += 7919;
            }
            cand.responsibilities = e_step(cand, betas);
          };
          run_em(sub);
          double best = log_likelihood(sub, betas);
          for (int restart = 0; restart < config.em_restarts; ++restart) {
            MixturePrior cand = init_mixture_from_data(bundle.shape_prior, m, betas, settings.seed);
            run_em(cand);
            const double ll = log_likelihood(cand, betas);
            if (ll > best) {
              best = ll;
              sub = std::move(cand);
            }
          }
          Eigen::MatrixXd resp = mix.responsibilities;
          for (std::size_t r = 0; r < active.size(); ++r) {
            resp.row(active[r]) = sub.responsibilities.row(static_cast<Eigen::Index>(r));
          }
          mix.components = std::move(sub.components);
          mix.responsibilities = resp;
          ev.log_likelihood_after = log_likelihood(mix, betas);
          ev.mixture = mix;
          result.em_events.push_back(std::move(ev));
          ++firing;
        }
      }
      const double sigma = sigma_at(std::min(done / config.em_interval, segments - 1));
      parallel_for(n, [&](int i) {
        guarded(i, [&] { fitters[i]->begin_segment(&mix, sigma, responsibility_row(i)); });
      });
      rethrow_if_strict();
    }
  }

  result.reports.resize(n);
  std::vector<int> active;
  for (int i = 0; i < n; ++i) {
    if (errors[i]) {
      FitReport r = fitters[i] ? fitters[i]->finish(seconds[i]) : FitReport{};
      r.id = anns[i].id;
      r.quarantined = true;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      result.reports[i] = std::move(r);
    } else {
      result.reports[i] = fitters[i]->finish(seconds[i]);
      active.push_back(i);
    }
  }
  if (!active.empty()) {
    Eigen::MatrixXd betas(static_cast<Eigen::Index>(active.size()), mix.dim());
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto& shape = result.reports[active[r]].params.shape;
      for (int b = 0; b < mix.dim(); ++b) betas(static_cast<Eigen::Index>(r), b) = shape[b];
    }
    const Eigen::MatrixXd resp = e_step(mix, betas);
    for (std::size_t r = 0; r < active.size(); ++r) {
      auto& out = result.reports[active[r]].responsibilities;
      out.resize(m);
      for (int k = 0; k < m; ++k) out[k] = resp(static_cast<Eigen::Index>(r), k);
    }
    result.log_likelihood = log_likelihood(mix, betas);
  }
  return result;
}

}  // namespace

FitReport fit_single(const Annotation& ann, const ModelBundle& bundle, const MixturePrior& mixture,
                     const FitConfig& config, std::ostream* progress) {
  return run_batch({ann}, bundle, config, false, &mixture, progress, false).reports.front();
}

BatchResult fit_batch_with_em(const std::vector<Annotation>& anns, const ModelBundle& bundle,
                              const FitConfig& config, bool em_enabled, const MixturePrior* initial,
                              std::ostream* progress) {
  return run_batch(anns, bundle, config, em_enabled, initial, progress, true);
}

}  // namespace dogfit
