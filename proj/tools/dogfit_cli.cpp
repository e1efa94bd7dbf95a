// dogfit command-line front end.
//   exit 0 success, 1 validation error (bad input, bad flags), 2 numerical abort.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dogfit/evaluation.hpp"
#include "dogfit/fitter.hpp"
#include "dogfit/gradgate.hpp"
#include "dogfit/io.hpp"
#include "dogfit/synth.hpp"

using namespace dogfit;

namespace {

struct Args {
  std::string model, annotations, config, out, mask_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> clusters;
  std::optional<double> tau;
  int stage = 2;
  bool em = false;
  bool quiet = false;
  // fit
  std::string id;
  // synth
  int count = 20, size = 128, axis = 2;
  double separation = 6.0, stddev = 1.0, noise = 0.0, dropout = 0.0;
  // eval, render
  std::string reports, truth;
  // em-refine
  std::string shapes;
  int iterations = 50;
  bool tied = false;
  // check-grads
  int points = 20;
  double sigma = 1e-2;
};

std::string or_default(const std::string& flag, const std::string& from_config, const char* name) {
  const std::string v = flag.empty() ? from_config : flag;
  if (v.empty()) throw InvalidParameter(std::string("missing --") + name);
  return v;
}

RunConfig resolve(const Args& a, bool need_annotations) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  rc.model = or_default(a.model, rc.model, "model");
  if (need_annotations) rc.annotations = or_default(a.annotations, rc.annotations, "annotations");
  rc.out = or_default(a.out, rc.out, "out");
  if (a.seed) rc.fit.seed = *a.seed;
  if (a.clusters) rc.fit.clusters = *a.clusters;
  if (a.tau) rc.tau = *a.tau;
  if (a.stage != 1 && a.stage != 2) throw InvalidParameter("--stage must be 1 or 2");
  if (a.stage == 1) rc.fit.stage2_iterations = 0;
  rc.fit.validate();
  if (!(rc.tau > 0.0)) throw InvalidParameter("--tau must be positive");
  return rc;
}

std::vector<Annotation> load_corpus(const std::string& path, const ModelBundle& bundle, const std::string& mask_dir) {
  AnnotationSet set = load_annotations(path, bundle, mask_dir);
  const LoadSummary& s = set.summary;
  for (const std::string& m : s.messages) std::cerr << "warning: " << m << "\n";
  std::cerr << "annotations: " << s.records << " records, " << s.loaded << " loaded, " << s.skipped << " skipped, "
            << s.rejected << " rejected\n";
  if (set.annotations.empty()) throw InvalidParameter("no usable annotations in " + path);
  return std::move(set.annotations);
}

// The output directory is left out so runs into different directories match.
Json resolved_config(const RunConfig& rc) {
  Json j = run_config_to_json(rc);
  j.erase("out");
  return j;
}

Json summary_json(const LoadSummary& s) {
  return {{"records", s.records}, {"loaded", s.loaded}, {"skipped", s.skipped}, {"rejected", s.rejected}};
}

// ---- synth -----------------------------------------------------------------

int run_synth(const Args& a) {
  const ModelBundle bundle = load_model(or_default(a.model, "", "model"));
  const fs::path out = or_default(a.out, "", "out");
  SynthOptions o;
  o.count = a.count;
  o.width = a.size;
  o.height = a.size;
  o.seed = a.seed.value_or(0);
  o.noise = {a.noise, a.dropout};
  const int c = a.clusters.value_or(0);
  if (c < 0) throw InvalidParameter("--clusters must be >= 0");
  if (c == 2) {
    o.clusters = two_cluster_spec(bundle.model.num_shapes(), a.separation * a.stddev, a.stddev, a.axis);
  } else if (c > 0) {
    // Means spread along one axis, `separation` generator deviations apart.
    const int nb = bundle.model.num_shapes();
    if (a.axis < 0 || a.axis >= nb) throw InvalidParameter("--axis out of range");
    for (int k = 0; k < c; ++k) {
      ClusterSpec s;
      s.mean = Eigen::VectorXd::Zero(nb);
      s.mean[a.axis] = (k - 0.5 * (c - 1)) * a.separation * a.stddev;
      s.covariance = a.stddev * a.stddev * Eigen::MatrixXd::Identity(nb, nb);
      o.clusters.push_back(s);
    }
  }
  const std::vector<SynthSample> samples = synth_generate(bundle, o);
  std::vector<Annotation> anns;
  for (const SynthSample& s : samples) anns.push_back(s.annotation);
  save_annotations(anns, out / "annotations.json");
  save_ground_truth(samples, out / "ground_truth.json");
  write_manifest(out, "synth",
                 {{"model", a.model}, {"count", a.count}, {"size", a.size}, {"seed", o.seed}, {"clusters", c},
                  {"separation", a.separation}, {"stddev", a.stddev}, {"axis", a.axis}, {"noise", a.noise},
                  {"dropout", a.dropout}});
  std::printf("wrote %d images to %s\n", a.count, out.string().c_str());
  return 0;
}

// ---- fit, fit-batch --------------------------------------------------------

Json em_log_json(const BatchResult& r) {
  Json events = Json::array();
  for (const EmEvent& e : r.em_events) {
    events.push_back({{"iteration", e.iteration},
                      {"log_likelihood_before", e.log_likelihood_before},
                      {"log_likelihood_after", e.log_likelihood_after},
                      {"reseeded", e.reseeded}});
  }
  return {{"format_version", kFormatVersion}, {"kind", "em_log"}, {"events", events},
          {"final_log_likelihood", r.log_likelihood}};
}

int run_fit(const Args& a) {
  const RunConfig rc = resolve(a, true);
  const ModelBundle bundle = load_model(rc.model);
  const std::vector<Annotation> anns = load_corpus(rc.annotations, bundle, a.mask_dir);
  const Annotation* ann = &anns.front();
  if (!a.id.empty()) {
    auto it = std::find_if(anns.begin(), anns.end(), [&](const Annotation& x) { return x.id == a.id; });
    if (it == anns.end()) throw InvalidParameter("no annotation with id '" + a.id + "'");
    ann = &*it;
  }
  const fs::path out = rc.out;
  const MixturePrior mix = init_mixture(bundle.shape_prior, rc.fit.clusters, rc.fit.seed, 1);
  const FitReport r = fit_single(*ann, bundle, mix, rc.fit, a.quiet ? nullptr : &std::cerr);
  save_reports({r}, out / "reports.json");
  write_text(out / "params.json", dump_json(params_to_json(r.params)));
  write_text(out / "config.json", dump_json(resolved_config(rc)));
  write_manifest(out, "fit", {{"id", ann->id}, {"stage", a.stage}});
  std::printf("%s: energy %.6g after %d iterations\n", r.id.c_str(), r.final_energy, r.iterations);
  return 0;
}

int run_fit_batch(const Args& a) {
  const RunConfig rc = resolve(a, true);
  const ModelBundle bundle = load_model(rc.model);
  AnnotationSet set = load_annotations(rc.annotations, bundle, a.mask_dir);
  for (const std::string& m : set.summary.messages) std::cerr << "warning: " << m << "\n";
  if (set.annotations.empty()) throw InvalidParameter("no usable annotations in " + rc.annotations);
  const fs::path out = rc.out;
  const BatchResult r = fit_batch_with_em(set.annotations, bundle, rc.fit, a.em, nullptr, a.quiet ? nullptr : &std::cerr);

  save_reports(r.reports, out / "reports.json");
  save_mixture(r.mixture, out / "mixture.json");
  ShapeCorpus shapes;
  std::vector<Eigen::VectorXd> rows;
  for (const FitReport& rep : r.reports) {
    if (rep.quarantined) continue;
    shapes.ids.push_back(rep.id);
    rows.push_back(Eigen::Map<const Eigen::VectorXd>(rep.params.shape.data(), static_cast<Eigen::Index>(rep.params.shape.size())));
  }
  shapes.betas.resize(static_cast<Eigen::Index>(rows.size()), bundle.model.num_shapes());
  for (std::size_t i = 0; i < rows.size(); ++i) shapes.betas.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  if (!rows.empty()) save_shapes(shapes, out / "shapes.json");
  write_text(out / "em_log.json", dump_json(em_log_json(r)));
  for (std::size_t e = 0; e < r.em_events.size(); ++e) {
    char name[64];
    std::snprintf(name, sizeof name, "checkpoints/mixture_%03zu.json", e + 1);
    save_mixture(r.em_events[e].mixture, out / name);
  }
  write_text(out / "config.json", dump_json(resolved_config(rc)));
  Json quarantined = Json::array();
  for (const FitReport& rep : r.reports) {
    if (rep.quarantined) quarantined.push_back({{"id", rep.id}, {"error", rep.error}});
  }
  write_manifest(out, "fit-batch",
                 {{"em", a.em}, {"stage", a.stage}, {"annotations", summary_json(set.summary)},
                  {"quarantined", quarantined}, {"em_firings", r.em_events.size()}});
  std::printf("fitted %zu images (%zu quarantined), %zu EM firings, log-likelihood %.6f\n", r.reports.size(),
              quarantined.size(), r.em_events.size(), r.log_likelihood);
  if (quarantined.size() == r.reports.size()) {
    std::cerr << "error: every image was quarantined\n";
    return 2;
  }
  return 0;
}

// ---- em-refine -------------------------------------------------------------

int run_em_refine(const Args& a) {
  if (a.shapes.empty()) throw InvalidParameter("missing --shapes");
  const ModelBundle bundle = load_model(or_default(a.model, "", "model"));
  const fs::path out = or_default(a.out, "", "out");
  const ShapeCorpus corpus = load_shapes(a.shapes);
  if (corpus.betas.cols() != bundle.model.num_shapes()) {
    throw DimensionMismatch("shapes have " + std::to_string(corpus.betas.cols()) + " coefficients, model has " +
                            std::to_string(bundle.model.num_shapes()));
  }
  if (a.iterations < 1) throw InvalidParameter("--iterations must be >= 1");
  const std::uint64_t seed = a.seed.value_or(0);
  const int m = a.clusters.value_or(2);
  MixturePrior mix = init_mixture(bundle.shape_prior, m, seed, static_cast<int>(corpus.betas.rows()));
  Json trace = Json::array();
  for (int it = 0; it < a.iterations; ++it) {
    mix.responsibilities = e_step(mix, corpus.betas);
    EmSettings settings = EmSettings::defaults_for(bundle.shape_prior, seed + 1 + static_cast<std::uint64_t>(it));
    settings.tied_covariance = a.tied;
    MStepResult next = m_step(mix, corpus.betas, settings);
    mix.components = std::move(next.mixture.components);
    trace.push_back({{"round", it + 1}, {"log_likelihood", log_likelihood(mix, corpus.betas)}, {"reseeded", next.reseeded}});
  }
  mix.responsibilities = e_step(mix, corpus.betas);
  save_mixture(mix, out / "mixture.json");
  write_text(out / "em_log.json", dump_json({{"format_version", kFormatVersion}, {"kind", "em_log"}, {"rounds", trace}}));
  write_manifest(out, "em-refine", {{"clusters", m}, {"iterations", a.iterations}, {"seed", seed}, {"tied", a.tied}});
  std::printf("%d components, log-likelihood %.6f\n", m, log_likelihood(mix, corpus.betas));
  return 0;
}

// ---- eval ------------------------------------------------------------------

int run_eval(const Args& a) {
  if (a.reports.empty()) throw InvalidParameter("missing --reports");
  const RunConfig rc = resolve(a, true);
  const ModelBundle bundle = load_model(rc.model);
  const std::vector<Annotation> anns = load_corpus(rc.annotations, bundle, a.mask_dir);
  const std::vector<FitReport> reports = load_reports(a.reports, bundle.model);
  const CorpusMetrics m = evaluate_corpus(reports, anns, bundle, rc.tau);
  const fs::path out = rc.out;
  save_results(m, out / "results.json");
  write_manifest(out, "eval", {{"tau", rc.tau}, {"images", m.images.size()}});
  std::fputs(format_table(m).c_str(), stdout);
  return 0;
}

// ---- render ----------------------------------------------------------------

void put(RgbImage& img, int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.pixels[static_cast<std::size_t>(y) * img.width + x] = c;
}

void cross(RgbImage& img, const Vec2d& p, Rgb c) {
  const int x = static_cast<int>(std::floor(p[0]));
  const int y = static_cast<int>(std::floor(p[1]));
  for (int d = -2; d <= 2; ++d) {
    put(img, x + d, y, c);
    put(img, x, y + d, c);
  }
}

RgbImage overlay(const Annotation& ann, const ModelBundle& bundle, const ParamState& params) {
  RgbImage img{ann.width, ann.height, std::vector<Rgb>(static_cast<std::size_t>(ann.width) * ann.height, {0, 0, 0})};
  for (int y = 0; y < ann.height; ++y) {
    for (int x = 0; x < ann.width; ++x) {
      if (ann.silhouette.at(y, x)) put(img, x, y, {70, 70, 70});
    }
  }
  // Boundary of the fitted silhouette.
  const BinaryMask fit = render_silhouette(bundle, params, ann.width, ann.height);
  for (int y = 0; y < ann.height; ++y) {
    for (int x = 0; x < ann.width; ++x) {
      if (!fit.at(y, x)) continue;
      const bool edge = x == 0 || y == 0 || x + 1 == ann.width || y + 1 == ann.height || !fit.at(y - 1, x) ||
                        !fit.at(y + 1, x) || !fit.at(y, x - 1) || !fit.at(y, x + 1);
      if (edge) put(img, x, y, {240, 200, 0});
    }
  }
  const PosedMesh<double> mesh = skin(bundle.model, params);
  const Camera cam = camera_for(ann, params.focal_length, params.translation);
  for (const Vec2d& p : project(std::span<const Vec3d>(mesh.joints), cam)) {
    put(img, static_cast<int>(std::floor(p[0])), static_cast<int>(std::floor(p[1])), {230, 40, 40});
  }
  for (std::size_t k = 0; k < ann.keypoints.size(); ++k) {
    if (ann.visible[k]) cross(img, ann.keypoints[k], {40, 220, 60});
  }
  return img;
}

int run_render(const Args& a) {
  if (a.reports.empty() == a.truth.empty()) throw InvalidParameter("give exactly one of --reports or --truth");
  const RunConfig rc = resolve(a, true);
  const ModelBundle bundle = load_model(rc.model);
  const std::vector<Annotation> anns = load_corpus(rc.annotations, bundle, a.mask_dir);
  std::vector<std::pair<std::string, ParamState>> fits;
  if (!a.reports.empty()) {
    for (FitReport& r : load_reports(a.reports, bundle.model)) {
      if (!r.params.pose.empty()) fits.emplace_back(r.id, std::move(r.params));
    }
  } else {
    for (GroundTruth& g : load_ground_truth(a.truth, bundle.model)) fits.emplace_back(g.id, std::move(g.params));
  }
  const fs::path out = rc.out;
  int written = 0;
  for (const auto& [id, params] : fits) {
    if (!a.id.empty() && id != a.id) continue;
    auto it = std::find_if(anns.begin(), anns.end(), [&](const Annotation& x) { return x.id == id; });
    if (it == anns.end()) throw InvalidParameter("no annotation with id '" + id + "'");
    write_ppm(overlay(*it, bundle, params), out / "overlay" / (id + ".ppm"));
    ++written;
  }
  if (!a.id.empty() && written == 0) throw InvalidParameter("no fit with id '" + a.id + "'");
  write_manifest(out, "render", {{"images", written}});
  std::printf("wrote %d overlays\n", written);
  return 0;
}

// ---- check-grads -----------------------------------------------------------

int run_check_grads(const Args& a) {
  const ModelBundle bundle = load_model(or_default(a.model, "", "model"));
  GradGateOptions o;
  o.points = a.points;
  o.seed = a.seed.value_or(0);
  o.sigma = a.sigma;
  const GradGateResult r = check_stage2_gradients(bundle, o);
  const double tol = 1e-4;
  Json blocks = Json::object();
  for (Block b : kAllBlocks) {
    std::printf("%-12s max relative error %.3e\n", block_name(b), r.max_error(b));
    blocks[block_name(b)] = r.max_error(b);
  }
  std::printf("points %d, excluded coordinates %d, %s\n", o.points, r.excluded(), r.pass(tol) ? "ok" : "FAILED");
  if (!a.out.empty()) {
    const fs::path out = a.out;
    write_text(out / "gradcheck.json",
               dump_json({{"format_version", kFormatVersion}, {"kind", "gradcheck"}, {"points", o.points},
                          {"seed", o.seed}, {"sigma", o.sigma}, {"tolerance", tol}, {"blocks", blocks},
                          {"excluded", r.excluded()}, {"pass", r.pass(tol)}}));
    write_manifest(out, "check-grads", {{"points", o.points}});
  }
  return r.pass(tol) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit a skinned quadruped model to keypoints and silhouettes"};
  app.require_subcommand(1);
  Args a;

  auto common = [&](CLI::App* s) {
    s->add_option("--model", a.model, "model file");
    s->add_option("--out", a.out, "output directory");
    s->add_option("--seed", a.seed, "random seed");
    s->add_flag("--quiet", a.quiet, "no progress output");
  };
  auto fitting = [&](CLI::App* s) {
    common(s);
    s->add_option("--annotations", a.annotations, "annotation file");
    s->add_option("--mask-dir", a.mask_dir, "mask directory (default: next to the annotations)");
    s->add_option("--config", a.config, "run config");
    s->add_option("--clusters", a.clusters, "mixture components");
    s->add_option("--tau", a.tau, "PCK threshold");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  common(synth);
  synth->add_option("--count", a.count, "images")->check(CLI::PositiveNumber);
  synth->add_option("--size", a.size, "image width and height")->check(CLI::PositiveNumber);
  synth->add_option("--clusters", a.clusters, "shape clusters (0: unimodal prior)");
  synth->add_option("--separation", a.separation, "cluster separation in generator deviations");
  synth->add_option("--stddev", a.stddev, "generator standard deviation");
  synth->add_option("--axis", a.axis, "shape axis separating the clusters");
  synth->add_option("--noise", a.noise, "keypoint noise in pixels");
  synth->add_option("--dropout", a.dropout, "keypoint dropout probability");

  CLI::App* fit = app.add_subcommand("fit", "fit one image");
  fitting(fit);
  fit->add_option("--id", a.id, "image id (default: first)");
  fit->add_option("--stage", a.stage, "last stage to run (1 or 2)");

  CLI::App* batch = app.add_subcommand("fit-batch", "fit a corpus");
  fitting(batch);
  batch->add_flag("--em", a.em, "refine the shape mixture during stage 2");
  batch->add_option("--stage", a.stage, "last stage to run (1 or 2)");

  CLI::App* refine = app.add_subcommand("em-refine", "fit a shape mixture to saved shapes");
  common(refine);
  refine->add_option("--shapes", a.shapes, "shapes file from fit-batch")->required();
  refine->add_option("--clusters", a.clusters, "mixture components");
  refine->add_option("--iterations", a.iterations, "EM rounds");
  refine->add_flag("--tied", a.tied, "share one covariance");

  CLI::App* eval = app.add_subcommand("eval", "IoU and PCK of fitted reports");
  fitting(eval);
  eval->add_option("--reports", a.reports, "reports file")->required();

  CLI::App* render = app.add_subcommand("render", "overlay images");
  fitting(render);
  render->add_option("--reports", a.reports, "reports file");
  render->add_option("--truth", a.truth, "ground-truth file from synth");
  render->add_option("--id", a.id, "single image id");

  CLI::App* grads = app.add_subcommand("check-grads", "compare analytic and numerical gradients");
  common(grads);
  grads->add_option("--points", a.points, "random parameter points")->check(CLI::PositiveNumber);
  grads->add_option("--sigma", a.sigma, "soft rasterizer sharpness");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) return run_synth(a);
    if (*fit) return run_fit(a);
    if (*batch) return run_fit_batch(a);
    if (*refine) return run_em_refine(a);
    if (*eval) return run_eval(a);
    if (*render) return run_render(a);
    if (*grads) return run_check_grads(a);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
