#pragma once

// File formats. Every document is JSON with "format_version" and "kind"
// fields; masks are 8-bit binary PGM (P5) files, overlays binary PPM (P6).
// Writers are deterministic so a load -> save round trip reproduces the bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "dogfit/bundle.hpp"
#include "dogfit/evaluation.hpp"
#include "dogfit/fitter.hpp"
#include "dogfit/mixture.hpp"
#include "dogfit/synth.hpp"
#include "json.hpp"

namespace dogfit {

inline constexpr int kFormatVersion = 1;

using Json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
// Writes `text` (creating parent directories).
void write_text(const fs::path& path, const std::string& text);
std::string dump_json(const Json& j);
Json parse_json(const std::string& text, const std::string& where);

// ---- model ---------------------------------------------------------------
Json model_to_json(const ModelBundle& bundle);
ModelBundle model_from_json(const Json& j);  // SchemaError naming the field
ModelBundle load_model(const fs::path& path);
void save_model(const ModelBundle& bundle, const fs::path& path);

// ---- masks ---------------------------------------------------------------
BinaryMask read_pgm(const fs::path& path);  // nonzero = foreground
void write_pgm(const BinaryMask& mask, const fs::path& path);

struct Rgb {
  unsigned char r, g, b;
};
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;
};
void write_ppm(const RgbImage& image, const fs::path& path);

// ---- annotations ---------------------------------------------------------
struct LoadSummary {
  int records = 0;
  int loaded = 0;
  int skipped = 0;   // no visible keypoints
  int rejected = 0;  // malformed, missing mask, size mismatch
  std::vector<std::string> messages;
};

struct AnnotationSet {
  std::vector<Annotation> annotations;
  LoadSummary summary;
};

// Mask paths in the file are relative to `mask_dir` (default: the file's directory).
AnnotationSet load_annotations(const fs::path& path, const ModelBundle& bundle, const fs::path& mask_dir = {});
// Writes masks to <dir of path>/masks/<id>.pgm.
void save_annotations(const std::vector<Annotation>& anns, const fs::path& path);

// ---- parameters, ground truth --------------------------------------------
Json params_to_json(const ParamState& p);
ParamState params_from_json(const Json& j, const TemplateModel& model, const std::string& where);

struct GroundTruth {
  std::string id;
  ParamState params;
  int cluster = 0;
};
void save_ground_truth(const std::vector<SynthSample>& samples, const fs::path& path);
std::vector<GroundTruth> load_ground_truth(const fs::path& path, const TemplateModel& model);

// ---- run config ----------------------------------------------------------
struct RunConfig {
  FitConfig fit;
  std::string model;
  std::string annotations;
  std::string out;
  double tau = 0.15;
};
RunConfig run_config_from_json(const Json& j);  // rejects unknown keys and bad types
Json run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const fs::path& path);

// ---- mixture prior -------------------------------------------------------
Json mixture_to_json(const MixturePrior& mix);
MixturePrior mixture_from_json(const Json& j);
void save_mixture(const MixturePrior& mix, const fs::path& path);
MixturePrior load_mixture(const fs::path& path);

// ---- shape corpus (input of em-refine) -----------------------------------
struct ShapeCorpus {
  std::vector<std::string> ids;
  Eigen::MatrixXd betas;  // N x B
};
void save_shapes(const ShapeCorpus& corpus, const fs::path& path);
ShapeCorpus load_shapes(const fs::path& path);

// ---- fit reports ---------------------------------------------------------
// Wall time is not serialized so reports are reproducible byte for byte.
Json report_to_json(const FitReport& r);
FitReport report_from_json(const Json& j, const TemplateModel& model);
void save_reports(const std::vector<FitReport>& reports, const fs::path& path);
std::vector<FitReport> load_reports(const fs::path& path, const TemplateModel& model);

// ---- evaluation results --------------------------------------------------
Json results_to_json(const CorpusMetrics& m);
void save_results(const CorpusMetrics& m, const fs::path& path);

// ---- manifest ------------------------------------------------------------
// Lists every file under `dir` except the manifest itself, sorted, with sizes.
void write_manifest(const fs::path& dir, const std::string& command, const Json& details);

}  // namespace dogfit
