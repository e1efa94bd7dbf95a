#pragma once

// Corpus-level evaluation of fit reports against their annotations.

#include <string>
#include <vector>

#include "dogfit/bundle.hpp"
#include "dogfit/fitter.hpp"
#include "dogfit/metrics.hpp"

namespace dogfit {

struct ImageMetrics {
  std::string id;
  double iou = 0.0;
  PckResult pck;
};

struct CorpusMetrics {
  std::vector<std::string> group_names;
  std::vector<ImageMetrics> images;
  double tau = 0.15;
  double mean_iou = 0.0;
  double mean_pck = 0.0;
  std::vector<double> mean_group_pck;  // over images where the group has visible keypoints
  std::vector<std::string> excluded;   // quarantined reports without parameters
};

// Reports are matched to annotations by id (order free). IoU uses the hard
// render of the report's parameters. Throws InvalidParameter naming an id that
// has no counterpart.
CorpusMetrics evaluate_corpus(const std::vector<FitReport>& reports, const std::vector<Annotation>& anns,
                              const ModelBundle& bundle, double tau);

// Plain text table, one row per image plus a mean row.
std::string format_table(const CorpusMetrics& m);

}  // namespace dogfit
