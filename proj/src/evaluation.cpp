#include "dogfit/evaluation.hpp"

#include <cstdio>
#include <map>

#include "dogfit/synth.hpp"

namespace dogfit {

CorpusMetrics evaluate_corpus(const std::vector<FitReport>& reports, const std::vector<Annotation>& anns,
                              const ModelBundle& bundle, double tau) {
  if (!(tau > 0.0)) throw InvalidParameter("evaluate: tau must be positive");
  std::map<std::string, const Annotation*> by_id;
  for (const Annotation& a : anns) by_id[a.id] = &a;
  std::map<std::string, int> seen;
  for (const FitReport& r : reports) {
    if (!by_id.count(r.id)) throw InvalidParameter("evaluate: report '" + r.id + "' has no annotation");
    if (seen[r.id]++) throw InvalidParameter("evaluate: duplicate report '" + r.id + "'");
  }
  for (const Annotation& a : anns) {
    if (!seen.count(a.id)) throw InvalidParameter("evaluate: annotation '" + a.id + "' has no report");
  }

  CorpusMetrics m;
  m.tau = tau;
  m.group_names = bundle.groups.names;
  const int ng = bundle.groups.size();
  m.mean_group_pck.assign(ng, 0.0);
  std::vector<int> group_images(ng, 0);
  for (const FitReport& r : reports) {
    if (r.params.pose.empty()) {
      m.excluded.push_back(r.id);
      continue;
    }
    const Annotation& a = *by_id[r.id];
    ImageMetrics im;
    im.id = r.id;
    im.iou = iou(render_silhouette(bundle, r.params, a.width, a.height), a.silhouette);
    im.pck = pck(project_keypoints(bundle, r.params, a.width, a.height), a, bundle.groups, tau);
    m.mean_iou += im.iou;
    m.mean_pck += im.pck.overall;
    for (int g = 0; g < ng; ++g) {
      if (im.pck.visible_per_group[g] == 0) continue;
      m.mean_group_pck[g] += im.pck.per_group[g];
      ++group_images[g];
    }
    m.images.push_back(std::move(im));
  }
  if (!m.images.empty()) {
    m.mean_iou /= static_cast<double>(m.images.size());
    m.mean_pck /= static_cast<double>(m.images.size());
  }
  for (int g = 0; g < ng; ++g) {
    if (group_images[g] > 0) m.mean_group_pck[g] /= group_images[g];
  }
  return m;
}

std::string format_table(const CorpusMetrics& m) {
  std::string out;
  char buf[64];
  auto cell = [&](const char* fmt, auto v) {
    std::snprintf(buf, sizeof buf, fmt, v);
    out += buf;
  };
  cell("%-16s", "id");
  cell("%8s", "iou");
  cell("%8s", "pck");
  for (const auto& g : m.group_names) cell("%8s", g.c_str());
  out += "\n";
  for (const ImageMetrics& im : m.images) {
    cell("%-16s", im.id.c_str());
    cell("%8.4f", im.iou);
    cell("%8.2f", im.pck.overall);
    for (std::size_t g = 0; g < m.group_names.size(); ++g) {
      if (im.pck.visible_per_group[g] == 0) {
        cell("%8s", "-");
      } else {
        cell("%8.2f", im.pck.per_group[g]);
      }
    }
    out += "\n";
  }
  cell("%-16s", "mean");
  cell("%8.4f", m.mean_iou);
  cell("%8.2f", m.mean_pck);
  for (double v : m.mean_group_pck) cell("%8.2f", v);
  out += "\n";
  for (const auto& id : m.excluded) out += "excluded " + id + "\n";
  return out;
}

}  // namespace dogfit
