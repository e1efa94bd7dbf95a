#include "dogfit/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dogfit {

namespace {

std::string at(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }
std::string at(const std::string& where, std::size_t i) { return where + "[" + std::to_string(i) + "]"; }

const Json& field(const Json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(at(where, key) + ": missing");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(where + ": non-finite");
  return v;
}

// Non-finite values are stored as null.
Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
double number_or_nan(const Json& j, const std::string& where) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return number(j, where);
}

long long integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return j.get<long long>();
}

int small_int(const Json& j, const std::string& where) {
  const long long v = integer(j, where);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw SchemaError(where + ": integer out of range");
  }
  return static_cast<int>(v);
}

bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) throw SchemaError(where + ": expected true or false");
  return j.get<bool>();
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) throw SchemaError(where + ": expected a string");
  return j.get<std::string>();
}

const Json& array(const Json& j, const std::string& where, std::size_t expected = std::string::npos) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  if (expected != std::string::npos && j.size() != expected) {
    throw SchemaError(where + ": expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  }
  return j;
}

std::vector<double> numbers(const Json& j, const std::string& where, std::size_t expected = std::string::npos) {
  array(j, where, expected);
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], at(where, i)));
  return out;
}

Eigen::VectorXd vector_from(const Json& j, const std::string& where, std::size_t expected = std::string::npos) {
  const std::vector<double> v = numbers(j, where, expected);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& where, std::size_t rows, std::size_t cols) {
  array(j, where, rows);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::vector<double> row = numbers(j[r], at(where, r), cols);
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

Json vector_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_header(const Json& j, const std::string& kind, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  const long long version = integer(field(j, "format_version", where), at(where, "format_version"));
  if (version != kFormatVersion) {
    throw SchemaError(at(where, "format_version") + ": unsupported version " + std::to_string(version));
  }
  const std::string k = text(field(j, "kind", where), at(where, "kind"));
  if (k != kind) throw SchemaError(at(where, "kind") + ": expected '" + kind + "', got '" + k + "'");
}

Json header(const std::string& kind) {
  Json j = Json::object();
  j["format_version"] = kFormatVersion;
  j["kind"] = kind;
  return j;
}

Json sparse_json(const SparseRows& rows) {
  Json out = Json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const SparseEntry& e : rows[r]) out.push_back(Json::array({static_cast<long long>(r), e.col, e.value}));
  }
  return out;
}

SparseRows sparse_from(const Json& j, const std::string& where, std::size_t rows) {
  array(j, where);
  SparseRows out(rows);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = at(where, i);
    array(j[i], w, 3);
    const long long r = integer(j[i][0], w + ".row");
    const int c = small_int(j[i][1], w + ".col");
    const double v = number(j[i][2], w + ".value");
    if (r < 0 || r >= static_cast<long long>(rows)) throw SchemaError(w + ": row " + std::to_string(r) + " out of range");
    out[static_cast<std::size_t>(r)].push_back({c, v});
  }
  return out;
}

const char* axis_name(int a) { return a == 0 ? "x" : a == 1 ? "y" : "z"; }

int axis_from(const Json& j, const std::string& where) {
  const std::string s = text(j, where);
  if (s == "x") return 0;
  if (s == "y") return 1;
  if (s == "z") return 2;
  throw SchemaError(where + ": axis must be x, y or z");
}

Json prior_json(const GaussianPrior& g) {
  Json j = Json::object();
  j["mean"] = vector_json(g.mean());
  j["covariance"] = matrix_json(g.covariance());
  return j;
}

GaussianPrior prior_from(const Json& j, const std::string& where, std::size_t dim) {
  Eigen::VectorXd mean = vector_from(field(j, "mean", where), at(where, "mean"), dim);
  Eigen::MatrixXd cov = matrix_from(field(j, "covariance", where), at(where, "covariance"), dim, dim);
  try {
    return GaussianPrior(std::move(mean), std::move(cov));
  } catch (const ValidationError& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

std::vector<int> ints(const Json& j, const std::string& where) {
  array(j, where);
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(small_int(j[i], at(where, i)));
  return out;
}

// FNV-1a, 64 bit.
std::string checksum(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

// ---- text ------------------------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidParameter("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidParameter("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidParameter("write failed: " + path.string());
}

namespace {

bool flat(const Json& j) {
  if (!j.is_array()) return false;
  return std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
}

// Objects one key per line, arrays of scalars on a single line.
void emit(const Json& j, int depth, std::string& out) {
  const std::string pad(2 * (depth + 1), ' ');
  if (j.is_object() && !j.empty()) {
    out += "{\n";
    std::size_t i = 0;
    for (const auto& [key, value] : j.items()) {
      out += pad + Json(key).dump() + ": ";
      emit(value, depth + 1, out);
      out += ++i < j.size() ? ",\n" : "\n";
    }
    out += std::string(2 * depth, ' ') + "}";
  } else if (j.is_array() && !j.empty() && !flat(j)) {
    out += "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      out += pad;
      emit(j[i], depth + 1, out);
      out += i + 1 < j.size() ? ",\n" : "\n";
    }
    out += std::string(2 * depth, ' ') + "]";
  } else if (j.is_array()) {
    out += "[";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) out += ", ";
      out += j[i].dump();
    }
    out += "]";
  } else {
    out += j.dump();
  }
}

}  // namespace

std::string dump_json(const Json& j) {
  std::string out;
  emit(j, 0, out);
  return out + "\n";
}

Json parse_json(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

// ---- model -------------------------------------------------------------------

Json model_to_json(const ModelBundle& bundle) {
  const TemplateModel& m = bundle.model;
  Json j = header("model");
  j["name"] = bundle.name;
  j["header"] = {{"num_vertices", m.num_vertices()},
                 {"num_joints", m.num_joints()},
                 {"num_shapes", m.num_shapes()},
                 {"num_scale_groups", m.num_scale_groups()},
                 {"num_keypoints", bundle.num_keypoints()}};
  Json verts = Json::array();
  for (const Vec3d& v : m.rest_vertices) verts.push_back(v);
  j["vertices"] = std::move(verts);
  Json faces = Json::array();
  for (const auto& f : m.faces) faces.push_back(f);
  j["faces"] = std::move(faces);
  j["kintree_parents"] = m.parents;
  j["joint_names"] = m.joint_names;
  j["joint_regressor"] = sparse_json(m.joint_regressor);
  j["skin_weights"] = sparse_json(m.skin_weights);
  j["blend_basis"] = matrix_json(m.blend_basis);
  Json groups = Json::array();
  for (const ScaleGroup& g : m.scale_groups) {
    Json entries = Json::array();
    for (const ScaleEntry& e : g.entries) entries.push_back({{"joint", e.joint}, {"axis", axis_name(e.axis)}});
    groups.push_back({{"name", g.name}, {"entries", std::move(entries)}});
  }
  j["scale_groups"] = std::move(groups);
  Json pairs = Json::array();
  for (const auto& [a, b] : m.symmetric_joint_pairs) pairs.push_back(Json::array({a, b}));
  j["symmetric_joint_pairs"] = std::move(pairs);
  j["pose_prior"] = prior_json(bundle.pose_prior);
  j["shape_prior"] = prior_json(bundle.shape_prior);
  j["keypoint_joints"] = bundle.keypoint_joints;
  Json jg = Json::array();
  for (int g = 0; g < bundle.groups.size(); ++g) {
    jg.push_back({{"name", bundle.groups.names[g]}, {"keypoints", bundle.groups.members[g]}});
  }
  j["joint_groups"] = std::move(jg);
  return j;
}

ModelBundle model_from_json(const Json& j) {
  check_header(j, "model", "model");
  ModelBundle b;
  b.name = text(field(j, "name", ""), "name");
  TemplateModel& m = b.model;

  const Json& verts = array(field(j, "vertices", ""), "vertices");
  for (std::size_t v = 0; v < verts.size(); ++v) {
    const std::vector<double> xyz = numbers(verts[v], at("vertices", v), 3);
    m.rest_vertices.push_back({xyz[0], xyz[1], xyz[2]});
  }
  const Json& faces = array(field(j, "faces", ""), "faces");
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const std::vector<int> idx = ints(array(faces[f], at("faces", f), 3), at("faces", f));
    m.faces.push_back({idx[0], idx[1], idx[2]});
  }
  m.parents = ints(field(j, "kintree_parents", ""), "kintree_parents");
  const Json& names = array(field(j, "joint_names", ""), "joint_names");
  for (std::size_t i = 0; i < names.size(); ++i) m.joint_names.push_back(text(names[i], at("joint_names", i)));

  const std::size_t nv = m.rest_vertices.size();
  const std::size_t nj = m.parents.size();
  m.joint_regressor = sparse_from(field(j, "joint_regressor", ""), "joint_regressor", nj);
  m.skin_weights = sparse_from(field(j, "skin_weights", ""), "skin_weights", nv);

  const Json& basis = array(field(j, "blend_basis", ""), "blend_basis", 3 * nv);
  const std::size_t ns = basis.empty() ? 0 : array(basis[0], "blend_basis[0]").size();
  m.blend_basis = matrix_from(basis, "blend_basis", 3 * nv, ns);

  const Json& groups = array(field(j, "scale_groups", ""), "scale_groups");
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string w = at("scale_groups", g);
    ScaleGroup sg;
    sg.name = text(field(groups[g], "name", w), at(w, "name"));
    const Json& entries = array(field(groups[g], "entries", w), at(w, "entries"));
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const std::string we = at(at(w, "entries"), e);
      sg.entries.push_back({small_int(field(entries[e], "joint", we), at(we, "joint")),
                            axis_from(field(entries[e], "axis", we), at(we, "axis"))});
    }
    m.scale_groups.push_back(std::move(sg));
  }
  if (j.contains("symmetric_joint_pairs")) {
    const Json& pairs = array(j["symmetric_joint_pairs"], "symmetric_joint_pairs");
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const std::vector<int> ab = ints(array(pairs[p], at("symmetric_joint_pairs", p), 2), at("symmetric_joint_pairs", p));
      m.symmetric_joint_pairs.emplace_back(ab[0], ab[1]);
    }
  }
  // Structural checks before the priors so dimension errors name the model field.
  m.finalize();
  b.pose_prior = prior_from(field(j, "pose_prior", ""), "pose_prior", 3 * nj);
  b.shape_prior = prior_from(field(j, "shape_prior", ""), "shape_prior", ns);
  b.keypoint_joints = ints(field(j, "keypoint_joints", ""), "keypoint_joints");
  const Json& jg = array(field(j, "joint_groups", ""), "joint_groups");
  for (std::size_t g = 0; g < jg.size(); ++g) {
    const std::string w = at("joint_groups", g);
    b.groups.names.push_back(text(field(jg[g], "name", w), at(w, "name")));
    b.groups.members.push_back(ints(field(jg[g], "keypoints", w), at(w, "keypoints")));
  }
  try {
    b.finalize();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(std::string("joint_groups: ") + e.what());
  }

  const Json& h = field(j, "header", "");
  const std::pair<const char*, int> expected[] = {{"num_vertices", m.num_vertices()},
                                                  {"num_joints", m.num_joints()},
                                                  {"num_shapes", m.num_shapes()},
                                                  {"num_scale_groups", m.num_scale_groups()},
                                                  {"num_keypoints", b.num_keypoints()}};
  for (const auto& [key, value] : expected) {
    const int declared = small_int(field(h, key, "header"), at("header", key));
    if (declared != value) {
      throw SchemaError(at("header", key) + ": declares " + std::to_string(declared) + ", data has " +
                        std::to_string(value));
    }
  }
  return b;
}

ModelBundle load_model(const fs::path& path) {
  return model_from_json(parse_json(read_text(path), path.string()));
}

void save_model(const ModelBundle& bundle, const fs::path& path) {
  write_text(path, dump_json(model_to_json(bundle)));
}

// ---- images ------------------------------------------------------------------

BinaryMask read_pgm(const fs::path& path) {
  const std::string bytes = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  const std::string where = path.string();
  if (token() != "P5") throw SchemaError(where + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw SchemaError(where + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw SchemaError(where + ": unsupported PGM header");
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) throw SchemaError(where + ": truncated PGM raster");
  BinaryMask mask(w, h);
  for (std::size_t i = 0; i < n; ++i) mask.values[i] = bytes[pos + i] != 0 ? 1 : 0;
  return mask;
}

void write_pgm(const BinaryMask& mask, const fs::path& path) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (std::uint8_t v : mask.values) out.push_back(static_cast<char>(v ? 255 : 0));
  write_text(path, out);
}

void write_ppm(const RgbImage& image, const fs::path& path) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (const Rgb& p : image.pixels) {
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  write_text(path, out);
}

// ---- annotations -------------------------------------------------------------

AnnotationSet load_annotations(const fs::path& path, const ModelBundle& bundle, const fs::path& mask_dir) {
  const Json j = parse_json(read_text(path), path.string());
  check_header(j, "annotations", "annotations");
  const Json& images = array(field(j, "images", "annotations"), "images");
  const fs::path base = mask_dir.empty() ? path.parent_path() : mask_dir;

  AnnotationSet set;
  LoadSummary& s = set.summary;
  s.records = static_cast<int>(images.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Json& rec = images[i];
    std::string label = at("images", i);
    try {
      Annotation a;
      a.id = text(field(rec, "id", label), at(label, "id"));
      label = "image '" + a.id + "'";
      if (!ids.insert(a.id).second) throw SchemaError("duplicate id");
      a.width = small_int(field(rec, "width", label), "width");
      a.height = small_int(field(rec, "height", label), "height");
      if (a.width <= 0 || a.height <= 0) throw SchemaError("width and height must be positive");
      const Json& kps = array(field(rec, "keypoints", label), "keypoints", bundle.keypoint_joints.size());
      for (std::size_t k = 0; k < kps.size(); ++k) {
        const std::vector<double> xyv = numbers(kps[k], at("keypoints", k), 3);
        if (xyv[2] != 0.0 && xyv[2] != 1.0) throw SchemaError(at("keypoints", k) + ": visibility must be 0 or 1");
        a.keypoints.push_back({xyv[0], xyv[1]});
        a.visible.push_back(xyv[2] == 1.0);
      }
      a.keypoint_joints = bundle.keypoint_joints;
      if (a.num_visible() == 0) {
        ++s.skipped;
        s.messages.push_back("skipped " + label + ": no visible keypoints");
        continue;
      }
      const fs::path mask_path = base / text(field(rec, "mask", label), "mask");
      if (!fs::exists(mask_path)) throw SchemaError("missing mask " + mask_path.string());
      a.silhouette = read_pgm(mask_path);
      if (a.silhouette.width != a.width || a.silhouette.height != a.height) {
        throw DimensionMismatch("mask is " + std::to_string(a.silhouette.width) + "x" +
                                std::to_string(a.silhouette.height) + ", declared " + std::to_string(a.width) +
                                "x" + std::to_string(a.height));
      }
      a.validate(bundle.model);
      set.annotations.push_back(std::move(a));
      ++s.loaded;
    } catch (const ValidationError& e) {
      ++s.rejected;
      s.messages.push_back("rejected " + label + ": " + e.what());
    }
  }
  return set;
}

void save_annotations(const std::vector<Annotation>& anns, const fs::path& path) {
  Json j = header("annotations");
  Json images = Json::array();
  const fs::path dir = path.parent_path();
  for (const Annotation& a : anns) {
    Json kps = Json::array();
    for (std::size_t k = 0; k < a.keypoints.size(); ++k) {
      kps.push_back(Json::array({a.keypoints[k][0], a.keypoints[k][1], a.visible[k] ? 1 : 0}));
    }
    const std::string mask = "masks/" + a.id + ".pgm";
    write_pgm(a.silhouette, dir / mask);
    images.push_back({{"id", a.id}, {"width", a.width}, {"height", a.height}, {"keypoints", std::move(kps)}, {"mask", mask}});
  }
  j["images"] = std::move(images);
  write_text(path, dump_json(j));
}

// ---- parameters --------------------------------------------------------------

Json params_to_json(const ParamState& p) {
  return {{"pose", p.pose},
          {"shape", p.shape},
          {"log_scale", p.log_scale},
          {"translation", p.translation},
          {"focal_length", p.focal_length}};
}

ParamState params_from_json(const Json& j, const TemplateModel& model, const std::string& where) {
  ParamState p;
  p.pose = numbers(field(j, "pose", where), at(where, "pose"), 3 * static_cast<std::size_t>(model.num_joints()));
  p.shape = numbers(field(j, "shape", where), at(where, "shape"), static_cast<std::size_t>(model.num_shapes()));
  p.log_scale = numbers(field(j, "log_scale", where), at(where, "log_scale"),
                        static_cast<std::size_t>(model.num_scale_groups()));
  const std::vector<double> t = numbers(field(j, "translation", where), at(where, "translation"), 3);
  p.translation = {t[0], t[1], t[2]};
  p.focal_length = number(field(j, "focal_length", where), at(where, "focal_length"));
  try {
    validate_params(model, p);
  } catch (const ValidationError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return p;
}

void save_ground_truth(const std::vector<SynthSample>& samples, const fs::path& path) {
  Json j = header("ground_truth");
  Json items = Json::array();
  for (const SynthSample& s : samples) {
    items.push_back({{"id", s.annotation.id}, {"cluster", s.cluster}, {"params", params_to_json(s.truth)}});
  }
  j["samples"] = std::move(items);
  write_text(path, dump_json(j));
}

std::vector<GroundTruth> load_ground_truth(const fs::path& path, const TemplateModel& model) {
  const Json j = parse_json(read_text(path), path.string());
  check_header(j, "ground_truth", "ground_truth");
  const Json& items = array(field(j, "samples", "ground_truth"), "samples");
  std::vector<GroundTruth> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string w = at("samples", i);
    GroundTruth g;
    g.id = text(field(items[i], "id", w), at(w, "id"));
    g.cluster = small_int(field(items[i], "cluster", w), at(w, "cluster"));
    g.params = params_from_json(field(items[i], "params", w), model, at(w, "params"));
    out.push_back(std::move(g));
  }
  return out;
}

// ---- run config --------------------------------------------------------------

RunConfig run_config_from_json(const Json& j) {
  check_header(j, "run_config", "config");
  RunConfig c;
  FitConfig& f = c.fit;
  for (const auto& [key, value] : j.items()) {
    const std::string w = "config." + key;
    if (key == "format_version" || key == "kind") continue;
    if (key == "model") c.model = text(value, w);
    else if (key == "annotations") c.annotations = text(value, w);
    else if (key == "out") c.out = text(value, w);
    else if (key == "stage1_iterations") f.stage1_iterations = small_int(value, w);
    else if (key == "stage2_iterations") f.stage2_iterations = small_int(value, w);
    else if (key == "step_size") f.step_size = number(value, w);
    else if (key == "beta1") f.beta1 = number(value, w);
    else if (key == "beta2") f.beta2 = number(value, w);
    else if (key == "epsilon") f.epsilon = number(value, w);
    else if (key == "stage_lr_decay") f.stage_lr_decay = number(value, w);
    else if (key == "sigma") f.sigma = number(value, w);
    else if (key == "sigma_final") f.sigma_final = number(value, w);
    else if (key == "em_interval") f.em_interval = small_int(value, w);
    else if (key == "em_rounds") f.em_rounds = small_int(value, w);
    else if (key == "em_restarts") f.em_restarts = small_int(value, w);
    else if (key == "clusters") f.clusters = small_int(value, w);
    else if (key == "warmup_iterations") f.warmup_iterations = small_int(value, w);
    else if (key == "max_backtracks") f.max_backtracks = small_int(value, w);
    else if (key == "seed") {
      const long long s = integer(value, w);
      if (s < 0) throw SchemaError(w + ": must be non-negative");
      f.seed = static_cast<std::uint64_t>(s);
    } else if (key == "tied_covariance") f.tied_covariance = boolean(value, w);
    else if (key == "tau") c.tau = number(value, w);
    else if (key == "mixture_weighting") {
      const std::string m = text(value, w);
      if (m == "components") f.mixture_weighting = MixtureWeighting::ComponentWeights;
      else if (m == "responsibilities") f.mixture_weighting = MixtureWeighting::Responsibilities;
      else throw SchemaError(w + ": expected 'components' or 'responsibilities'");
    } else if (key == "weights") {
      if (!value.is_object()) throw SchemaError(w + ": expected an object");
      for (const auto& [wk, wv] : value.items()) {
        const std::string ww = w + "." + wk;
        const double v = number(wv, ww);
        if (wk == "joints") f.weights.joints = v;
        else if (wk == "silhouette") f.weights.silhouette = v;
        else if (wk == "pose") f.weights.pose = v;
        else if (wk == "shape") f.weights.shape = v;
        else if (wk == "mixture") f.weights.mixture = v;
        else throw SchemaError(ww + ": unknown key");
      }
    } else {
      throw SchemaError(w + ": unknown key");
    }
  }
  f.validate();
  if (!(c.tau > 0.0)) throw SchemaError("config.tau: must be positive");
  return c;
}

Json run_config_to_json(const RunConfig& c) {
  const FitConfig& f = c.fit;
  Json j = header("run_config");
  j["model"] = c.model;
  j["annotations"] = c.annotations;
  j["out"] = c.out;
  j["stage1_iterations"] = f.stage1_iterations;
  j["stage2_iterations"] = f.stage2_iterations;
  j["step_size"] = f.step_size;
  j["beta1"] = f.beta1;
  j["beta2"] = f.beta2;
  j["epsilon"] = f.epsilon;
  j["stage_lr_decay"] = f.stage_lr_decay;
  j["sigma"] = f.sigma;
  j["sigma_final"] = f.sigma_final;
  j["em_interval"] = f.em_interval;
  j["em_rounds"] = f.em_rounds;
  j["em_restarts"] = f.em_restarts;
  j["clusters"] = f.clusters;
  j["warmup_iterations"] = f.warmup_iterations;
  j["max_backtracks"] = f.max_backtracks;
  j["seed"] = f.seed;
  j["tied_covariance"] = f.tied_covariance;
  j["mixture_weighting"] =
      f.mixture_weighting == MixtureWeighting::Responsibilities ? "responsibilities" : "components";
  j["weights"] = {{"joints", f.weights.joints},
                  {"silhouette", f.weights.silhouette},
                  {"pose", f.weights.pose},
                  {"shape", f.weights.shape},
                  {"mixture", f.weights.mixture}};
  j["tau"] = c.tau;
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(parse_json(read_text(path), path.string()));
}

// ---- mixture -----------------------------------------------------------------

Json mixture_to_json(const MixturePrior& mix) {
  Json j = header("mixture");
  Json comps = Json::array();
  for (const MixtureComponent& c : mix.components) {
    comps.push_back({{"weight", c.weight},
                     {"mean", vector_json(c.gaussian.mean())},
                     {"covariance", matrix_json(c.gaussian.covariance())}});
  }
  j["components"] = std::move(comps);
  j["responsibilities"] = matrix_json(mix.responsibilities);
  return j;
}

MixturePrior mixture_from_json(const Json& j) {
  check_header(j, "mixture", "mixture");
  const Json& comps = array(field(j, "components", "mixture"), "components");
  if (comps.empty()) throw SchemaError("components: empty");
  MixturePrior mix;
  const std::size_t dim = array(field(comps[0], "mean", "components[0]"), "components[0].mean").size();
  for (std::size_t m = 0; m < comps.size(); ++m) {
    const std::string w = at("components", m);
    MixtureComponent c;
    c.weight = number(field(comps[m], "weight", w), at(w, "weight"));
    c.gaussian = prior_from(comps[m], w, dim);
    mix.components.push_back(std::move(c));
  }
  const Json& resp = array(field(j, "responsibilities", "mixture"), "responsibilities");
  mix.responsibilities = matrix_from(resp, "responsibilities", resp.size(), comps.size());
  try {
    mix.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(std::string("mixture: ") + e.what());
  }
  return mix;
}

void save_mixture(const MixturePrior& mix, const fs::path& path) { write_text(path, dump_json(mixture_to_json(mix))); }

MixturePrior load_mixture(const fs::path& path) {
  return mixture_from_json(parse_json(read_text(path), path.string()));
}

// ---- shapes ------------------------------------------------------------------

void save_shapes(const ShapeCorpus& corpus, const fs::path& path) {
  if (static_cast<Eigen::Index>(corpus.ids.size()) != corpus.betas.rows()) {
    throw DimensionMismatch("save_shapes: ids and betas disagree");
  }
  Json j = header("shapes");
  Json items = Json::array();
  for (std::size_t i = 0; i < corpus.ids.size(); ++i) {
    items.push_back({{"id", corpus.ids[i]}, {"beta", vector_json(corpus.betas.row(static_cast<Eigen::Index>(i)).transpose())}});
  }
  j["images"] = std::move(items);
  write_text(path, dump_json(j));
}

ShapeCorpus load_shapes(const fs::path& path) {
  const Json j = parse_json(read_text(path), path.string());
  check_header(j, "shapes", "shapes");
  const Json& items = array(field(j, "images", "shapes"), "images");
  ShapeCorpus c;
  if (items.empty()) throw SchemaError("images: empty");
  const std::size_t dim = array(field(items[0], "beta", "images[0]"), "images[0].beta").size();
  if (dim == 0) throw SchemaError("images[0].beta: empty");
  c.betas.resize(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string w = at("images", i);
    c.ids.push_back(text(field(items[i], "id", w), at(w, "id")));
    c.betas.row(static_cast<Eigen::Index>(i)) = vector_from(field(items[i], "beta", w), at(w, "beta"), dim).transpose();
  }
  return c;
}

// ---- reports -----------------------------------------------------------------

Json report_to_json(const FitReport& r) {
  Json j = Json::object();
  j["id"] = r.id;
  j["quarantined"] = r.quarantined;
  j["error"] = r.error;
  j["params"] = r.params.pose.empty() ? Json(nullptr) : params_to_json(r.params);
  j["iterations"] = r.iterations;
  j["final_energy"] = finite_or_null(r.final_energy);
  j["converged"] = r.converged;
  j["rejected_steps"] = r.rejected_steps;
  j["silhouette_evaluations"] = r.silhouette_evaluations;
  j["responsibilities"] = r.responsibilities;
  const Trajectory& t = r.trajectory;
  auto series = [](const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(finite_or_null(x));
    return a;
  };
  j["trajectory"] = {{"stage", t.stage},          {"joints", series(t.joints)}, {"silhouette", series(t.silhouette)},
                     {"pose", series(t.pose)},    {"shape", series(t.shape)},   {"mixture", series(t.mixture)},
                     {"total", series(t.total)},  {"best", series(t.best)}};
  return j;
}

FitReport report_from_json(const Json& j, const TemplateModel& model) {
  FitReport r;
  r.id = text(field(j, "id", "report"), "report.id");
  const std::string w = "report '" + r.id + "'";
  r.quarantined = boolean(field(j, "quarantined", w), at(w, "quarantined"));
  r.error = text(field(j, "error", w), at(w, "error"));
  const Json& p = field(j, "params", w);
  if (!p.is_null()) r.params = params_from_json(p, model, at(w, "params"));
  r.iterations = small_int(field(j, "iterations", w), at(w, "iterations"));
  r.final_energy = number_or_nan(field(j, "final_energy", w), at(w, "final_energy"));
  r.converged = boolean(field(j, "converged", w), at(w, "converged"));
  r.rejected_steps = small_int(field(j, "rejected_steps", w), at(w, "rejected_steps"));
  r.silhouette_evaluations = small_int(field(j, "silhouette_evaluations", w), at(w, "silhouette_evaluations"));
  r.responsibilities = numbers(field(j, "responsibilities", w), at(w, "responsibilities"));
  const Json& t = field(j, "trajectory", w);
  const std::string wt = at(w, "trajectory");
  r.trajectory.stage = ints(field(t, "stage", wt), at(wt, "stage"));
  const std::size_t n = r.trajectory.stage.size();
  auto series = [&](const char* key, std::vector<double>& out) {
    const Json& a = array(field(t, key, wt), at(wt, key), n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(number_or_nan(a[i], at(at(wt, key), i)));
  };
  series("joints", r.trajectory.joints);
  series("silhouette", r.trajectory.silhouette);
  series("pose", r.trajectory.pose);
  series("shape", r.trajectory.shape);
  series("mixture", r.trajectory.mixture);
  series("total", r.trajectory.total);
  series("best", r.trajectory.best);
  return r;
}

void save_reports(const std::vector<FitReport>& reports, const fs::path& path) {
  Json j = header("reports");
  Json items = Json::array();
  for (const FitReport& r : reports) items.push_back(report_to_json(r));
  j["reports"] = std::move(items);
  write_text(path, dump_json(j));
}

std::vector<FitReport> load_reports(const fs::path& path, const TemplateModel& model) {
  const Json j = parse_json(read_text(path), path.string());
  check_header(j, "reports", "reports");
  const Json& items = array(field(j, "reports", "reports"), "reports");
  std::vector<FitReport> out;
  for (const Json& item : items) out.push_back(report_from_json(item, model));
  return out;
}

// ---- results -----------------------------------------------------------------

Json results_to_json(const CorpusMetrics& m) {
  Json j = header("results");
  j["tau"] = m.tau;
  j["groups"] = m.group_names;
  Json images = Json::array();
  for (const ImageMetrics& im : m.images) {
    Json groups = Json::object();
    for (std::size_t g = 0; g < m.group_names.size(); ++g) {
      groups[m.group_names[g]] = im.pck.visible_per_group[g] > 0 ? Json(im.pck.per_group[g]) : Json(nullptr);
    }
    images.push_back({{"id", im.id},
                      {"iou", im.iou},
                      {"pck", im.pck.overall},
                      {"visible", im.pck.visible},
                      {"correct", im.pck.correct},
                      {"groups", std::move(groups)}});
  }
  j["images"] = std::move(images);
  Json groups = Json::object();
  for (std::size_t g = 0; g < m.group_names.size(); ++g) groups[m.group_names[g]] = m.mean_group_pck[g];
  j["summary"] = {{"images", m.images.size()}, {"mean_iou", m.mean_iou}, {"mean_pck", m.mean_pck}, {"groups", groups}};
  j["excluded"] = m.excluded;
  return j;
}

void save_results(const CorpusMetrics& m, const fs::path& path) { write_text(path, dump_json(results_to_json(m))); }

// ---- manifest ----------------------------------------------------------------

void write_manifest(const fs::path& dir, const std::string& command, const Json& details) {
  std::vector<std::string> files;
  if (fs::exists(dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string rel = fs::relative(entry.path(), dir).generic_string();
      if (rel == "manifest.json") continue;
      files.push_back(rel);
    }
  }
  std::sort(files.begin(), files.end());
  Json j = header("manifest");
  j["command"] = command;
  j["details"] = details;
  Json list = Json::array();
  for (const std::string& f : files) {
    const std::string bytes = read_text(dir / f);
    list.push_back({{"path", f}, {"bytes", bytes.size()}, {"fnv1a64", checksum(bytes)}});
  }
  j["files"] = std::move(list);
  write_text(dir / "manifest.json", dump_json(j));
}

}  // namespace dogfit
