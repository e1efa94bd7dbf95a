#include "dogfit/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dogfit {

void validate_camera(const Camera& camera) {
  if (!(camera.focal_length > 0.0) || !std::isfinite(camera.focal_length)) {
    throw InvalidParameter("camera: focal length must be positive");
  }
  if (camera.width < 1 || camera.height < 1) throw InvalidParameter("camera: image size must be at least 1x1");
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto v : values) n += v;
  return n;
}

namespace {

constexpr double kWindowStart = 3.0;
constexpr double kCutoff = 4.0;

struct Segment {
  double dist;
  double t;      // projection parameter along (a, b), clamped to [0, 1]
  double qx, qy; // p - closest point
};

Segment segment_distance(const Vec2d& p, const Vec2d& a, const Vec2d& b) {
  const double ex = b[0] - a[0];
  const double ey = b[1] - a[1];
  const double len2 = ex * ex + ey * ey;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2, 0.0, 1.0);
  const double dx = p[0] - (a[0] + t * ex);
  const double dy = p[1] - (a[1] + t * ey);
  return {std::sqrt(dx * dx + dy * dy), t, dx, dy};
}

double cross(const Vec2d& a, const Vec2d& b, const Vec2d& p) {
  return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
}

bool strictly_inside(const Vec2d& p, const Vec2d& a, const Vec2d& b, const Vec2d& c) {
  const double e0 = cross(a, b, p);
  const double e1 = cross(b, c, p);
  const double e2 = cross(c, a, p);
  return (e0 > 0.0 && e1 > 0.0 && e2 > 0.0) || (e0 < 0.0 && e1 < 0.0 && e2 < 0.0);
}

struct Hit {
  double d;
  int edge;  // index of the closest edge (0: ab, 1: bc, 2: ca)
  Segment seg;
  double sign;
};

Hit evaluate(const Vec2d& p, const Vec2d& a, const Vec2d& b, const Vec2d& c) {
  const std::array<Segment, 3> segs = {segment_distance(p, a, b), segment_distance(p, b, c),
                                       segment_distance(p, c, a)};
  int best = 0;
  for (int e = 1; e < 3; ++e) {
    if (segs[e].dist < segs[best].dist) best = e;
  }
  const double sign = strictly_inside(p, a, b, c) ? -1.0 : 1.0;
  return {sign * segs[best].dist, best, segs[best], sign};
}

// Coverage of one triangle at signed distance d and its derivative.
struct Coverage {
  double s;
  double ds_dd;
};

Coverage coverage(double d, double sigma) {
  const double x = d / sigma;
  if (x >= kCutoff) return {0.0, 0.0};
  const double sig = sigmoid(-x);
  const double dsig_dd = -sig * (1.0 - sig) / sigma;
  if (x <= kWindowStart) return {sig, dsig_dd};
  const double u = x - kWindowStart;
  const double w = 1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
  const double dw_dd = -30.0 * u * u * (1.0 - u) * (1.0 - u) / sigma;
  return {w * sig, dw_dd * sig + w * dsig_dd};
}

struct PixelRange {
  int col0, col1, row0, row1;  // inclusive
  bool empty() const { return col0 > col1 || row0 > row1; }
};

PixelRange covered_pixels(const Vec2d& a, const Vec2d& b, const Vec2d& c, double margin, int width, int height) {
  const double xmin = std::min({a[0], b[0], c[0]}) - margin;
  const double xmax = std::max({a[0], b[0], c[0]}) + margin;
  const double ymin = std::min({a[1], b[1], c[1]}) - margin;
  const double ymax = std::max({a[1], b[1], c[1]}) + margin;
  auto lo = [](double v, int limit) {
    const double r = std::ceil(v - 0.5);
    return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(limit)));
  };
  auto hi = [](double v, int limit) {
    const double r = std::floor(v - 0.5);
    return static_cast<int>(std::clamp(r, -1.0, static_cast<double>(limit - 1)));
  };
  return {lo(xmin, width), hi(xmax, width), lo(ymin, height), hi(ymax, height)};
}

void check_inputs(std::span<const Vec2d> projected, std::span<const Face> faces, int width, int height,
                  double sigma_px) {
  if (!(sigma_px > 0.0) || !std::isfinite(sigma_px)) throw InvalidParameter("rasterize: sharpness must be positive");
  if (width < 1 || height < 1) throw InvalidParameter("rasterize: image size must be at least 1x1");
  for (const Face& f : faces) {
    for (int i : f) {
      if (i < 0 || i >= static_cast<int>(projected.size())) throw DimensionMismatch("rasterize: face index out of range");
    }
  }
}

// Product of (1 - s_t) over all triangles touching each pixel, tracking exact zeros.
struct Complement {
  std::vector<double> product;
  std::vector<int> zeros;
};

Complement accumulate(std::span<const Vec2d> projected, std::span<const Face> faces, int width, int height,
                      double sigma_px) {
  Complement acc{std::vector<double>(static_cast<std::size_t>(width) * height, 1.0),
                 std::vector<int>(static_cast<std::size_t>(width) * height, 0)};
  for (const Face& f : faces) {
    const Vec2d& a = projected[f[0]];
    const Vec2d& b = projected[f[1]];
    const Vec2d& c = projected[f[2]];
    const PixelRange r = covered_pixels(a, b, c, kCutoff * sigma_px, width, height);
    for (int row = r.row0; row <= r.row1; ++row) {
      for (int col = r.col0; col <= r.col1; ++col) {
        const Vec2d p = {col + 0.5, row + 0.5};
        const double s = coverage(evaluate(p, a, b, c).d, sigma_px).s;
        if (s == 0.0) continue;
        const std::size_t idx = static_cast<std::size_t>(row) * width + col;
        const double comp = 1.0 - s;
        if (comp == 0.0) {
          ++acc.zeros[idx];
        } else {
          acc.product[idx] *= comp;
        }
      }
    }
  }
  return acc;
}

}  // namespace

double signed_distance(const Vec2d& p, const Vec2d& a, const Vec2d& b, const Vec2d& c) {
  return evaluate(p, a, b, c).d;
}

SoftMask soft_rasterize(std::span<const Vec2d> projected, std::span<const Face> faces, int width, int height,
                        double sigma_px) {
  check_inputs(projected, faces, width, height, sigma_px);
  const Complement acc = accumulate(projected, faces, width, height, sigma_px);
  SoftMask mask{width, height, sigma_px, std::vector<double>(acc.product.size())};
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    mask.values[i] = acc.zeros[i] > 0 ? 1.0 : 1.0 - acc.product[i];
  }
  return mask;
}

std::vector<Vec2d> soft_rasterize_backward(std::span<const Vec2d> projected, std::span<const Face> faces,
                                           int width, int height, double sigma_px,
                                           std::span<const double> upstream) {
  check_inputs(projected, faces, width, height, sigma_px);
  if (upstream.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionMismatch("soft_rasterize_backward: upstream size mismatch");
  }
  const Complement acc = accumulate(projected, faces, width, height, sigma_px);
  std::vector<Vec2d> grad(projected.size(), Vec2d{0.0, 0.0});
  for (const Face& f : faces) {
    const std::array<Vec2d, 3> v = {projected[f[0]], projected[f[1]], projected[f[2]]};
    const PixelRange r = covered_pixels(v[0], v[1], v[2], kCutoff * sigma_px, width, height);
    for (int row = r.row0; row <= r.row1; ++row) {
      for (int col = r.col0; col <= r.col1; ++col) {
        const std::size_t idx = static_cast<std::size_t>(row) * width + col;
        if (upstream[idx] == 0.0) continue;
        const Vec2d p = {col + 0.5, row + 0.5};
        const Hit hit = evaluate(p, v[0], v[1], v[2]);
        const Coverage cov = coverage(hit.d, sigma_px);
        if (cov.ds_dd == 0.0 || hit.seg.dist == 0.0) continue;
        const double comp = 1.0 - cov.s;
        double others;  // prod over the other triangles of (1 - s)
        if (comp == 0.0) {
          others = acc.zeros[idx] == 1 ? acc.product[idx] : 0.0;
        } else {
          others = acc.zeros[idx] > 0 ? 0.0 : acc.product[idx] / comp;
        }
        // dR/ds = others; chain through d.
        const double g = upstream[idx] * others * cov.ds_dd * hit.sign / hit.seg.dist;
        if (g == 0.0) continue;
        // d dist / d a = -(p - q)(1 - t) / dist,  d dist / d b = -(p - q) t / dist
        const int ia = hit.edge;
        const int ib = (hit.edge + 1) % 3;
        const double t = hit.seg.t;
        Vec2d& ga = grad[f[ia]];
        Vec2d& gb = grad[f[ib]];
        ga[0] -= g * hit.seg.qx * (1.0 - t);
        ga[1] -= g * hit.seg.qy * (1.0 - t);
        gb[0] -= g * hit.seg.qx * t;
        gb[1] -= g * hit.seg.qy * t;
      }
    }
  }
  return grad;
}

BinaryMask hard_rasterize(std::span<const Vec2d> projected, std::span<const Face> faces, int width, int height) {
  if (width < 1 || height < 1) throw InvalidParameter("rasterize: image size must be at least 1x1");
  BinaryMask mask(width, height);
  for (const Face& f : faces) {
    Vec2d a = projected[f[0]];
    Vec2d b = projected[f[1]];
    Vec2d c = projected[f[2]];
    const double area2 = cross(a, b, c);
    if (area2 == 0.0) continue;
    if (area2 < 0.0) std::swap(b, c);
    // Now cross(a, b, p) > 0 inside: clockwise on screen with y down.
    const std::array<std::pair<Vec2d, Vec2d>, 3> edges = {std::pair{a, b}, std::pair{b, c}, std::pair{c, a}};
    std::array<bool, 3> top_left{};
    for (int e = 0; e < 3; ++e) {
      const double dx = edges[e].second[0] - edges[e].first[0];
      const double dy = edges[e].second[1] - edges[e].first[1];
      top_left[e] = (dy == 0.0 && dx > 0.0) || dy < 0.0;
    }
    const PixelRange r = covered_pixels(a, b, c, 0.0, width, height);
    for (int row = r.row0; row <= r.row1; ++row) {
      for (int col = r.col0; col <= r.col1; ++col) {
        const Vec2d p = {col + 0.5, row + 0.5};
        bool inside = true;
        for (int e = 0; e < 3 && inside; ++e) {
          const double w = cross(edges[e].first, edges[e].second, p);
          inside = w > 0.0 || (w == 0.0 && top_left[e]);
        }
        if (inside) mask.at(row, col) = 1;
      }
    }
  }
  return mask;
}

SoftMask render_soft(const PosedMesh<double>& mesh, std::span<const Face> faces, const Camera& camera, double sigma) {
  validate_camera(camera);
  if (!(sigma > 0.0)) throw InvalidParameter("render_soft: sharpness must be positive");
  const auto projected = project(mesh.vertices, camera);
  return soft_rasterize(projected, faces, camera.width, camera.height,
                        sigma_in_pixels(sigma, camera.width, camera.height));
}

BinaryMask render_hard(const PosedMesh<double>& mesh, std::span<const Face> faces, const Camera& camera) {
  validate_camera(camera);
  const auto projected = project(mesh.vertices, camera);
  return hard_rasterize(projected, faces, camera.width, camera.height);
}

BinaryMask threshold(const SoftMask& mask, double level) {
  BinaryMask out(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.values.size(); ++i) out.values[i] = mask.values[i] > level ? 1 : 0;
  return out;
}

}  // namespace dogfit
