#pragma once

// Silhouette rasterization.
//
// Soft: pixel value = 1 - prod_t (1 - s_t(p)) with s_t = w(d) * sigmoid(-d / sigma),
// d the signed distance from the pixel center to projected triangle t (negative
// inside). w is 1 up to 3 sigma outside the triangle and falls smoothly to 0 at
// 4 sigma, so each triangle only touches pixels in its bounding box grown by
// 4 sigma. Faces are orientation agnostic and need no depth ordering.
//
// Hard: pixel (row, col) has center (col + 0.5, row + 0.5) and is set iff the
// center is strictly inside a projected triangle, or lies on a top or left edge
// (top-left fill rule, evaluated after normalizing triangles to clockwise
// screen-space winding with y pointing down).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dogfit/camera.hpp"
#include "dogfit/geometry.hpp"
#include "dogfit/model.hpp"

namespace dogfit {

using Face = std::array<int, 3>;

struct SoftMask {
  int width = 0;
  int height = 0;
  double sharpness = 0.0;  // pixels
  std::vector<double> values;  // row-major, origin top-left

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

SoftMask soft_rasterize(std::span<const Vec2d> projected, std::span<const Face> faces, int width,
                        int height, double sigma_px);

// Gradient of sum_p upstream[p] * R(p) with respect to every projected vertex.
std::vector<Vec2d> soft_rasterize_backward(std::span<const Vec2d> projected, std::span<const Face> faces,
                                           int width, int height, double sigma_px,
                                           std::span<const double> upstream);

BinaryMask hard_rasterize(std::span<const Vec2d> projected, std::span<const Face> faces, int width,
                          int height);

// sigma in normalized image units.
SoftMask render_soft(const PosedMesh<double>& mesh, std::span<const Face> faces, const Camera& camera,
                     double sigma);
BinaryMask render_hard(const PosedMesh<double>& mesh, std::span<const Face> faces, const Camera& camera);

BinaryMask threshold(const SoftMask& mask, double level = 0.5);

// Signed distance from p to triangle (a, b, c); negative inside.
double signed_distance(const Vec2d& p, const Vec2d& a, const Vec2d& b, const Vec2d& c);

}  // namespace dogfit
