#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "dogfit/errors.hpp"
#include "dogfit/geometry.hpp"

namespace dogfit {

// Pinhole camera looking down +z. Pixel origin top-left, v grows downward.
struct Camera {
  double focal_length = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Vec3d translation{0.0, 0.0, 1.0};

  static Camera centered(double focal_length, int width, int height, Vec3d translation) {
    return {focal_length, 0.5 * width, 0.5 * height, width, height, translation};
  }
};

void validate_camera(const Camera& camera);

// u = f (x + t_x) / (z + t_z) + c_x,  v = f (y + t_y) / (z + t_z) + c_y.
// Throws BehindCamera naming the first point with z + t_z <= 0.
template <class T>
std::vector<Vec2<T>> project(std::span<const Vec3<T>> points, const T& focal_length,
                             const Vec3<T>& translation, double cx, double cy) {
  std::vector<Vec2<T>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const T z = points[i][2] + translation[2];
    if (!(value(z) > 0.0)) throw BehindCamera(i);
    const T s = focal_length / z;
    out[i] = {s * (points[i][0] + translation[0]) + cx, s * (points[i][1] + translation[1]) + cy};
  }
  return out;
}

inline std::vector<Vec2d> project(std::span<const Vec3d> points, const Camera& camera) {
  return project<double>(points, camera.focal_length, camera.translation, camera.cx, camera.cy);
}

// Sharpness is expressed in normalized image units (fraction of the longer side).
inline double sigma_in_pixels(double sigma, int width, int height) {
  return sigma * static_cast<double>(std::max(width, height));
}

}  // namespace dogfit
