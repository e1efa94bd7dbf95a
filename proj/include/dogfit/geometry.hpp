#pragma once

#include <array>
#include <cmath>
#include <span>
#include <type_traits>
#include <vector>

#include "dogfit/autodiff.hpp"

namespace dogfit {

template <class T>
using Vec3 = std::array<T, 3>;

template <class T>
using Vec2 = std::array<T, 2>;

// Row-major 3x3.
template <class T>
using Mat3 = std::array<T, 9>;

using Vec3d = Vec3<double>;
using Vec2d = Vec2<double>;
using Mat3d = Mat3<double>;

// Rotation plus translation: x -> rotation * x + translation.
template <class T>
struct RigidTransform {
  Mat3<T> rotation;
  Vec3<T> translation;
};

template <class T>
Mat3<T> identity3() {
  return {T(1.0), T(0.0), T(0.0), T(0.0), T(1.0), T(0.0), T(0.0), T(0.0), T(1.0)};
}

template <class T>
Mat3<T> matmul(const Mat3<T>& a, const Mat3<T>& b) {
  Mat3<T> c;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      c[3 * r + k] = a[3 * r] * b[k] + a[3 * r + 1] * b[3 + k] + a[3 * r + 2] * b[6 + k];
    }
  }
  return c;
}

template <class T>
Vec3<T> matvec(const Mat3<T>& a, const Vec3<T>& x) {
  return {a[0] * x[0] + a[1] * x[1] + a[2] * x[2], a[3] * x[0] + a[4] * x[1] + a[5] * x[2],
          a[6] * x[0] + a[7] * x[1] + a[8] * x[2]};
}

// (a - I) * x, exact zero when a is the identity.
template <class T>
Vec3<T> matvec_minus_identity(const Mat3<T>& a, const Vec3<T>& x) {
  return {(a[0] - 1.0) * x[0] + a[1] * x[1] + a[2] * x[2],
          a[3] * x[0] + (a[4] - 1.0) * x[1] + a[5] * x[2],
          a[6] * x[0] + a[7] * x[1] + (a[8] - 1.0) * x[2]};
}

template <class T, class U>
Vec3<T> add(const Vec3<T>& a, const Vec3<U>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

template <class T, class U>
Vec3<T> sub(const Vec3<T>& a, const Vec3<U>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline double norm(const Vec3d& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

inline double distance(const Vec3d& a, const Vec3d& b) { return norm(sub(a, b)); }

inline Mat3d transpose(const Mat3d& a) {
  return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]};
}

inline double determinant(const Mat3d& a) {
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

// sum_i weights[i] * xs[i]; a single tape node when T is ad::Var.
template <class T>
T weighted_sum(std::span<const T> xs, std::span<const double> weights) {
  if constexpr (std::is_same_v<T, ad::Var>) {
    return ad::dot(xs, weights);
  } else {
    T s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += weights[i] * xs[i];
    return s;
  }
}

template <class T>
T squared_norm_sqrt(std::span<const T> xs, double eps) {
  if constexpr (std::is_same_v<T, ad::Var>) {
    return ad::smooth_norm(xs, eps);
  } else {
    double ss = eps * eps;
    for (double x : xs) ss += x * x;
    return std::sqrt(ss);
  }
}

template <class T>
std::vector<double> values_of(std::span<const T> xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = value(xs[i]);
  return out;
}

}  // namespace dogfit
