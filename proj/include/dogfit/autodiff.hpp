#pragma once

// Reverse-mode differentiation over a dynamically recorded scalar tape.
//
// A Var is either a constant (no tape) or a handle to a node on a Tape. Every
// operation involving at least one taped operand appends one node holding the
// local partial derivatives with respect to its operands, so nodes are stored
// in topological order by construction and a single reverse sweep computes all
// adjoints. Operations on constants only are folded and never recorded.

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dogfit/errors.hpp"

namespace dogfit {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double value(double x) { return x; }

}  // namespace dogfit

namespace dogfit::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: implicit constant

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }

  Var& operator+=(const Var& o);
  Var& operator-=(const Var& o);
  Var& operator*=(const Var& o);
  Var& operator/=(const Var& o);

 private:
  friend class Tape;
  Var(double v, Tape* tape, std::uint32_t index) : value_(v), tape_(tape), index_(index) {}

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(std::size_t nodes);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Independent input.
  Var variable(double v);

  // Generic node. `op` must point to static storage; it names the primitive in
  // poisoned-value diagnostics. Throws PoisonedValue if `value` is not finite.
  Var record(const char* op, double value, std::span<const Var> parents,
             std::span<const double> partials);
  Var record(const char* op, double value, const Var& a, double da);
  Var record(const char* op, double value, const Var& a, double da, const Var& b, double db);

  // Adjoint of every node with respect to `output`. One reverse sweep.
  std::vector<double> adjoints(const Var& output) const;

  // Number of nodes visited by the last adjoints() call.
  std::size_t last_visit_count() const { return last_visits_; }

 private:
  struct Node {
    std::uint32_t first;
    std::uint32_t count;
  };
  Var push(const char* op, double value);

  std::vector<Node> nodes_;
  std::vector<const char*> ops_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
  mutable std::size_t last_visits_ = 0;
};

inline double value(const Var& x) { return x.value(); }

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var min(const Var& a, const Var& b);
Var max(const Var& a, const Var& b);
Var abs(const Var& a);

// sum_i w_i * x_i as a single node.
Var dot(std::span<const Var> xs, std::span<const double> weights);
// sum_i x_i as a single node.
Var sum(std::span<const Var> xs);
// sqrt(sum_i x_i^2 + eps^2); bounded gradient at the origin.
Var smooth_norm(std::span<const Var> xs, double eps = 1e-12);

inline Var& Var::operator+=(const Var& o) { return *this = *this + o; }
inline Var& Var::operator-=(const Var& o) { return *this = *this - o; }
inline Var& Var::operator*=(const Var& o) { return *this = *this * o; }
inline Var& Var::operator/=(const Var& o) { return *this = *this / o; }

}  // namespace dogfit::ad
