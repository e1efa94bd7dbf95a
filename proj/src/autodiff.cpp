#include "dogfit/autodiff.hpp"

#include <cassert>
#include <limits>

namespace dogfit::ad {

void Tape::reserve(std::size_t nodes) {
  nodes_.reserve(nodes);
  ops_.reserve(nodes);
  parents_.reserve(2 * nodes);
  partials_.reserve(2 * nodes);
}

void Tape::clear() {
  nodes_.clear();
  ops_.clear();
  parents_.clear();
  partials_.clear();
}

Var Tape::push(const char* op, double value) {
  if (!std::isfinite(value)) throw PoisonedValue(op, value);
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({static_cast<std::uint32_t>(parents_.size()), 0});
  ops_.push_back(op);
  return Var(value, this, index);
}

Var Tape::variable(double v) { return push("variable", v); }

Var Tape::record(const char* op, double value, std::span<const Var> parents,
                 std::span<const double> partials) {
  assert(parents.size() == partials.size());
  Var out = push(op, value);
  Node& node = nodes_.back();
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parents[i].is_constant() || partials[i] == 0.0) continue;
    assert(parents[i].tape() == this);
    parents_.push_back(parents[i].index());
    partials_.push_back(partials[i]);
    ++node.count;
  }
  return out;
}

Var Tape::record(const char* op, double value, const Var& a, double da) {
  Var out = push(op, value);
  if (!a.is_constant()) {
    parents_.push_back(a.index());
    partials_.push_back(da);
    nodes_.back().count = 1;
  }
  return out;
}

Var Tape::record(const char* op, double value, const Var& a, double da, const Var& b, double db) {
  Var out = push(op, value);
  Node& node = nodes_.back();
  if (!a.is_constant()) {
    parents_.push_back(a.index());
    partials_.push_back(da);
    ++node.count;
  }
  if (!b.is_constant()) {
    parents_.push_back(b.index());
    partials_.push_back(db);
    ++node.count;
  }
  return out;
}

std::vector<double> Tape::adjoints(const Var& output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  last_visits_ = 0;
  if (output.is_constant()) return adj;
  assert(output.tape() == this);
  adj[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    ++last_visits_;
    const double a = adj[i];
    if (a == 0.0) continue;
    const Node& node = nodes_[i];
    for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
      adj[parents_[k]] += a * partials_[k];
    }
  }
  return adj;
}

namespace {

Tape* tape_of(const Var& a, const Var& b) {
  assert(a.is_constant() || b.is_constant() || a.tape() == b.tape());
  return a.is_constant() ? b.tape() : a.tape();
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  const double v = a.value() + b.value();
  if (a.is_constant() && b.is_constant()) return Var(v);
  return tape_of(a, b)->record("add", v, a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  const double v = a.value() - b.value();
  if (a.is_constant() && b.is_constant()) return Var(v);
  return tape_of(a, b)->record("sub", v, a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  const double v = a.value() * b.value();
  if (a.is_constant() && b.is_constant()) return Var(v);
  return tape_of(a, b)->record("mul", v, a, b.value(), b, a.value());
}

Var operator/(const Var& a, const Var& b) {
  const double v = a.value() / b.value();
  if (a.is_constant() && b.is_constant()) return Var(v);
  const double inv = 1.0 / b.value();
  return tape_of(a, b)->record("div", v, a, inv, b, -v * inv);
}

Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value());
  return a.tape()->record("neg", -a.value(), a, -1.0);
}

Var sin(const Var& a) {
  const double v = std::sin(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("sin", v, a, std::cos(a.value()));
}

Var cos(const Var& a) {
  const double v = std::cos(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("cos", v, a, -std::sin(a.value()));
}

Var exp(const Var& a) {
  const double v = std::exp(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("exp", v, a, v);
}

Var log(const Var& a) {
  const double v = std::log(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("log", v, a, 1.0 / a.value());
}

Var sqrt(const Var& a) {
  const double v = std::sqrt(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("sqrt", v, a, 0.5 / v);
}

Var sigmoid(const Var& a) {
  const double v = dogfit::sigmoid(a.value());
  if (a.is_constant()) return Var(v);
  return a.tape()->record("sigmoid", v, a, v * (1.0 - v));
}

// Ties route the derivative to the first operand.
Var min(const Var& a, const Var& b) { return a.value() <= b.value() ? a : b; }
Var max(const Var& a, const Var& b) { return a.value() >= b.value() ? a : b; }

Var abs(const Var& a) { return a.value() >= 0.0 ? a : -a; }

Var dot(std::span<const Var> xs, std::span<const double> weights) {
  assert(xs.size() == weights.size());
  double v = 0.0;
  Tape* tape = nullptr;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    v += weights[i] * xs[i].value();
    if (!xs[i].is_constant()) tape = xs[i].tape();
  }
  if (tape == nullptr) return Var(v);
  return tape->record("dot", v, xs, weights);
}

Var sum(std::span<const Var> xs) {
  std::vector<double> ones(xs.size(), 1.0);
  return dot(xs, ones);
}

Var smooth_norm(std::span<const Var> xs, double eps) {
  double ss = eps * eps;
  Tape* tape = nullptr;
  for (const Var& x : xs) {
    ss += x.value() * x.value();
    if (!x.is_constant()) tape = x.tape();
  }
  const double v = std::sqrt(ss);
  if (tape == nullptr) return Var(v);
  std::vector<double> partials(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) partials[i] = xs[i].value() / v;
  return tape->record("norm", v, xs, partials);
}

}  // namespace dogfit::ad
