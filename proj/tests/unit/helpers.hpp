#pragma once

#include "dogfit/bundle.hpp"
#include "dogfit/gradgate.hpp"
#include "dogfit/rng.hpp"
#include "dogfit/synth.hpp"

namespace dogfit::test {

inline SynthSample side_view_sample(const ModelBundle& b, std::uint64_t seed, int size = 64) {
  SynthOptions o;
  o.count = 1;
  o.width = size;
  o.height = size;
  o.seed = seed;
  return synth_generate(b, o).front();
}

inline Annotation side_view_annotation(const ModelBundle& b, std::uint64_t seed, int size = 64) {
  return side_view_sample(b, seed, size).annotation;
}

inline std::vector<Annotation> annotations_of(const std::vector<SynthSample>& s) {
  std::vector<Annotation> out;
  for (const auto& x : s) out.push_back(x.annotation);
  return out;
}

inline ParamState random_params(const ModelBundle& b, Rng& rng, const Annotation& ann) {
  return jittered_params(b, rng, ann.width, ann.height);
}

}  // namespace dogfit::test
