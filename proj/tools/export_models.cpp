// Writes the bundled models built in code to data/.
//   export_models <dir>

#include <cstdio>

#include "dogfit/io.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <dir>\n", argv[0]);
    return 1;
  }
  const dogfit::fs::path dir = argv[1];
  dogfit::save_model(dogfit::make_toy_quadruped(), dir / "toy_quadruped.json");
  dogfit::save_model(dogfit::make_toy_chain(), dir / "toy_chain.json");
  return 0;
}
