// Writes the shipped fixture sketches to <dir>/<name>.mech.json.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sketchlink/fixtures.hpp"
#include "sketchlink/persistence.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "fixtures";
  std::filesystem::create_directories(dir);
  for (auto& [name, make] : sketchlink::fixtures::catalog()) {
    const auto path = dir / (name + ".mech.json");
    std::ofstream out(path, std::ios::binary);
    out << sketchlink::save(make().doc);
    if (!out) {
      std::cerr << "error: cannot write " << path << "\n";
      return 1;
    }
    std::cout << path.string() << "\n";
  }
  return 0;
}
