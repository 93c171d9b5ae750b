// Regenerates the bundled synthetic test images in data/.
// Usage: make_test_images [out_dir]

#include <iostream>
#include <string>

#include "pgsure/harness.hpp"

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data";
  struct Spec {
    const char* name;
    int h, w, c;
    std::uint64_t seed;
  };
  const Spec specs[] = {
      {"shapes_a.png", 96, 96, 3, 11},
      {"shapes_b.png", 96, 96, 3, 23},
      {"shapes_gray.png", 96, 96, 1, 37},
  };
  for (const auto& s : specs) {
    pgsure::Image img = pgsure::make_test_image(s.h, s.w, s.c, s.seed);
    const std::string path = out_dir + "/" + s.name;
    pgsure::save_image(img, path);
    std::cout << path << std::endl;
  }
  return 0;
}
