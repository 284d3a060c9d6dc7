// Writes a small corpus picture and a one-box document for the CLI tests.
#include <cstdio>
#include <fstream>
#include <string>

#include "mvrd/mvrd.hpp"
#include "mvrd/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: make_fixture DIR\n");
    return 1;
  }
  const std::string dir = argv[1];
  mvrd::store_image(mvrd::synthetic::corpus_image(3, 64, 48), dir + "/pic.pgm");
  mvrd::store_image(mvrd::synthetic::corpus_image(4, 64, 48), dir + "/other.pgm");
  std::ofstream(dir + "/boxes.json") << mvrd::serialize_boxes(mvrd::BoxSet(64, 48, {{16, 8, 30, 20, 0.9}}));
  std::ofstream(dir + "/bad_boxes.json") << "{\"image_width\": 64, \"boxes\": 3}";
  return 0;
}
