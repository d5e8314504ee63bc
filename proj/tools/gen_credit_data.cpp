// Regenerates the checked-in stand-in credit file. Usage:
//   gen_credit_data [out_path] [rows] [seed]
#include <cstdio>
#include <cstdlib>
#include <exception>

#include "arex/dataio.hpp"

int main(int argc, char** argv) {
  const char* path = argc > 1 ? argv[1] : "data/german_synth.data";
  const size_t rows = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1000;
  const uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 20;
  try {
    arex::dataio::generate_credit_file(path, rows, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gen_credit_data: %s\n", e.what());
    return 1;
  }
  std::printf("wrote %zu rows to %s (seed %llu)\n", rows, path,
              static_cast<unsigned long long>(seed));
  return 0;
}
