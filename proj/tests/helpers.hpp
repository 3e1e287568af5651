#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "frmab/benchmarks.hpp"
#include "frmab/rng.hpp"

namespace frmab::test {

inline const std::vector<BenchmarkFamily>& families() {
  static const std::vector<BenchmarkFamily> all{BenchmarkFamily::Machine, BenchmarkFamily::Epidemic,
                                                BenchmarkFamily::Fisheries, BenchmarkFamily::Routing};
  return all;
}

inline GeneratedInstance make(BenchmarkFamily family, int n, std::uint64_t seed, double horizon = 1.0) {
  BenchmarkSpec spec;
  spec.family = family;
  spec.n = n;
  spec.horizon = horizon;
  spec.seed = seed;
  return generate_benchmark(spec);
}

// Fresh directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("frmab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace frmab::test
