#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "tnt/distributions.hpp"
#include "tnt/vocab.hpp"

namespace tnt::testing {

inline Vocab make_vocab(int size) {
  Vocab v;
  v.size = size;
  return v;
}

// Dirichlet(1) draw, optionally with some exact zeros.
inline TokenDistribution random_distribution(std::mt19937_64& rng, int size, double zero_rate = 0.0) {
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd w(size);
  for (int i = 0; i < size; ++i) w[i] = unit(rng) < zero_rate ? 0.0 : expo(rng);
  if (w.sum() == 0.0) w[0] = 1.0;
  return TokenDistribution(w / w.sum());
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / ("tnt_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace tnt::testing
