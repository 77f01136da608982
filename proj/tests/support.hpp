#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "rmen/kg_data.hpp"
#include "rmen/tensor.hpp"

namespace rmen::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> uni(lo, hi);
  for (auto& v : t.data()) v = uni(rng);
  return t;
}

// Values bounded away from zero, for ops with a kink there.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double margin = 0.1) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (auto& v : t.data()) v += v >= 0.0 ? margin : -margin;
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rmen-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace rmen::test
