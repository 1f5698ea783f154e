#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "cdmkit/matrix.hpp"

namespace test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device::result_type salt = std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this);
    path_ = std::filesystem::temp_directory_path() / ("cdmkit_" + tag + "_" + std::to_string(salt));
    std::filesystem::remove_all(path_);
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

inline cdm::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = 0.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  cdm::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

inline cdm::Matrix random_binary(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution b(p);
  cdm::Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = b(rng) ? 1.0 : 0.0;
  return m;
}

}  // namespace test
