#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <fmt/format.h>

#include "asdmeta/synth.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return ASDMETA_TEST_DATA_DIR; }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("asdmeta_test_{}_{}", static_cast<long>(::getpid()), counter++);
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

inline asdmeta::SynthDataset planted(std::size_t n, std::size_t d, std::size_t k, double effect,
                                     std::uint64_t seed, double noise = 1.0) {
  asdmeta::SynthConfig c;
  c.sizes = {n};
  c.noise_scale = {noise};
  c.d = d;
  c.k_informative = k;
  c.effect_size = effect;
  c.seed = seed;
  return asdmeta::generate(c);
}

}  // namespace testutil
