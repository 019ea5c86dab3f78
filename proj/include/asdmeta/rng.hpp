#pragma once

// Counter-based random streams.
//
// Every random quantity in the toolkit is drawn from a Philox4x32-10 stream.
// A stream is identified by a 64-bit key; keys for sub-streams are derived
// from a parent seed and a path of integer tags with derive_seed(), e.g.
//
//   derive_seed(master, {kTagSite, site_index})
//   derive_seed(master, {kTagForest, fold, tree})
//
// Derivation is a SplitMix64 chain, so a stream depends only on
// (seed, path) and never on how many numbers other streams consumed. This is
// what makes parallel and serial execution produce identical results.
//
// Distributions are implemented here rather than taken from <random>, whose
// distribution algorithms are implementation-defined.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace asdmeta {

/// Philox4x32-10 block function: encrypts `counter` under `key`.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Key for the sub-stream reached from `seed` by following `path`.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// FNV-1a over bytes; used to turn strings/bit patterns into stream tags.
std::uint64_t hash_bytes(std::string_view bytes);

// Stream tags. Values are part of the reproducibility contract; never reorder.
inline constexpr std::uint64_t kTagSite = 1;
inline constexpr std::uint64_t kTagTruth = 2;
inline constexpr std::uint64_t kTagFolds = 3;
inline constexpr std::uint64_t kTagForest = 4;
inline constexpr std::uint64_t kTagTree = 5;
inline constexpr std::uint64_t kTagGaInit = 6;
inline constexpr std::uint64_t kTagGaBreed = 7;
inline constexpr std::uint64_t kTagGaFitness = 8;
inline constexpr std::uint64_t kTagRound = 9;
inline constexpr std::uint64_t kTagBaseline = 10;
inline constexpr std::uint64_t kTagReplicate = 11;
inline constexpr std::uint64_t kTagEmbedInit = 12;
inline constexpr std::uint64_t kTagPhenotype = 13;
inline constexpr std::uint64_t kTagScan = 14;
inline constexpr std::uint64_t kTagStudy = 15;

class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer on [0, n); n must be > 0. Unbiased (Lemire rejection).
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Standard normal via Box-Muller.
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  /// Identity permutation of [0, n) shuffled.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace asdmeta
