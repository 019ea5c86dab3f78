#pragma once

// Genetic-algorithm wrapper feature selection.
//
// Individuals are binary masks over the feature columns. One generation:
// score every individual, draw n_pop parents by tournament, pair them in
// selection order, apply single-point crossover and bit-flip mutation.
// All-zero masks are repaired by setting one uniformly random bit.
//
// The fitness of a mask is the mean k-fold CV accuracy with CV seed
// derive_seed(seed, {kTagGaFitness, hash(mask)}). Because the seed is a
// function of the bit pattern, fitness is a fixed function of the mask within
// a run: the per-run cache is pure memoization, and evaluation order (serial
// or parallel) cannot change results.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "asdmeta/cv.hpp"
#include "asdmeta/rng.hpp"
#include "asdmeta/tabular.hpp"

namespace asdmeta {

using Chromosome = Mask;

struct GAConfig {
  int n_iter = 30;
  int n_pop = 300;
  double r_cross = 0.9;
  /// Per-bit mutation probability; unset means min(4 / d, 0.5).
  std::optional<double> r_mut;
  int tournament_size = 3;
  std::uint64_t seed = 0;
  bool cache = true;
  int threads = 1;

  double mutation_rate(std::size_t d) const {
    return r_mut ? *r_mut : std::min(4.0 / static_cast<double>(d), 0.5);
  }
  void validate() const;
};

struct GAResult {
  Chromosome best_mask;
  CVResult best_fitness;
  /// Best-so-far fitness after each generation (monotone non-decreasing).
  std::vector<double> history;
  /// Fitness lookups (n_pop per generation), cached or not.
  std::size_t evaluations = 0;

  friend bool operator==(const GAResult&, const GAResult&) = default;
};

struct GenerationLog {
  /// Hierarchical round (0 outside run_rounds).
  int round = 0;
  int generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double cache_hit_rate = 0.0;
};

/// Maps (mask, evaluation seed) to a CV result.
using FitnessFn = std::function<CVResult(const Chromosome&, std::uint64_t)>;
using ProgressFn = std::function<void(const GenerationLog&)>;

/// Sets one uniformly random bit if `c` is all zero.
void repair(Chromosome& c, Rng& rng);

/// n_pop fair-coin chromosomes of length d, repaired.
std::vector<Chromosome> init_population(std::size_t d, std::size_t n_pop, std::uint64_t seed);

/// Draws `tournament_size` indices uniformly with replacement and returns
/// the one with the highest fitness; ties go to the earliest draw.
std::size_t tournament_select(std::span<const double> fitnesses, int tournament_size, Rng& rng);

/// With probability r_cross, exchanges suffixes after a cut drawn uniformly
/// from 1..d-1; otherwise returns copies. Throws on length mismatch.
/// Chromosomes of length 1 are returned unchanged.
std::pair<Chromosome, Chromosome> crossover_single_point(const Chromosome& a, const Chromosome& b,
                                                         double r_cross, Rng& rng);
/// Exchange of suffixes at a fixed cut (1 <= cut <= d-1).
std::pair<Chromosome, Chromosome> crossover_at(const Chromosome& a, const Chromosome& b,
                                               std::size_t cut);

/// Flips each bit with probability r_mut, then repairs.
Chromosome mutate_bitflip(Chromosome c, double r_mut, Rng& rng);

/// Selection, pairing, crossover and mutation for one generation.
std::vector<Chromosome> breed(std::span<const Chromosome> population,
                              std::span<const double> fitnesses, const GAConfig& config,
                              double r_mut, Rng& rng);

/// Evolves masks over `d` features with an arbitrary fitness function.
GAResult evolve(std::size_t d, const FitnessFn& fitness, const GAConfig& config,
                const ProgressFn& progress = {});

/// Feature selection on `table`: fitness is cv_accuracy of a forest.
GAResult evolve(const FeatureTable& table, const GAConfig& gacfg, const ForestConfig& fcfg,
                const CVOptions& cv, const ProgressFn& progress = {});

/// The seed evolve() uses to score `mask`.
std::uint64_t fitness_seed(std::uint64_t run_seed, const Chromosome& mask);

/// Fitness function evolve(table, ...) uses; exposed for exhaustive oracles.
FitnessFn forest_fitness(const FeatureTable& table, const ForestConfig& fcfg, const CVOptions& cv);

}  // namespace asdmeta
