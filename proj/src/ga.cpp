#include "asdmeta/ga.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>

#include "asdmeta/parallel.hpp"

namespace asdmeta {

void GAConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("ga: n_iter must be >= 1");
  if (n_pop < 2 || n_pop % 2 != 0) throw std::invalid_argument("ga: n_pop must be even and >= 2");
  if (!(r_cross >= 0.0 && r_cross <= 1.0)) throw std::invalid_argument("ga: r_cross must be in [0, 1]");
  if (r_mut && !(*r_mut >= 0.0 && *r_mut <= 1.0))
    throw std::invalid_argument("ga: r_mut must be in [0, 1]");
  if (tournament_size < 1) throw std::invalid_argument("ga: tournament_size must be >= 1");
}

void repair(Chromosome& c, Rng& rng) {
  if (c.size() > 0 && c.none()) c.set(rng.below(c.size()));
}

std::vector<Chromosome> init_population(std::size_t d, std::size_t n_pop, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("ga: d must be >= 1");
  Rng rng(derive_seed(seed, {kTagGaInit}));
  std::vector<Chromosome> pop;
  pop.reserve(n_pop);
  for (std::size_t i = 0; i < n_pop; ++i) {
    Chromosome c(d);
    for (std::size_t j = 0; j < d; ++j) c.set(j, (rng.next_u32() & 1u) != 0);
    repair(c, rng);
    pop.push_back(std::move(c));
  }
  return pop;
}

std::size_t tournament_select(std::span<const double> fitnesses, int tournament_size, Rng& rng) {
  if (fitnesses.empty()) throw std::invalid_argument("ga: empty population");
  std::size_t best = rng.below(fitnesses.size());
  for (int t = 1; t < tournament_size; ++t) {
    std::size_t i = rng.below(fitnesses.size());
    if (fitnesses[i] > fitnesses[best]) best = i;
  }
  return best;
}

std::pair<Chromosome, Chromosome> crossover_at(const Chromosome& a, const Chromosome& b,
                                               std::size_t cut) {
  if (a.size() != b.size()) throw std::invalid_argument("ga: crossover of chromosomes with different lengths");
  if (cut < 1 || cut >= a.size()) throw std::invalid_argument("ga: crossover cut out of range");
  Chromosome c1 = a, c2 = b;
  for (std::size_t j = cut; j < a.size(); ++j) {
    c1.set(j, b.test(j));
    c2.set(j, a.test(j));
  }
  return {std::move(c1), std::move(c2)};
}

std::pair<Chromosome, Chromosome> crossover_single_point(const Chromosome& a, const Chromosome& b,
                                                         double r_cross, Rng& rng) {
  if (a.size() != b.size()) throw std::invalid_argument("ga: crossover of chromosomes with different lengths");
  if (a.size() < 2 || !rng.bernoulli(r_cross)) return {a, b};
  std::size_t cut = 1 + rng.below(a.size() - 1);
  return crossover_at(a, b, cut);
}

Chromosome mutate_bitflip(Chromosome c, double r_mut, Rng& rng) {
  for (std::size_t j = 0; j < c.size(); ++j)
    if (rng.bernoulli(r_mut)) c.flip(j);
  repair(c, rng);
  return c;
}

std::vector<Chromosome> breed(std::span<const Chromosome> population,
                              std::span<const double> fitnesses, const GAConfig& config,
                              double r_mut, Rng& rng) {
  if (population.size() != fitnesses.size())
    throw std::invalid_argument("ga: fitnesses must parallel the population");
  std::vector<std::size_t> parents(population.size());
  for (auto& p : parents) p = tournament_select(fitnesses, config.tournament_size, rng);
  std::vector<Chromosome> next;
  next.reserve(population.size());
  for (std::size_t i = 0; i + 1 < parents.size(); i += 2) {
    auto [c1, c2] = crossover_single_point(population[parents[i]], population[parents[i + 1]],
                                           config.r_cross, rng);
    next.push_back(mutate_bitflip(std::move(c1), r_mut, rng));
    next.push_back(mutate_bitflip(std::move(c2), r_mut, rng));
  }
  return next;
}

std::uint64_t fitness_seed(std::uint64_t run_seed, const Chromosome& mask) {
  return derive_seed(run_seed, {kTagGaFitness, hash_bytes(mask.to_string())});
}

GAResult evolve(std::size_t d, const FitnessFn& fitness, const GAConfig& config,
                const ProgressFn& progress) {
  config.validate();
  const double r_mut = config.mutation_rate(d);
  if (!(r_mut >= 0.0 && r_mut <= 1.0)) throw std::invalid_argument("ga: r_mut must be in [0, 1]");
  const auto n_pop = static_cast<std::size_t>(config.n_pop);

  std::vector<Chromosome> pop = init_population(d, n_pop, config.seed);
  std::unordered_map<std::string, CVResult> cache;
  GAResult result;
  bool have_best = false;

  for (int gen = 0; gen < config.n_iter; ++gen) {
    std::vector<std::string> keys(n_pop);
    std::vector<CVResult> scores(n_pop);
    std::vector<std::size_t> todo;
    std::unordered_map<std::string, std::size_t> first_in_gen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_pop; ++i) {
      keys[i] = pop[i].to_string();
      if (!config.cache) {
        todo.push_back(i);
        continue;
      }
      if (auto it = cache.find(keys[i]); it != cache.end()) {
        scores[i] = it->second;
        ++hits;
      } else if (first_in_gen.emplace(keys[i], i).second) {
        todo.push_back(i);
      } else {
        ++hits;
      }
    }

    parallel_for(todo.size(), config.threads, [&](std::size_t t) {
      std::size_t i = todo[t];
      scores[i] = fitness(pop[i], fitness_seed(config.seed, pop[i]));
    });

    if (config.cache) {
      for (std::size_t i : todo) cache.emplace(keys[i], scores[i]);
      for (std::size_t i = 0; i < n_pop; ++i)
        if (scores[i].fold_accuracies.empty()) scores[i] = cache.at(keys[i]);
    }

    std::vector<double> fit(n_pop);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_pop; ++i) {
      fit[i] = scores[i].mean;
      sum += fit[i];
      if (!have_best || fit[i] > result.best_fitness.mean) {
        have_best = true;
        result.best_fitness = scores[i];
        result.best_mask = pop[i];
      }
    }
    result.history.push_back(result.best_fitness.mean);
    result.evaluations += n_pop;

    if (progress)
      progress({0, gen, result.best_fitness.mean, sum / static_cast<double>(n_pop),
                static_cast<double>(hits) / static_cast<double>(n_pop)});

    if (gen + 1 < config.n_iter) {
      Rng rng(derive_seed(config.seed, {kTagGaBreed, static_cast<std::uint64_t>(gen)}));
      pop = breed(pop, fit, config, r_mut, rng);
    }
  }
  return result;
}

FitnessFn forest_fitness(const FeatureTable& table, const ForestConfig& fcfg, const CVOptions& cv) {
  return [&table, fcfg, cv](const Chromosome& mask, std::uint64_t seed) {
    return cv_accuracy(table, mask, fcfg, cv, seed);
  };
}

GAResult evolve(const FeatureTable& table, const GAConfig& gacfg, const ForestConfig& fcfg,
                const CVOptions& cv, const ProgressFn& progress) {
  table.validate();
  ForestConfig inner = fcfg;
  if (gacfg.threads > 1) inner.threads = 1;
  return evolve(table.cols(), forest_fitness(table, inner, cv), gacfg, progress);
}

}  // namespace asdmeta
