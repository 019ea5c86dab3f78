#pragma once

// Hierarchical feature selection: repeated GA rounds, each restricted to the
// features kept by the previous round, until the best CV accuracy stops
// improving.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "asdmeta/cv.hpp"
#include "asdmeta/ga.hpp"
#include "asdmeta/tabular.hpp"

namespace asdmeta {

struct RoundResult {
  /// Selected features in the original d-dimensional indexing.
  Mask mask;
  CVResult accuracy;

  friend bool operator==(const RoundResult&, const RoundResult&) = default;
};

struct RoundHistory {
  /// All-features accuracy (round 0).
  CVResult baseline;
  std::vector<RoundResult> rounds;
  bool converged = false;
  int rounds_run = 0;

  /// Mask of the last round, or all features if no round ran.
  Mask final_mask(std::size_t d) const;
  friend bool operator==(const RoundHistory&, const RoundHistory&) = default;
};

struct HierConfig {
  double epsilon = 0.01;
  int max_rounds = 5;

  void validate() const;
};

/// Round 0 is the all-features baseline, scored with seed
/// derive_seed(gacfg.seed, {kTagBaseline}). Round r >= 1 runs the GA with
/// seed derive_seed(gacfg.seed, {kTagRound, r}) on the columns kept by round
/// r-1. From round 2 on, the driver stops once the best CV mean improves on
/// the previous round by less than epsilon.
RoundHistory run_rounds(const FeatureTable& table, const GAConfig& gacfg, const ForestConfig& fcfg,
                        const CVOptions& cv, const HierConfig& hier,
                        const ProgressFn& progress = {});

/// Stopping test used by run_rounds.
bool has_converged(double previous_best, double current_best, double epsilon);

struct SiteRoundRow {
  std::string site_id;
  std::size_t data_size = 0;
  int round = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;

  friend bool operator==(const SiteRoundRow&, const SiteRoundRow&) = default;
};

/// Per-site seed used by run_site_rounds.
std::uint64_t site_seed(std::uint64_t seed, const std::string& site_id);

using SiteProgressFn = std::function<void(const std::string& site_id, const GenerationLog&)>;

/// run_rounds on every site of `table`, sites in parallel. Site s uses GA
/// seed site_seed(gacfg.seed, s). `progress` may be called concurrently.
std::map<std::string, RoundHistory> run_site_rounds(const FeatureTable& table, const GAConfig& gacfg,
                                                    const ForestConfig& fcfg, const CVOptions& cv,
                                                    const HierConfig& hier, int threads = 1,
                                                    const SiteProgressFn& progress = {});

/// One row per site per round, round 0 first; sites in first-appearance
/// order. Throws std::invalid_argument if a site has no history.
std::vector<SiteRoundRow> site_wise_eval(const FeatureTable& table,
                                         const std::map<std::string, RoundHistory>& histories);

/// CSV with header SITE_ID,DATA_SIZE,ROUND,ACC_MEAN,ACC_STD.
std::string format_site_report(const std::vector<SiteRoundRow>& rows);
std::vector<SiteRoundRow> parse_site_report(std::string_view text);

/// CSV with header SITE_ID,ROUND,N_FEATURES,MASK (rounds >= 1).
std::string format_site_masks(const FeatureTable& table,
                              const std::map<std::string, RoundHistory>& histories);
/// Final mask per site from a masks CSV.
std::map<std::string, Mask> parse_final_masks(std::string_view text);

}  // namespace asdmeta
