#include "asdmeta/hier.hpp"

#include <stdexcept>

#include <fmt/format.h>

#include "asdmeta/csv.hpp"
#include "asdmeta/parallel.hpp"

namespace asdmeta {

namespace {

double cell_double(const csv::Row& row, std::size_t col, const char* name) {
  auto v = csv::parse_double(row.cells[col]);
  if (!v) throw ValidationError(fmt::format("expected a number, got '{}'", row.cells[col]), row.line, name);
  return *v;
}

long long cell_int(const csv::Row& row, std::size_t col, const char* name) {
  auto v = csv::parse_int(row.cells[col]);
  if (!v || *v < 0)
    throw ValidationError(fmt::format("expected a non-negative integer, got '{}'", row.cells[col]), row.line, name);
  return *v;
}

}  // namespace

Mask RoundHistory::final_mask(std::size_t d) const {
  return rounds.empty() ? Mask::all(d) : rounds.back().mask;
}

void HierConfig::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("hier: epsilon must be >= 0");
  if (max_rounds < 1) throw std::invalid_argument("hier: max_rounds must be >= 1");
}

bool has_converged(double previous_best, double current_best, double epsilon) {
  return current_best - previous_best < epsilon;
}

RoundHistory run_rounds(const FeatureTable& table, const GAConfig& gacfg, const ForestConfig& fcfg,
                        const CVOptions& cv, const HierConfig& hier, const ProgressFn& progress) {
  hier.validate();
  gacfg.validate();
  table.validate();
  const std::size_t d = table.cols();
  RoundHistory out;
  out.baseline = cv_accuracy(table, Mask::all(d), fcfg, cv, derive_seed(gacfg.seed, {kTagBaseline}));

  Mask current = Mask::all(d);
  for (int r = 1; r <= hier.max_rounds; ++r) {
    FeatureTable sub = apply_mask(table, current);
    GAConfig round_cfg = gacfg;
    round_cfg.seed = derive_seed(gacfg.seed, {kTagRound, static_cast<std::uint64_t>(r)});
    ProgressFn tagged;
    if (progress)
      tagged = [&progress, r](const GenerationLog& log) {
        GenerationLog copy = log;
        copy.round = r;
        progress(copy);
      };
    GAResult ga = evolve(sub, round_cfg, fcfg, cv, tagged);
    current = Mask::lift(ga.best_mask, current);
    out.rounds.push_back({current, ga.best_fitness});
    out.rounds_run = r;
    if (r >= 2 && has_converged(out.rounds[r - 2].accuracy.mean, ga.best_fitness.mean, hier.epsilon)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

std::uint64_t site_seed(std::uint64_t seed, const std::string& site_id) {
  return derive_seed(seed, {kTagSite, hash_bytes(site_id)});
}

std::map<std::string, RoundHistory> run_site_rounds(const FeatureTable& table, const GAConfig& gacfg,
                                                    const ForestConfig& fcfg, const CVOptions& cv,
                                                    const HierConfig& hier, int threads,
                                                    const SiteProgressFn& progress) {
  auto sites = partition_by_site(table);
  std::vector<RoundHistory> results(sites.size());
  const bool nested = sites.size() == 1;
  parallel_for(sites.size(), nested ? 1 : threads, [&](std::size_t s) {
    GAConfig cfg = gacfg;
    cfg.seed = site_seed(gacfg.seed, sites[s].site_id);
    cfg.threads = nested ? threads : 1;
    ProgressFn site_progress;
    if (progress)
      site_progress = [&progress, &id = sites[s].site_id](const GenerationLog& log) { progress(id, log); };
    results[s] = run_rounds(sites[s].table, cfg, fcfg, cv, hier, site_progress);
  });
  std::map<std::string, RoundHistory> out;
  for (std::size_t s = 0; s < sites.size(); ++s) out.emplace(sites[s].site_id, std::move(results[s]));
  return out;
}

std::vector<SiteRoundRow> site_wise_eval(const FeatureTable& table,
                                         const std::map<std::string, RoundHistory>& histories) {
  std::vector<SiteRoundRow> rows;
  for (const auto& site : partition_by_site(table)) {
    auto it = histories.find(site.site_id);
    if (it == histories.end())
      throw std::invalid_argument(fmt::format("site-wise evaluation: no history for site {}", site.site_id));
    const RoundHistory& h = it->second;
    const std::size_t n = site.table.rows();
    rows.push_back({site.site_id, n, 0, h.baseline.mean, h.baseline.std});
    for (std::size_t r = 0; r < h.rounds.size(); ++r)
      rows.push_back({site.site_id, n, static_cast<int>(r + 1), h.rounds[r].accuracy.mean,
                      h.rounds[r].accuracy.std});
  }
  return rows;
}

std::string format_site_report(const std::vector<SiteRoundRow>& rows) {
  std::string out = "SITE_ID,DATA_SIZE,ROUND,ACC_MEAN,ACC_STD\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{}\n", csv::escape(r.site_id), r.data_size, r.round,
                       format_double(r.acc_mean), format_double(r.acc_std));
  return out;
}

std::vector<SiteRoundRow> parse_site_report(std::string_view text) {
  auto doc = csv::parse(text);
  auto c_site = doc.require("SITE_ID"), c_size = doc.require("DATA_SIZE"), c_round = doc.require("ROUND"),
       c_mean = doc.require("ACC_MEAN"), c_std = doc.require("ACC_STD");
  std::vector<SiteRoundRow> rows;
  for (const auto& row : doc.rows) {
    SiteRoundRow r;
    r.site_id = row.cells[c_site];
    r.data_size = static_cast<std::size_t>(cell_int(row, c_size, "DATA_SIZE"));
    r.round = static_cast<int>(cell_int(row, c_round, "ROUND"));
    r.acc_mean = cell_double(row, c_mean, "ACC_MEAN");
    r.acc_std = cell_double(row, c_std, "ACC_STD");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_site_masks(const FeatureTable& table,
                              const std::map<std::string, RoundHistory>& histories) {
  std::string out = "SITE_ID,ROUND,N_FEATURES,MASK\n";
  for (const auto& site : partition_by_site(table)) {
    auto it = histories.find(site.site_id);
    if (it == histories.end()) continue;
    const auto& rounds = it->second.rounds;
    for (std::size_t r = 0; r < rounds.size(); ++r)
      out += fmt::format("{},{},{},{}\n", csv::escape(site.site_id), r + 1, rounds[r].mask.popcount(),
                         rounds[r].mask.to_string());
  }
  return out;
}

std::map<std::string, Mask> parse_final_masks(std::string_view text) {
  auto doc = csv::parse(text);
  auto c_site = doc.require("SITE_ID"), c_round = doc.require("ROUND"), c_mask = doc.require("MASK");
  std::map<std::string, std::pair<long long, Mask>> best;
  for (const auto& row : doc.rows) {
    long long round = cell_int(row, c_round, "ROUND");
    Mask mask;
    try {
      mask = Mask::parse(row.cells[c_mask]);
    } catch (const std::exception& e) {
      throw ValidationError(e.what(), row.line, "MASK");
    }
    auto& slot = best[row.cells[c_site]];
    if (slot.second.size() == 0 || round > slot.first) slot = {round, std::move(mask)};
  }
  std::map<std::string, Mask> out;
  for (auto& [site, v] : best) out.emplace(site, std::move(v.second));
  return out;
}

}  // namespace asdmeta
