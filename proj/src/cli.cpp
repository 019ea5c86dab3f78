#include "asdmeta/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "asdmeta/csv.hpp"
#include "asdmeta/rng.hpp"

namespace asdmeta::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

MissingInput::MissingInput(std::vector<std::string> missing)
    : std::runtime_error("missing input: " + [&] {
        std::string s;
        for (const auto& m : missing) s += (s.empty() ? "" : ", ") + m;
        return s;
      }()),
      missing_(std::move(missing)) {}

namespace {

constexpr const char* kRoundsFile = "rounds.json";
constexpr const char* kSiteReportFile = "site_report.csv";
constexpr const char* kSiteMasksFile = "site_masks.csv";
constexpr const char* kCorrelationFile = "correlation.json";
constexpr const char* kEmbeddingFile = "embedding.csv";
constexpr const char* kKlFile = "kl_history.csv";
constexpr const char* kScanVectorsFile = "scan_vectors.csv";
constexpr const char* kReportFile = "report.json";

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string pairs_file(const std::string& analysis, Metric m) {
  return fmt::format("{}_pairs_{}.csv", analysis, lower(metric_name(m)));
}

// ---- value parsing -------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError(fmt::format("invalid value '{}' for {}: expected {}", value, key, what), 0, key);
}

long long to_int(const std::string& key, const std::string& v, long long lo) {
  auto r = csv::parse_int(v);
  if (!r || *r < lo) bad_value(key, v, fmt::format("an integer >= {}", lo));
  return *r;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, "an unsigned 64-bit integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  auto r = csv::parse_double(v);
  if (!r || !std::isfinite(*r)) bad_value(key, v, "a finite number");
  return *r;
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string s = lower(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(v);
  while (std::getline(in, cur, ',')) {
    auto b = cur.find_first_not_of(" \t"), e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::optional<fs::path> to_path(const std::string& v) {
  if (v.empty()) return std::nullopt;
  return fs::path(v);
}

// ---- key table -------------------------------------------------------------

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

struct KeySpec {
  std::string default_value;
  Setter set;
};

const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = [] {
    std::map<std::string, KeySpec> t;
    auto sz = [](const std::string& k, const std::string& v, long long lo) {
      return static_cast<std::size_t>(to_int(k, v, lo));
    };
    t["seed"] = {"0", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); }};
    t["threads"] = {"1", [](RunConfig& c, auto& k, auto& v) { c.threads = static_cast<int>(to_int(k, v, 1)); }};
    t["out_dir"] = {".", [](RunConfig& c, auto&, auto& v) { c.out_dir = v.empty() ? fs::path(".") : fs::path(v); }};

    t["data.features"] = {"", [](RunConfig& c, auto&, auto& v) { c.features = to_path(v); }};
    t["data.phenotypes"] = {"", [](RunConfig& c, auto&, auto& v) { c.phenotypes = to_path(v); }};
    t["data.scan_params"] = {"", [](RunConfig& c, auto&, auto& v) { c.scan_params = to_path(v); }};

    t["synth.study"] = {"sites", [](RunConfig& c, auto& k, auto& v) {
                          if (v != "sites" && v != "size_quality") bad_value(k, v, "sites or size_quality");
                          c.study = v;
                        }};
    t["synth.sizes"] = {"109", [sz](RunConfig& c, auto& k, auto& v) {
                          c.synth.sizes.clear();
                          for (auto& s : split_list(v)) c.synth.sizes.push_back(sz(k, s, 1));
                          if (c.synth.sizes.empty()) bad_value(k, v, "a comma-separated list of sizes");
                        }};
    t["synth.noise"] = {"1", [](RunConfig& c, auto& k, auto& v) {
                          c.synth.noise_scale.clear();
                          for (auto& s : split_list(v)) c.synth.noise_scale.push_back(to_double(k, s));
                          if (c.synth.noise_scale.empty()) bad_value(k, v, "a comma-separated list of noise scales");
                        }};
    t["synth.site_ids"] = {"", [](RunConfig& c, auto&, auto& v) { c.synth.site_ids = split_list(v); }};
    t["synth.d"] = {"62", [sz](RunConfig& c, auto& k, auto& v) { c.synth.d = sz(k, v, 1); }};
    t["synth.k"] = {"6", [sz](RunConfig& c, auto& k, auto& v) { c.synth.k_informative = sz(k, v, 1); }};
    t["synth.effect"] = {"1", [](RunConfig& c, auto& k, auto& v) { c.synth.effect_size = to_double(k, v); }};
    t["synth.balance"] = {"0.5", [](RunConfig& c, auto& k, auto& v) { c.synth.label_balance = to_double(k, v); }};

    t["sq.n_sites"] = {"20", [sz](RunConfig& c, auto& k, auto& v) { c.size_quality.n_sites = sz(k, v, 1); }};
    t["sq.size_min"] = {"26", [sz](RunConfig& c, auto& k, auto& v) { c.size_quality.size_min = sz(k, v, 1); }};
    t["sq.size_max"] = {"184", [sz](RunConfig& c, auto& k, auto& v) { c.size_quality.size_max = sz(k, v, 1); }};
    t["sq.quality_slope"] = {"1", [](RunConfig& c, auto& k, auto& v) { c.size_quality.quality_slope = to_double(k, v); }};
    t["sq.noise_base"] = {"1", [](RunConfig& c, auto& k, auto& v) { c.size_quality.noise_base = to_double(k, v); }};
    t["sq.d"] = {"10", [sz](RunConfig& c, auto& k, auto& v) { c.size_quality.d = sz(k, v, 1); }};
    t["sq.k"] = {"2", [sz](RunConfig& c, auto& k, auto& v) { c.size_quality.k_informative = sz(k, v, 1); }};
    t["sq.effect"] = {"2", [](RunConfig& c, auto& k, auto& v) { c.size_quality.effect_size = to_double(k, v); }};
    t["sq.balance"] = {"0.5", [](RunConfig& c, auto& k, auto& v) { c.size_quality.label_balance = to_double(k, v); }};

    auto pheno = [](double PhenotypeModel::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.synth.phenotypes.*field = to_double(k, v);
        c.size_quality.phenotypes.*field = to_double(k, v);
      };
    };
    t["pheno.age_mean"] = {"17", pheno(&PhenotypeModel::age_mean)};
    t["pheno.age_sd"] = {"7.5", pheno(&PhenotypeModel::age_sd)};
    t["pheno.age_min"] = {"6.5", pheno(&PhenotypeModel::age_min)};
    t["pheno.female_fraction"] = {"0.15", pheno(&PhenotypeModel::female_fraction)};
    t["pheno.eyes_open_fraction"] = {"0.7", pheno(&PhenotypeModel::eyes_open_fraction)};

    t["ga.n_iter"] = {"30", [](RunConfig& c, auto& k, auto& v) { c.ga.n_iter = static_cast<int>(to_int(k, v, 1)); }};
    t["ga.n_pop"] = {"300", [](RunConfig& c, auto& k, auto& v) { c.ga.n_pop = static_cast<int>(to_int(k, v, 2)); }};
    t["ga.r_cross"] = {"0.9", [](RunConfig& c, auto& k, auto& v) { c.ga.r_cross = to_double(k, v); }};
    t["ga.r_mut"] = {"auto", [](RunConfig& c, auto& k, auto& v) {
                       if (v == "auto") c.ga.r_mut.reset();
                       else c.ga.r_mut = to_double(k, v);
                     }};
    t["ga.tournament_size"] = {"3", [](RunConfig& c, auto& k, auto& v) {
                                 c.ga.tournament_size = static_cast<int>(to_int(k, v, 1));
                               }};
    t["ga.cache"] = {"true", [](RunConfig& c, auto& k, auto& v) { c.ga.cache = to_bool(k, v); }};

    t["forest.n_trees"] = {"100", [](RunConfig& c, auto& k, auto& v) { c.forest.n_trees = static_cast<int>(to_int(k, v, 1)); }};
    t["forest.max_features"] = {"sqrt", [](RunConfig& c, auto& k, auto& v) {
                                  try {
                                    c.forest.max_features = MaxFeatures::parse(v);
                                  } catch (const std::exception&) {
                                    bad_value(k, v, "sqrt, all or a positive integer");
                                  }
                                }};
    t["forest.min_samples_leaf"] = {"1", [](RunConfig& c, auto& k, auto& v) {
                                      c.forest.min_samples_leaf = static_cast<int>(to_int(k, v, 1));
                                    }};
    t["forest.max_depth"] = {"none", [](RunConfig& c, auto& k, auto& v) {
                               if (v == "none") c.forest.max_depth.reset();
                               else c.forest.max_depth = static_cast<int>(to_int(k, v, 1));
                             }};
    t["forest.bootstrap"] = {"true", [](RunConfig& c, auto& k, auto& v) { c.forest.bootstrap = to_bool(k, v); }};

    t["cv.k"] = {"3", [sz](RunConfig& c, auto& k, auto& v) { c.cv.k = sz(k, v, 2); }};
    t["cv.stratified"] = {"false", [](RunConfig& c, auto& k, auto& v) { c.cv.stratified = to_bool(k, v); }};

    t["hier.epsilon"] = {"0.01", [](RunConfig& c, auto& k, auto& v) { c.hier.epsilon = to_double(k, v); }};
    t["hier.max_rounds"] = {"5", [](RunConfig& c, auto& k, auto& v) {
                              c.hier.max_rounds = static_cast<int>(to_int(k, v, 1));
                            }};

    t["bootstrap.replicates"] = {"50", [sz](RunConfig& c, auto& k, auto& v) { c.bootstrap.replicates = sz(k, v, 1); }};
    t["bootstrap.fraction"] = {"0.5", [](RunConfig& c, auto& k, auto& v) { c.bootstrap.fraction = to_double(k, v); }};

    t["embed.perplexity"] = {"5", [](RunConfig& c, auto& k, auto& v) { c.embed.perplexity = to_double(k, v); }};
    t["embed.iterations"] = {"1000", [](RunConfig& c, auto& k, auto& v) {
                               c.embed.iterations = static_cast<int>(to_int(k, v, 1));
                             }};
    t["embed.learning_rate"] = {"100", [](RunConfig& c, auto& k, auto& v) { c.embed.learning_rate = to_double(k, v); }};
    return t;
  }();
  return table;
}

bool echoed(const std::string& key) { return key != "seed" && key != "threads" && key != "out_dir"; }

template <typename Fn>
void check(const std::string& what, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, what);
  }
}

// ---- I/O helpers -----------------------------------------------------------

void require_files(const std::vector<fs::path>& paths) {
  std::vector<std::string> missing;
  for (const auto& p : paths)
    if (!fs::is_regular_file(p)) missing.push_back(p.string());
  if (!missing.empty()) throw MissingInput(std::move(missing));
}

json header_json(const RunConfig& config, const std::string& command) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = config.seed;
  json cfg = json::object();
  for (const auto& [k, v] : config.values) cfg[k] = v;
  j["config"] = cfg;
  return j;
}

void write_json(const fs::path& path, const json& j) { write_text_file_atomic(path, j.dump(2) + "\n"); }

json cv_json(const CVResult& r) {
  return {{"mean", r.mean}, {"std", r.std}, {"fold_accuracies", r.fold_accuracies}};
}

void summary(std::ostream& out, const std::string& command, const std::vector<std::string>& files) {
  json j;
  j["command"] = command;
  j["outputs"] = files;
  out << j.dump() << "\n";
}

void warn(std::ostream& err, const std::string& message) { err << "warning: " << message << "\n"; }

// Final-round accuracy per site from a site report.
std::map<std::string, double> final_accuracies(const std::vector<SiteRoundRow>& rows) {
  std::map<std::string, std::pair<int, double>> best;
  for (const auto& r : rows) {
    auto it = best.find(r.site_id);
    if (it == best.end() || r.round > it->second.first) best[r.site_id] = {r.round, r.acc_mean};
  }
  std::map<std::string, double> out;
  for (const auto& [site, v] : best) out[site] = v.second;
  return out;
}

std::uint64_t select_seed(const RunConfig& c) { return derive_seed(c.seed, {kTagRound}); }
std::uint64_t bootstrap_seed(const RunConfig& c) { return derive_seed(c.seed, {kTagReplicate}); }
std::uint64_t embed_seed(const RunConfig& c) { return derive_seed(c.seed, {kTagEmbedInit}); }

}  // namespace

fs::path RunConfig::features_path() const { return features ? *features : out_dir / "features.csv"; }
fs::path RunConfig::phenotypes_path() const { return phenotypes ? *phenotypes : out_dir / "phenotypes.csv"; }
fs::path RunConfig::scan_params_path() const { return scan_params ? *scan_params : out_dir / "scan_params.csv"; }

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) {
    ++line_no;
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
    auto trim = [](std::string s) {
      auto f = s.find_first_not_of(" \t\r"), l = s.find_last_not_of(" \t\r");
      return f == std::string::npos ? std::string() : s.substr(f, l - f + 1);
    };
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (!out.emplace(key, value).second) throw ConfigError(fmt::format("key {} repeated", key), line_no, key);
  }
  return out;
}

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> values = [] {
    std::map<std::string, std::string> v;
    for (const auto& [k, spec] : key_table()) v[k] = spec.default_value;
    return v;
  }();
  return values;
}

RunConfig make_config(const std::map<std::string, std::string>& values) {
  const auto& table = key_table();
  for (const auto& [k, v] : values)
    if (!table.count(k)) throw ConfigError(fmt::format("unknown configuration key '{}'", k), 0, k);

  RunConfig c;
  for (const auto& [k, spec] : table) {
    auto it = values.find(k);
    const std::string& v = it != values.end() ? it->second : spec.default_value;
    spec.set(c, k, v);
    if (echoed(k)) c.values[k] = v;
  }

  bool data_given = c.features || c.phenotypes || c.scan_params;
  bool synth_given = false;
  for (const auto& [k, v] : values)
    if (k.starts_with("synth.") || k.starts_with("sq.")) synth_given = true;
  if (data_given && synth_given)
    throw ConfigError("give either input paths (data.*) or synth parameters (synth.*, sq.*), not both");

  check("ga", [&] { c.ga.validate(); });
  check("forest", [&] { c.forest.validate(); });
  check("hier", [&] { c.hier.validate(); });
  check("bootstrap", [&] { c.bootstrap.validate(); });
  if (!(c.embed.perplexity > 0.0)) throw ConfigError("embed.perplexity must be > 0", 0, "embed.perplexity");
  if (!(c.embed.learning_rate > 0.0))
    throw ConfigError("embed.learning_rate must be > 0", 0, "embed.learning_rate");
  c.ga.threads = c.threads;
  c.bootstrap.threads = c.threads;
  return c;
}

std::string preamble(const RunConfig& config, const std::string& command) {
  std::string out = fmt::format("# asdmeta {}\n# command={}\n# seed={}\n", kVersion, command, config.seed);
  for (const auto& [k, v] : config.values) out += fmt::format("# {}={}\n", k, v);
  return out;
}

// ---- commands ----------------------------------------------------------------

void cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_files({config.features_path()});
  FeatureTable table = load_feature_table(config.features_path());
  json report;
  report["ok"] = true;
  json sites = json::array();
  for (const auto& site : partition_by_site(table)) {
    std::size_t n_asd = std::count(site.table.labels.begin(), site.table.labels.end(), kASD);
    sites.push_back({{"site_id", site.site_id}, {"n", site.table.rows()}, {"n_asd", n_asd}});
  }
  report["features"] = {{"path", config.features_path().string()},
                        {"subjects", table.rows()},
                        {"features", table.cols()},
                        {"sites", sites}};
  std::vector<std::string> warnings;

  if (config.phenotypes || fs::is_regular_file(config.phenotypes_path())) {
    require_files({config.phenotypes_path()});
    auto pheno = index_phenotypes(load_phenotypes(config.phenotypes_path()));
    std::size_t missing = 0;
    for (std::size_t i = 0; i < table.rows(); ++i)
      if (table.labels[i] == kASD && !pheno.count(table.subject_ids[i])) ++missing;
    if (missing) warnings.push_back(fmt::format("{} ASD subjects have no phenotype record", missing));
    report["phenotypes"] = {{"path", config.phenotypes_path().string()}, {"records", pheno.size()}};
  }
  if (config.scan_params || fs::is_regular_file(config.scan_params_path())) {
    require_files({config.scan_params_path()});
    auto scans = load_scan_params(config.scan_params_path());
    std::set<std::string> have;
    for (const auto& s : scans) have.insert(s.site_id);
    for (const auto& site : partition_by_site(table))
      if (!have.count(site.site_id)) warnings.push_back(fmt::format("site {} has no scan parameters", site.site_id));
    report["scan_params"] = {{"path", config.scan_params_path().string()}, {"sites", scans.size()}};
  }
  for (const auto& w : warnings) warn(err, w);
  report["warnings"] = warnings;
  out << report.dump(2) << "\n";
}

void cmd_synth(const RunConfig& config, std::ostream& out, std::ostream&) {
  SynthDataset ds;
  std::string sites_csv = "SITE_ID,DATA_SIZE,NOISE_SCALE,BAYES_ACCURACY\n";
  if (config.study == "size_quality") {
    SizeQualityConfig sq = config.size_quality;
    sq.seed = config.seed;
    SizeQualityStudy study;
    check("sq", [&] { study = generate_size_quality_study(sq); });
    ds = std::move(study.dataset);
    for (std::size_t s = 0; s < ds.site_ids.size(); ++s)
      sites_csv += fmt::format("{},{},{},{}\n", ds.site_ids[s], study.sizes[s], format_double(study.noise_scales[s]),
                               format_double(bayes_accuracy(sq.effect_size, study.noise_scales[s])));
  } else {
    SynthConfig sc = config.synth;
    sc.seed = config.seed;
    check("synth", [&] { sc.validate(); });
    ds = generate(sc);
    for (std::size_t s = 0; s < ds.site_ids.size(); ++s)
      sites_csv += fmt::format("{},{},{},{}\n", ds.site_ids[s], sc.sizes[s], format_double(sc.noise_for(s)),
                               format_double(bayes_accuracy(sc.effect_size, sc.noise_for(s))));
  }
  const std::string pre = preamble(config, "synth");
  write_dataset(ds, config.out_dir, pre);
  write_text_file_atomic(config.artifact("synth_sites.csv"), pre + sites_csv);
  summary(out, "synth", {"features.csv", "phenotypes.csv", "scan_params.csv", "truth_mask.txt", "synth_sites.csv"});
}

void cmd_select(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_files({config.features_path()});
  FeatureTable table = load_feature_table(config.features_path());
  GAConfig ga = config.ga;
  ga.seed = select_seed(config);

  std::mutex log_mutex;
  SiteProgressFn progress;
  if (!config.quiet)
    progress = [&](const std::string& site, const GenerationLog& log) {
      std::lock_guard lock(log_mutex);
      err << fmt::format("select site={} round={} generation={} best={:.4f} mean={:.4f} cache_hit_rate={:.3f}\n",
                         site, log.round, log.generation, log.best_fitness, log.mean_fitness,
                         log.cache_hit_rate);
    };
  auto histories = run_site_rounds(table, ga, config.forest, config.cv, config.hier, config.threads, progress);

  json j = header_json(config, "select");
  json sites = json::array();
  for (const auto& site : partition_by_site(table)) {
    const RoundHistory& h = histories.at(site.site_id);
    json rounds = json::array();
    for (std::size_t r = 0; r < h.rounds.size(); ++r) {
      json round = cv_json(h.rounds[r].accuracy);
      round["round"] = r + 1;
      round["n_features"] = h.rounds[r].mask.popcount();
      round["mask"] = h.rounds[r].mask.to_string();
      rounds.push_back(round);
    }
    sites.push_back({{"site_id", site.site_id},
                     {"data_size", site.table.rows()},
                     {"baseline", cv_json(h.baseline)},
                     {"rounds", rounds},
                     {"converged", h.converged},
                     {"rounds_run", h.rounds_run}});
  }
  j["sites"] = sites;
  const std::string pre = preamble(config, "select");
  write_json(config.artifact(kRoundsFile), j);
  write_text_file_atomic(config.artifact(kSiteReportFile),
                         pre + format_site_report(site_wise_eval(table, histories)));
  write_text_file_atomic(config.artifact(kSiteMasksFile), pre + format_site_masks(table, histories));
  summary(out, "select", {kRoundsFile, kSiteReportFile, kSiteMasksFile});
}

void cmd_bootstrap(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_files({config.features_path(), config.phenotypes_path(), config.artifact(kSiteMasksFile),
                 config.artifact(kSiteReportFile)});
  FeatureTable table = load_feature_table(config.features_path());
  auto pheno = index_phenotypes(load_phenotypes(config.phenotypes_path()));
  auto masks = parse_final_masks(read_text_file(config.artifact(kSiteMasksFile)));
  auto accuracies = final_accuracies(parse_site_report(read_text_file(config.artifact(kSiteReportFile))));

  std::vector<BootstrapReplicate> replicates, site_rows;
  for (const auto& site : partition_by_site(table)) {
    auto m = masks.find(site.site_id);
    auto a = accuracies.find(site.site_id);
    if (m == masks.end() || a == accuracies.end())
      throw MissingInput({fmt::format("selection results for site {}", site.site_id)});
    if (m->second.size() != table.cols())
      throw ValidationError(fmt::format("mask for site {} has {} bits, features have {}", site.site_id,
                                        m->second.size(), table.cols()),
                            0, "MASK");
    auto result = bootstrap_site(site.site_id, site.table, pheno, m->second, config.bootstrap, config.forest,
                                 config.cv, site_seed(bootstrap_seed(config), site.site_id));
    for (const auto& w : result.warnings) warn(err, w);
    replicates.insert(replicates.end(), result.replicates.begin(), result.replicates.end());
    site_rows.push_back({0, site_stats(site.site_id, site.table, pheno, a->second)});
  }

  const std::string pre = preamble(config, "bootstrap");
  std::vector<std::string> files;
  for (Metric metric : kAllMetrics) {
    for (const auto& [analysis, rows] : {std::pair{"bootstrap", &replicates}, std::pair{"site", &site_rows}}) {
      std::size_t skipped = 0;
      auto pairs = make_pairs(*rows, metric, &skipped);
      if (skipped)
        warn(err, fmt::format("{} {} rows have undefined {}; excluded", skipped, analysis, metric_name(metric)));
      std::string name = pairs_file(analysis, metric);
      write_text_file_atomic(config.artifact(name), pre + format_pairs(pairs));
      files.push_back(name);
    }
  }
  summary(out, "bootstrap", files);
}

void cmd_correlate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  std::vector<fs::path> needed;
  for (Metric metric : kAllMetrics)
    for (const char* analysis : {"bootstrap", "site"}) needed.push_back(config.artifact(pairs_file(analysis, metric)));
  require_files(needed);

  json j = header_json(config, "correlate");
  for (const char* analysis : {"bootstrap", "site"}) {
    json block = json::object();
    for (Metric metric : kAllMetrics) {
      auto pairs = parse_pairs(read_text_file(config.artifact(pairs_file(analysis, metric))));
      try {
        CorrelationResult r = correlate(pairs);
        block[metric_name(metric)] = {{"r", r.r}, {"p", r.p_value}, {"n", r.n}};
      } catch (const std::invalid_argument& e) {
        warn(err, fmt::format("{} {}: {}", analysis, metric_name(metric), e.what()));
        block[metric_name(metric)] = {{"error", e.what()}, {"n", pairs.size()}};
      }
    }
    j[analysis] = block;
  }
  write_json(config.artifact(kCorrelationFile), j);
  summary(out, "correlate", {kCorrelationFile});
}

void cmd_embed(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_files({config.scan_params_path()});
  auto records = load_scan_params(config.scan_params_path());
  EncodedScans enc = encode_scan_conditions(records);
  for (const auto& w : enc.warnings) warn(err, w);

  std::map<std::string, double> accuracy;
  if (fs::is_regular_file(config.artifact(kSiteReportFile)))
    accuracy = final_accuracies(parse_site_report(read_text_file(config.artifact(kSiteReportFile))));
  else
    warn(err, fmt::format("{} not found; accuracies written as NA", kSiteReportFile));

  std::vector<std::string> std_warnings;
  Matrix x = standardize(scan_matrix(enc.vectors), &std_warnings);
  for (const auto& w : std_warnings) warn(err, w);
  EmbeddingConfig ec = config.embed;
  ec.seed = embed_seed(config);
  TsneResult result = tsne(x, ec);

  std::vector<EmbeddingRow> rows;
  std::string vectors_csv = "SITE_ID,VENDOR,VENDOR_CODE,TE_SEC,FA_DEG\n";
  for (std::size_t i = 0; i < enc.vectors.size(); ++i) {
    const auto& v = enc.vectors[i];
    EmbeddingRow row{v.site_id, result.embedding(i, 0), result.embedding(i, 1), std::nullopt};
    if (auto it = accuracy.find(v.site_id); it != accuracy.end()) row.accuracy = it->second;
    else if (!accuracy.empty()) warn(err, fmt::format("site {} has no accuracy; written as NA", v.site_id));
    rows.push_back(row);
    vectors_csv += fmt::format("{},{},{},{},{}\n", csv::escape(v.site_id), csv::escape(enc.vendors[v.vendor_code]),
                               v.vendor_code, format_double(v.te_sec), format_double(v.fa_deg));
  }
  const std::string pre = preamble(config, "embed");
  write_text_file_atomic(config.artifact(kEmbeddingFile), pre + format_embedding(rows));
  write_text_file_atomic(config.artifact(kKlFile), pre + format_kl_history(result.kl_history));
  write_text_file_atomic(config.artifact(kScanVectorsFile), pre + vectors_csv);
  summary(out, "embed", {kEmbeddingFile, kKlFile, kScanVectorsFile});
}

void cmd_report(const RunConfig& config, std::ostream& out, std::ostream&) {
  std::vector<fs::path> needed = {config.artifact(kRoundsFile), config.artifact(kSiteReportFile),
                                  config.artifact(kSiteMasksFile), config.artifact(kCorrelationFile),
                                  config.artifact(kEmbeddingFile), config.artifact(kKlFile)};
  for (Metric metric : kAllMetrics)
    for (const char* analysis : {"bootstrap", "site"}) needed.push_back(config.artifact(pairs_file(analysis, metric)));
  require_files(needed);

  json j = header_json(config, "report");
  json rows = json::array();
  for (const auto& r : parse_site_report(read_text_file(config.artifact(kSiteReportFile))))
    rows.push_back({{"site_id", r.site_id}, {"data_size", r.data_size}, {"round", r.round},
                    {"acc_mean", r.acc_mean}, {"acc_std", r.acc_std}});
  j["site_report"] = rows;
  json masks = json::object();
  for (const auto& [site, mask] : parse_final_masks(read_text_file(config.artifact(kSiteMasksFile))))
    masks[site] = mask.to_string();
  j["final_masks"] = masks;

  json corr = json::parse(read_text_file(config.artifact(kCorrelationFile)));
  j["correlation"] = {{"bootstrap", corr.at("bootstrap")}, {"site", corr.at("site")}};

  auto emb = csv::parse(read_text_file(config.artifact(kEmbeddingFile)));
  json points = json::array();
  auto c_site = emb.require("SITE_ID"), c_x = emb.require("X"), c_y = emb.require("Y"), c_acc = emb.require("ACCURACY");
  for (const auto& row : emb.rows) {
    json p = {{"site_id", row.cells[c_site]},
              {"x", csv::parse_double(row.cells[c_x]).value_or(0.0)},
              {"y", csv::parse_double(row.cells[c_y]).value_or(0.0)}};
    auto acc = csv::parse_double(row.cells[c_acc]);
    p["accuracy"] = acc ? json(*acc) : json(nullptr);
    points.push_back(p);
  }
  j["embedding"] = points;
  auto kl = csv::parse(read_text_file(config.artifact(kKlFile)));
  if (!kl.rows.empty()) j["final_kl"] = csv::parse_double(kl.rows.back().cells[kl.require("KL")]).value_or(0.0);

  j["inputs"] = json::object();
  for (const char* name : {kRoundsFile, kSiteReportFile, kSiteMasksFile, kCorrelationFile, kEmbeddingFile, kKlFile}) {
    std::string text = read_text_file(config.artifact(name));
    j["inputs"][name] = fmt::format("{:016x}", hash_bytes(text));
  }
  write_json(config.artifact(kReportFile), j);
  summary(out, "report", {kReportFile});
}

// ---- entry point -------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-site ASD feature selection and meta-data analysis toolkit", "asdmeta"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "Configuration file (key = value lines)");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out-dir", out_dir, "Run directory for inputs and outputs");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", sets, "Override a configuration key (key=value)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::map<std::string, std::string> flag_values;
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [&flag_values, key](const std::string& v) { flag_values[key] = v; },
                                          help);
  };

  using Command = void (*)(const RunConfig&, std::ostream&, std::ostream&);
  std::vector<std::pair<CLI::App*, Command>> commands;
  auto* validate = app.add_subcommand("validate", "Validate input tables");
  flag(validate, "--features", "data.features", "Features CSV");
  flag(validate, "--phenotypes", "data.phenotypes", "Phenotypes CSV");
  flag(validate, "--scan-params", "data.scan_params", "Scan parameters CSV");
  commands.push_back({validate, cmd_validate});
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-site dataset");
  flag(synth, "--study", "synth.study", "sites or size_quality");
  commands.push_back({synth, cmd_synth});
  auto* select = app.add_subcommand("select", "Hierarchical GA feature selection per site");
  flag(select, "--features", "data.features", "Features CSV");
  flag(select, "--n-pop", "ga.n_pop", "GA population size");
  flag(select, "--n-iter", "ga.n_iter", "GA generations");
  flag(select, "--max-rounds", "hier.max_rounds", "Maximum selection rounds");
  commands.push_back({select, cmd_select});
  auto* boot = app.add_subcommand("bootstrap", "Subsample sites and pair meta-data with accuracy");
  flag(boot, "--features", "data.features", "Features CSV");
  flag(boot, "--phenotypes", "data.phenotypes", "Phenotypes CSV");
  flag(boot, "--replicates", "bootstrap.replicates", "Subsamples per site");
  commands.push_back({boot, cmd_bootstrap});
  auto* corr = app.add_subcommand("correlate", "Pearson correlation of each metric with accuracy");
  commands.push_back({corr, cmd_correlate});
  auto* emb = app.add_subcommand("embed", "t-SNE embedding of site scan conditions");
  flag(emb, "--scan-params", "data.scan_params", "Scan parameters CSV");
  flag(emb, "--perplexity", "embed.perplexity", "t-SNE perplexity");
  flag(emb, "--iterations", "embed.iterations", "t-SNE iterations");
  commands.push_back({emb, cmd_embed});
  auto* rep = app.add_subcommand("report", "Bundle all artifacts into one JSON file");
  commands.push_back({rep, cmd_report});

  auto error_json = [&](const std::string& kind, const std::string& message, json extra = json::object()) {
    json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    for (auto& [k, v] : extra.items()) j["error"][k] = v;
    err << j.dump() << "\n";
  };

  try {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    error_json("usage", e.what());
    return kValidationFailure;
  }

  try {
    std::map<std::string, std::string> values;
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw MissingInput({config_path});
      values = parse_config_text(read_text_file(config_path));
    }
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", s));
      values[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& [k, v] : flag_values) values[k] = v;
    if (seed) values["seed"] = std::to_string(*seed);
    if (threads) values["threads"] = std::to_string(*threads);
    if (out_dir) values["out_dir"] = *out_dir;
    RunConfig config = make_config(values);
    config.quiet = quiet;
    fs::create_directories(config.out_dir);

    for (auto& [sub, fn] : commands)
      if (sub->parsed()) fn(config, out, err);
    return kOk;
  } catch (const MissingInput& e) {
    error_json("missing_input", e.what(), {{"missing", e.missing()}});
    return kRuntimeError;
  } catch (const ValidationError& e) {
    json extra = json::object();
    if (e.line()) extra["line"] = e.line();
    if (!e.column().empty()) extra["column"] = e.column();
    error_json("validation", e.what(), extra);
    return kValidationFailure;
  } catch (const std::exception& e) {
    error_json("runtime", e.what());
    return kRuntimeError;
  }
}

}  // namespace asdmeta::cli
