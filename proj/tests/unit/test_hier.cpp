#include <doctest.h>

#include "asdmeta/hier.hpp"
#include "util.hpp"

using namespace asdmeta;

namespace {

ForestConfig small_forest() {
  ForestConfig f;
  f.n_trees = 15;
  return f;
}

GAConfig small_ga(std::uint64_t seed) {
  GAConfig g;
  g.n_pop = 10;
  g.n_iter = 4;
  g.seed = seed;
  return g;
}

void check_stopping_rule(const RoundHistory& h, const HierConfig& hier) {
  REQUIRE(h.rounds_run == static_cast<int>(h.rounds.size()));
  REQUIRE(h.rounds_run >= 1);
  for (int r = 2; r <= h.rounds_run; ++r) {
    double gain = h.rounds[static_cast<std::size_t>(r - 1)].accuracy.mean -
                  h.rounds[static_cast<std::size_t>(r - 2)].accuracy.mean;
    bool last = r == h.rounds_run;
    if (!last) CHECK(gain >= hier.epsilon);
    if (last && h.converged) CHECK(gain < hier.epsilon);
    if (last && !h.converged) CHECK(gain >= hier.epsilon);
  }
  if (!h.converged) CHECK(h.rounds_run == hier.max_rounds);
}

SynthDataset multi_site(std::uint64_t seed) {
  SynthConfig c;
  c.sizes = {24, 30, 36};
  c.noise_scale = {1.0, 1.5, 0.7};
  c.site_ids = {"B", "A", "C"};
  c.d = 6;
  c.k_informative = 2;
  c.effect_size = 2.0;
  c.seed = seed;
  return generate(c);
}

}  // namespace

TEST_SUITE("hier") {

TEST_CASE("a single round") {
  auto ds = testutil::planted(60, 6, 2, 2.0, 1);
  HierConfig h;
  h.max_rounds = 1;
  auto hist = run_rounds(ds.table, small_ga(1), small_forest(), {}, h);
  CHECK(hist.rounds_run == 1);
  CHECK_FALSE(hist.converged);
  CHECK(hist.final_mask(6) == hist.rounds[0].mask);
  CHECK(RoundHistory{}.final_mask(3) == Mask::all(3));
}

TEST_CASE("a saturated signal converges at round two") {
  auto ds = testutil::planted(80, 4, 2, 8.0, 2);
  auto hist = run_rounds(ds.table, small_ga(2), small_forest(), {}, {});
  CHECK(hist.rounds_run == 2);
  CHECK(hist.converged);
  CHECK(hist.rounds[0].accuracy.mean == 1.0);
}

TEST_CASE("rounds nest and follow the stopping rule") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto ds = testutil::planted(70, 10, 3, 1.0, seed);
    HierConfig h;
    h.epsilon = seed % 2 == 0 ? 0.01 : 0.0;
    h.max_rounds = 4;
    auto hist = run_rounds(ds.table, small_ga(seed), small_forest(), {}, h);
    Mask prev = Mask::all(10);
    for (const auto& r : hist.rounds) {
      CHECK(r.mask.subset_of(prev));
      CHECK_FALSE(r.mask.none());
      prev = r.mask;
    }
    check_stopping_rule(hist, h);
  }
}

TEST_CASE("convergence test") {
  CHECK(has_converged(0.70, 0.705, 0.01));
  CHECK(has_converged(0.70, 0.65, 0.01));
  CHECK_FALSE(has_converged(0.70, 0.72, 0.01));
  CHECK_FALSE(has_converged(0.5, 0.5, 0.0));
}

TEST_CASE("rounds equal sequential GA runs on the surviving columns") {
  auto ds = testutil::planted(60, 8, 2, 1.5, 7);
  auto ga = small_ga(9);
  HierConfig h;
  h.max_rounds = 3;
  h.epsilon = 0.0;
  auto hist = run_rounds(ds.table, ga, small_forest(), {}, h);

  CHECK(hist.baseline == cv_accuracy(ds.table, Mask::all(8), small_forest(), {}, derive_seed(9, {kTagBaseline})));
  Mask current = Mask::all(8);
  for (std::size_t r = 0; r < hist.rounds.size(); ++r) {
    GAConfig cfg = ga;
    cfg.seed = derive_seed(9, {kTagRound, r + 1});
    auto res = evolve(apply_mask(ds.table, current), cfg, small_forest(), {});
    current = Mask::lift(res.best_mask, current);
    CHECK(hist.rounds[r].mask == current);
    CHECK(hist.rounds[r].accuracy == res.best_fitness);
  }
}

TEST_CASE("progress reports carry the round") {
  auto ds = testutil::planted(40, 5, 2, 2.0, 3);
  HierConfig h;
  h.max_rounds = 2;
  std::vector<int> rounds;
  auto hist = run_rounds(ds.table, small_ga(3), small_forest(), {}, h,
                         [&](const GenerationLog& g) { rounds.push_back(g.round); });
  CHECK(rounds.size() == static_cast<std::size_t>(4 * hist.rounds_run));
  CHECK(rounds.front() == 1);
  CHECK(rounds.back() == hist.rounds_run);
}

TEST_CASE("per-site runs") {
  auto ds = multi_site(4);
  HierConfig h;
  h.max_rounds = 2;
  auto a = run_site_rounds(ds.table, small_ga(5), small_forest(), {}, h, 1);
  auto b = run_site_rounds(ds.table, small_ga(5), small_forest(), {}, h, 3);
  CHECK(a == b);
  REQUIRE(a.size() == 3);

  for (const auto& part : partition_by_site(ds.table)) {
    GAConfig g = small_ga(site_seed(5, part.site_id));
    CHECK(a.at(part.site_id) == run_rounds(part.table, g, small_forest(), {}, h));
  }

  auto rows = site_wise_eval(ds.table, a);
  std::size_t expected = 0;
  for (const auto& [id, hist] : a) expected += 1 + hist.rounds.size();
  REQUIRE(rows.size() == expected);
  CHECK(rows[0].site_id == "B");
  CHECK(rows[0].data_size == 24);
  CHECK(rows[0].round == 0);
  CHECK(rows[0].acc_mean == a.at("B").baseline.mean);
  CHECK(rows[1].acc_mean == a.at("B").rounds[0].accuracy.mean);
  CHECK(rows[1].acc_std == a.at("B").rounds[0].accuracy.std);
  CHECK(rows.back().site_id == "C");

  CHECK(parse_site_report(format_site_report(rows)) == rows);

  auto finals = parse_final_masks(format_site_masks(ds.table, a));
  REQUIRE(finals.size() == 3);
  for (const auto& [id, hist] : a) CHECK(finals.at(id) == hist.final_mask(6));

  a.erase("A");
  CHECK_THROWS_AS(site_wise_eval(ds.table, a), std::invalid_argument);
}

TEST_CASE("a single site gets the threads") {
  auto ds = testutil::planted(50, 5, 2, 2.0, 6);
  HierConfig h;
  h.max_rounds = 2;
  auto one = run_site_rounds(ds.table, small_ga(1), small_forest(), {}, h, 1);
  auto four = run_site_rounds(ds.table, small_ga(1), small_forest(), {}, h, 4);
  CHECK(one == four);
  REQUIRE(one.size() == 1);
  CHECK(site_wise_eval(ds.table, one).front().data_size == 50);
}

TEST_CASE("final masks keep the highest round") {
  auto m = parse_final_masks("SITE_ID,ROUND,N_FEATURES,MASK\nX,2,1,0100\nX,1,2,0110\nY,1,1,1000\n");
  CHECK(m.at("X").to_string() == "0100");
  CHECK(m.at("Y").to_string() == "1000");
  CHECK_THROWS_AS(parse_final_masks("SITE_ID,ROUND,N_FEATURES,MASK\nX,1,1,01x0\n"), ValidationError);
  CHECK_THROWS_AS(parse_site_report("SITE_ID,DATA_SIZE,ROUND,ACC_MEAN,ACC_STD\nX,-3,0,0.5,0\n"), ValidationError);
}

TEST_CASE("configuration errors") {
  HierConfig h;
  h.max_rounds = 0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h.max_rounds = 1;
  h.epsilon = -0.5;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
}

}
