#include <doctest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "asdmeta/csv.hpp"
#include "asdmeta/rng.hpp"
#include "asdmeta/synth.hpp"
#include "asdmeta/tabular.hpp"
#include "util.hpp"

using namespace asdmeta;

namespace {

const char* kFourRows =
    "SUB_ID,SITE_ID,DX_GROUP,f_1,f_2,f_3\n"
    "s1,A,ASD,1,2,3\n"
    "s2,B,NT,4,5,6\n"
    "s3,A,ASD,7,8,9\n"
    "s4,B,NT,10,11,12\n";

FeatureTable random_table(Rng& rng, std::size_t n, std::size_t d) {
  FeatureTable t;
  t.features = Matrix(n, d);
  for (std::size_t j = 0; j < d; ++j) t.feature_names.push_back(fmt::format("col{}", j));
  for (std::size_t i = 0; i < n; ++i) {
    t.subject_ids.push_back(fmt::format("sub{}", i));
    t.site_ids.push_back(fmt::format("site{}", rng.below(3)));
    t.labels.push_back(static_cast<Label>(rng.below(2)));
    for (std::size_t j = 0; j < d; ++j) {
      double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(40)) - 20.0);
      if (rng.below(10) == 0) v = std::nextafter(1.0, 2.0);
      if (rng.below(10) == 0) v = std::numeric_limits<double>::denorm_min();
      t.features(i, j) = v;
    }
  }
  return t;
}

Mask random_mask(Rng& rng, std::size_t d) {
  Mask m(d);
  for (std::size_t j = 0; j < d; ++j) m.set(j, rng.below(2) == 1);
  if (m.none()) m.set(rng.below(d));
  return m;
}

template <typename Fn>
ValidationError expect_validation_error(Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e;
  }
  FAIL("expected ValidationError");
  return ValidationError("");
}

}  // namespace

TEST_SUITE("tabular") {

TEST_CASE("feature table schema") {
  auto t = parse_feature_table(kFourRows);
  CHECK(t.rows() == 4);
  CHECK(t.cols() == 3);
  CHECK(t.labels == std::vector<Label>{kASD, kNT, kASD, kNT});
  CHECK(t.features(3, 2) == 12.0);
  CHECK(t.feature_names == std::vector<std::string>{"f_1", "f_2", "f_3"});
}

TEST_CASE("non-numeric cell is located") {
  std::string text = kFourRows;
  text.replace(text.find("8"), 1, "abc");
  auto e = expect_validation_error([&] { parse_feature_table(text); });
  CHECK(e.line() == 4);
  CHECK(e.column() == "f_2");
}

TEST_CASE("schema violations") {
  expect_validation_error([] { parse_feature_table("SUB_ID,DX_GROUP,f\ns1,ASD,1\n"); });
  auto e = expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\ns1,A,AUT,1\n"); });
  CHECK(e.column() == "DX_GROUP");
  expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\n"); });
  expect_validation_error([] { parse_feature_table(""); });
  expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP\ns1,A,ASD\n"); });
  e = expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\ns1,A,ASD,1\ns1,A,NT,2\n"); });
  CHECK(e.line() == 3);
  expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\ns1,A,ASD,inf\n"); });
  expect_validation_error([] { parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\ns1,A,ASD,NA\n"); });
}

TEST_CASE("labels are case-insensitive") {
  auto t = parse_feature_table("SUB_ID,SITE_ID,DX_GROUP,f\ns1,A,asd,1\ns2,A,nt,2\n");
  CHECK(t.labels == std::vector<Label>{kASD, kNT});
}

TEST_CASE("save then load reproduces random tables bit-exactly") {
  testutil::TempDir dir;
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    auto t = random_table(rng, 1 + rng.below(12), 1 + rng.below(6));
    save_feature_table(t, dir / "t.csv");
    auto back = load_feature_table(dir / "t.csv");
    REQUIRE(back.rows() == t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j)
        CHECK(std::bit_cast<std::uint64_t>(back.features(i, j)) == std::bit_cast<std::uint64_t>(t.features(i, j)));
    CHECK(back == t);
  }
}

TEST_CASE("fuzzed feature files are either accepted or rejected with a location") {
  Rng rng(17);
  const std::string base = kFourRows;
  const std::string junk = "x,\"\n9.-eNAsd ";
  for (int trial = 0; trial < 500; ++trial) {
    std::string text = base;
    auto edits = 1 + rng.below(3);
    for (std::size_t e = 0; e < edits; ++e) {
      auto pos = rng.below(text.size());
      switch (rng.below(3)) {
        case 0: text[pos] = junk[rng.below(junk.size())]; break;
        case 1: text.erase(pos, 1); break;
        default: text.insert(pos, 1, junk[rng.below(junk.size())]);
      }
    }
    try {
      auto t = parse_feature_table(text);
      t.validate();
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).size() > 0);
    }
  }
}

TEST_CASE("partition by site") {
  auto t = parse_feature_table(
      "SUB_ID,SITE_ID,DX_GROUP,f\n"
      "s0,A,ASD,0\ns1,B,NT,1\ns2,A,NT,2\n");
  auto parts = partition_by_site(t);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].site_id == "A");
  CHECK(parts[0].table.subject_ids == std::vector<std::string>{"s0", "s2"});
  CHECK(parts[1].table.subject_ids == std::vector<std::string>{"s1"});

  auto one = parse_feature_table(kFourRows);
  for (auto& s : one.site_ids) s = "X";
  auto single = partition_by_site(one);
  REQUIRE(single.size() == 1);
  CHECK(single[0].table == one);

  SizeQualityConfig sq;
  sq.seed = 3;
  auto study = generate_size_quality_study(sq);
  auto many = partition_by_site(study.dataset.table);
  CHECK(many.size() == 20);
  std::size_t total = 0;
  for (auto& p : many) total += p.table.rows();
  CHECK(total == study.dataset.table.rows());
}

TEST_CASE("apply_mask selects columns in order") {
  FeatureTable t = parse_feature_table(
      "SUB_ID,SITE_ID,DX_GROUP,a,b,c,d\ns1,A,ASD,1,2,3,4\ns2,A,NT,5,6,7,8\n");
  auto m = apply_mask(t, Mask::parse("1001"));
  CHECK(m.feature_names == std::vector<std::string>{"a", "d"});
  CHECK(m.features(1, 1) == 8.0);
  CHECK(m.subject_ids == t.subject_ids);
  CHECK(apply_mask(t, Mask::all(4)) == t);
  CHECK_THROWS_AS(apply_mask(t, Mask(4)), std::invalid_argument);
  CHECK_THROWS_AS(apply_mask(t, Mask::all(3)), std::invalid_argument);
}

TEST_CASE("masking composes through restrict and lift") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto t = random_table(rng, 3, 2 + rng.below(9));
    Mask m1 = random_mask(rng, t.cols());
    Mask m2 = random_mask(rng, t.cols());
    Mask both = m1 & m2;
    if (both.none()) continue;
    CHECK(apply_mask(apply_mask(t, m1), both.restrict_to(m1)) == apply_mask(t, both));
    Mask sub = random_mask(rng, m1.popcount());
    Mask lifted = Mask::lift(sub, m1);
    CHECK(lifted.subset_of(m1));
    CHECK(lifted.restrict_to(m1) == sub);
    CHECK(apply_mask(apply_mask(t, m1), sub) == apply_mask(t, lifted));
  }
}

TEST_CASE("mask text form") {
  auto m = Mask::parse("0110");
  CHECK(m.popcount() == 2);
  CHECK(m.indices() == std::vector<std::size_t>{1, 2});
  CHECK(m.to_string() == "0110");
  CHECK_THROWS_AS(Mask::parse("01a"), std::invalid_argument);
}

TEST_CASE("phenotype records") {
  auto recs = parse_phenotypes(
      "SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN\n"
      "a,10.5,F,1\nb,20,male,2\nc,9,2,1\nd,11,1,2\n");
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].sex == Sex::kFemale);
  CHECK(recs[1].sex == Sex::kMale);
  CHECK(recs[2].sex == Sex::kFemale);
  CHECK(recs[3].sex == Sex::kMale);
  CHECK(recs[1].eye_status == EyeStatus::kClosed);
  CHECK(parse_phenotypes(format_phenotypes(recs)) == recs);

  auto e = expect_validation_error([] { parse_phenotypes("SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN\na,10,F,3\n"); });
  CHECK(e.column() == "EYE_STATUS_AT_SCAN");
  expect_validation_error([] { parse_phenotypes("SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN\na,0,F,1\n"); });
  expect_validation_error([] { parse_phenotypes("SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN\na,5,X,1\n"); });
}

TEST_CASE("scan parameter records") {
  auto recs = parse_scan_params("SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG\nSBL,Philips Intera 3T,9.00e-3,3.50e-3,NA,7\n");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].vendor == "Philips Intera 3T");
  CHECK(*recs[0].tr_sec == 9.00e-3);
  CHECK_FALSE(recs[0].ti_sec);
  CHECK(*recs[0].fa_deg == 7.0);
  CHECK(parse_scan_params(format_scan_params(recs)) == recs);
  expect_validation_error([] { parse_scan_params("SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG\nX,V,-1,NA,NA,NA\n"); });
  expect_validation_error([] { parse_scan_params("SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG\nX,V,1,1,1,1\nX,V,1,1,1,1\n"); });
}

TEST_CASE("ABIDE scan parameter file") {
  auto recs = load_scan_params(testutil::data_dir() / "abide_scan_params.csv");
  CHECK(recs.size() == 20);
  int missing_tr_or_ti = 0;
  for (const auto& r : recs) {
    if (!r.tr_sec || !r.ti_sec) ++missing_tr_or_ti;
    CHECK(r.te_sec);
    CHECK(r.fa_deg);
  }
  // SBL and STANFORD lack TI; UM_1 and UM_2 lack TR and TI.
  CHECK(missing_tr_or_ti == 4);
}

TEST_CASE("atomic write leaves no temporary behind") {
  testutil::TempDir dir;
  write_text_file_atomic(dir / "f.txt", "one");
  write_text_file_atomic(dir / "f.txt", "two");
  CHECK(read_text_file(dir / "f.txt") == "two");
  int files = 0;
  for ([[maybe_unused]] auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
  CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), ValidationError);
}

}
