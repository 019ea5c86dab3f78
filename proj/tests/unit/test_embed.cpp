#include <doctest.h>

#include <cmath>

#include "asdmeta/embed.hpp"
#include "asdmeta/rng.hpp"
#include "util.hpp"

using namespace asdmeta;

namespace {

Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal();
  return x;
}

Matrix two_clusters(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) x(i, j) = rng.normal() + (i < n / 2 ? 0.0 : 10.0);
  return x;
}

double sqdist(const Matrix& m, std::size_t i, std::size_t j) {
  double s = 0;
  for (std::size_t c = 0; c < m.cols(); ++c) s += (m(i, c) - m(j, c)) * (m(i, c) - m(j, c));
  return s;
}

std::size_t nearest(const Matrix& m, std::size_t i) {
  std::size_t best = i == 0 ? 1 : 0;
  for (std::size_t j = 0; j < m.rows(); ++j)
    if (j != i && sqdist(m, i, j) < sqdist(m, i, best)) best = j;
  return best;
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("scan vectors from the ABIDE table") {
  auto recs = load_scan_params(testutil::data_dir() / "abide_scan_params.csv");
  auto enc = encode_scan_conditions(recs);
  REQUIRE(enc.vectors.size() == 20);
  CHECK(enc.vendors.size() == 7);
  CHECK(enc.warnings.empty());
  CHECK(enc.vectors[0] == ScanVector{"CALTECH", 0, 2.73e-3, 10.0});
  CHECK(enc.vectors[1].vendor_code == 1);
  CHECK(enc.vectors[3].vendor_code == enc.vectors[1].vendor_code);
  CHECK(enc.vectors[11].vendor_code == 0);
  CHECK(enc.vendors[0] == "Siemens Magnetom TrioTim");

  auto m = scan_matrix(enc.vectors);
  CHECK(m.rows() == 20);
  CHECK(m.cols() == 3);
  CHECK(m(9, 2) == 15.0);
}

TEST_CASE("sites without TE or FA are dropped") {
  std::vector<ScanParamsRecord> recs(3);
  recs[0] = {"A", "V1", 2.0, 3e-3, 0.9, 8.0};
  recs[1] = {"B", "V2", 2.0, std::nullopt, 0.9, 8.0};
  recs[2] = {"C", "V2", std::nullopt, 3e-3, std::nullopt, 9.0};
  auto enc = encode_scan_conditions(recs);
  REQUIRE(enc.vectors.size() == 2);
  CHECK(enc.vectors[1].site_id == "C");
  CHECK(enc.vectors[1].vendor_code == 1);
  CHECK(enc.warnings.size() == 1);
  recs.erase(recs.begin());
  recs.pop_back();
  CHECK_THROWS_AS(encode_scan_conditions(recs), std::invalid_argument);
  CHECK_THROWS_AS(encode_scan_conditions(std::vector<ScanParamsRecord>{}), std::invalid_argument);
}

TEST_CASE("standardize") {
  Matrix x(3, 2);
  x(0, 0) = 1;
  x(1, 0) = 2;
  x(2, 0) = 3;
  for (std::size_t i = 0; i < 3; ++i) x(i, 1) = 7;
  std::vector<std::string> warnings;
  auto z = standardize(x, &warnings);
  CHECK(z(0, 0) == doctest::Approx(-std::sqrt(1.5)));
  CHECK(z(1, 0) == doctest::Approx(0.0));
  CHECK(z(2, 0) == doctest::Approx(std::sqrt(1.5)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(z(i, 1) == 0.0);
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(standardize(Matrix(1, 2)), std::invalid_argument);
}

TEST_CASE("affinities") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t n = 15;
    auto x = random_points(n, 3, seed);
    const double perplexity = 4.0;
    auto aff = compute_affinities(x, perplexity);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(aff.p(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(aff.p(i, j) >= 0.0);
        CHECK(aff.p(i, j) == aff.p(j, i));
        total += aff.p(i, j);
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    // Rebuild each conditional from its precision and recheck entropy and
    // the symmetrized joint.
    Matrix cond(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) z += std::exp(-aff.betas[i] * sqdist(x, i, j));
      double h = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        cond(i, j) = std::exp(-aff.betas[i] * sqdist(x, i, j)) / z;
        if (cond(i, j) > 0) h -= cond(i, j) * std::log(cond(i, j));
      }
      CHECK(std::abs(h - std::log(perplexity)) < 1e-5);
      CHECK(std::abs(aff.entropies[i] - std::log(perplexity)) < 1e-5);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(aff.p(i, j) == doctest::Approx((cond(i, j) + cond(j, i)) / (2.0 * n)).epsilon(1e-9));
  }
}

TEST_CASE("affinities are invariant to rigid motions") {
  auto x = random_points(12, 2, 3);
  Matrix moved(12, 2);
  const double a = 0.7;
  for (std::size_t i = 0; i < 12; ++i) {
    moved(i, 0) = std::cos(a) * x(i, 0) - std::sin(a) * x(i, 1) + 5.0;
    moved(i, 1) = std::sin(a) * x(i, 0) + std::cos(a) * x(i, 1) - 2.0;
  }
  auto p = compute_affinities(x, 3.0).p;
  auto q = compute_affinities(moved, 3.0).p;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(p(i, j) - q(i, j)) < 1e-6);
}

TEST_CASE("gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t n = 8;
    auto p = compute_affinities(random_points(n, 3, seed), 2.0).p;
    auto y = random_points(n, 2, seed + 100);
    auto g = kl_gradient(p, y);
    double num = 0, den = 0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        Matrix plus = y, minus = y;
        plus(i, c) += h;
        minus(i, c) -= h;
        double fd = (kl_divergence(p, plus) - kl_divergence(p, minus)) / (2 * h);
        num += (g(i, c) - fd) * (g(i, c) - fd);
        den += fd * fd;
      }
    CHECK(std::sqrt(num / den) < 1e-4);
  }
}

TEST_CASE("low-dimensional affinities") {
  auto y = random_points(6, 2, 1);
  auto q = low_dim_affinities(y);
  double total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(q(i, i) == 0.0);
    for (std::size_t j = 0; j < 6; ++j) total += q(i, j);
  }
  CHECK(total == doctest::Approx(1.0));
  auto p = compute_affinities(random_points(6, 3, 2), 1.5).p;
  CHECK(kl_divergence(p, y) >= 0.0);
}

TEST_CASE("two separated clusters stay separated") {
  EmbeddingConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = two_clusters(20, seed);
    cfg.seed = seed;
    auto res = tsne(x, cfg);
    for (std::size_t i = 0; i < 20; ++i) CHECK((nearest(res.embedding, i) < 10) == (i < 10));
    REQUIRE(res.kl_history.size() == 1000);
    CHECK(res.kl_history.back() < res.kl_history[99]);
    for (double v : res.kl_history) CHECK(std::isfinite(v));
  }
}

TEST_CASE("embedding is reproducible and centered") {
  EmbeddingConfig cfg;
  cfg.iterations = 200;
  cfg.perplexity = 3;
  cfg.seed = 42;
  auto x = random_points(14, 3, 8);
  auto a = tsne(x, cfg);
  auto b = tsne(x, cfg);
  CHECK(a.embedding == b.embedding);
  CHECK(a.kl_history == b.kl_history);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 14; ++i) {
    mx += a.embedding(i, 0);
    my += a.embedding(i, 1);
  }
  CHECK(std::abs(mx) < 1e-9);
  CHECK(std::abs(my) < 1e-9);
  cfg.seed = 43;
  CHECK_FALSE(tsne(x, cfg).embedding == a.embedding);
}

TEST_CASE("duplicate points") {
  Matrix x(8, 3, 1.0);
  for (std::size_t j = 0; j < 3; ++j) x(7, j) = 2.0;
  EmbeddingConfig cfg;
  cfg.perplexity = 2;
  cfg.iterations = 100;
  auto res = tsne(x, cfg);
  for (double v : res.embedding.data()) CHECK(std::isfinite(v));
  auto aff = compute_affinities(x, 2);
  for (double v : aff.p.data()) CHECK(std::isfinite(v));
}

TEST_CASE("embedding configuration errors") {
  EmbeddingConfig cfg;
  CHECK_THROWS_AS(cfg.validate(3), std::invalid_argument);
  cfg.perplexity = 5;
  CHECK_THROWS_AS(cfg.validate(16), std::invalid_argument);
  CHECK_NOTHROW(cfg.validate(17));
  cfg.perplexity = 0;
  CHECK_THROWS_AS(cfg.validate(17), std::invalid_argument);
  cfg.perplexity = 5;
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(17), std::invalid_argument);
  cfg.iterations = 10;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(17), std::invalid_argument);
  CHECK_THROWS_AS(tsne(random_points(10, 2, 1), EmbeddingConfig{}), std::invalid_argument);
}

TEST_CASE("embedding output files") {
  std::vector<EmbeddingRow> rows = {{"A", 0.5, -1.25, 0.75}, {"B", 2, 3, std::nullopt}};
  CHECK(format_embedding(rows) == "SITE_ID,X,Y,ACCURACY\nA,0.5,-1.25,0.75\nB,2,3,NA\n");
  std::vector<double> kl = {1.5, 0.25};
  CHECK(format_kl_history(kl) == "ITERATION,KL\n1,1.5\n2,0.25\n");
}

}
