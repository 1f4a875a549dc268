#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prime/core.hpp"
#include "prime/rng.hpp"
#include "prime/simgen.hpp"

using namespace prime;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "prime_core_tests";
  fs::create_directories(dir);
  return dir / name;
}

MaskedDataset small_dataset() {
  MaskedDataset ds;
  ds.y = Vector{{1.0, 2.0, 3.0}};
  ds.x = Matrix{{0.5, 1.5}, {2.5, 3.5}, {4.5, 5.5}};
  ds.mask = Mask::Constant(3, 2, true);
  ds.covariate_names = {"x1", "x2"};
  return ds;
}

}  // namespace

TEST_CASE("load_csv marks a single NA cell") {
  const auto path = temp_file("one_na.csv");
  std::ofstream(path) << "y,x1,x2\n1,0.5,1.5\n2,NA,3.5\n3,4.5,5.5\n";
  const MaskedDataset ds = load_csv(path.string());
  REQUIRE(ds.n() == 3);
  REQUIRE(ds.p() == 2);
  int missing = 0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) missing += ds.mask(i, j) ? 0 : 1;
  }
  REQUIRE(missing == 1);
  REQUIRE_FALSE(ds.mask(1, 0));
  REQUIRE(std::isnan(ds.x(1, 0)));
  REQUIRE(ds.y[1] == 2.0);
}

TEST_CASE("load_csv reports garbage cells with row and column") {
  const auto path = temp_file("garbage.csv");
  std::ofstream(path) << "y,x1\n1,0.5\n2,zzz\n";
  try {
    load_csv(path.string());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    REQUIRE(e.kind == ErrorKind::Io);
    REQUIRE(e.code == "parse_error");
    REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
    REQUIRE(std::string(e.what()).find("x1") != std::string::npos);
  }
}

TEST_CASE("load_csv rejects rows with every covariate missing") {
  const auto path = temp_file("empty_row.csv");
  std::ofstream(path) << "y,x1,x2\n1,0.5,1.5\n2,NA,NA\n";
  try {
    load_csv(path.string());
    FAIL("expected a rejection");
  } catch (const Error& e) {
    REQUIRE(e.code == "empty_availability");
    REQUIRE(std::string(e.what()).find("row 3") != std::string::npos);
  }
}

TEST_CASE("load_csv rejects missing responses") {
  const auto path = temp_file("missing_y.csv");
  std::ofstream(path) << "y,x1\nNA,0.5\n";
  REQUIRE_THROWS_MATCHES(load_csv(path.string()), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code == "missing_response";
                         }));
}

TEST_CASE("load_csv honors a custom NA token and scientific notation") {
  const auto path = temp_file("custom_na.csv");
  std::ofstream(path) << "y,x1,x2\n1.5e-3,?,4\n2,-1.25e2,5\n";
  const MaskedDataset ds = load_csv(path.string(), "?");
  REQUIRE_FALSE(ds.mask(0, 0));
  REQUIRE(ds.mask(0, 1));
  REQUIRE(ds.y[0] == 1.5e-3);
  REQUIRE(ds.x(1, 0) == -1.25e2);
}

TEST_CASE("csv round trip preserves mask exactly and values bit-for-bit") {
  ScenarioConfig cfg = scenario1();
  cfg.n = 60;
  cfg.seed = 99;
  auto [ds, truth] = gen_scenario(cfg, 0);

  const auto path = temp_file("roundtrip.csv");
  write_csv(ds, path.string());
  const MaskedDataset back = load_csv(path.string());

  REQUIRE(back.n() == ds.n());
  REQUIRE(back.p() == ds.p());
  for (int i = 0; i < ds.n(); ++i) {
    REQUIRE(back.y[i] == ds.y[i]);
    for (int j = 0; j < ds.p(); ++j) {
      REQUIRE(back.mask(i, j) == ds.mask(i, j));
      if (ds.mask(i, j)) REQUIRE(back.x(i, j) == ds.x(i, j));
    }
  }
  REQUIRE(back.covariate_names == ds.covariate_names);
}

TEST_CASE("pattern_of returns the observed indices") {
  MaskedDataset ds = small_dataset();
  ds.x.conservativeResize(3, 4);
  ds.mask.conservativeResize(3, 4);
  ds.covariate_names = {"x1", "x2", "x3", "x4"};
  ds.mask.setConstant(true);

  SECTION("fully observed row") {
    REQUIRE(pattern_of(ds, 0).observed() == std::vector<int>{0, 1, 2, 3});
  }
  SECTION("one missing column") {
    ds.mask(1, 2) = false;
    REQUIRE(pattern_of(ds, 1).observed() == std::vector<int>{0, 1, 3});
  }
  SECTION("only a tail block observed") {
    for (int j = 0; j < 3; ++j) ds.mask(2, j) = false;
    REQUIRE(pattern_of(ds, 2).observed() == std::vector<int>{3});
  }
}

TEST_CASE("pattern_of matches the canonical twelve-column patterns") {
  // A row missing only column 2 (third covariate) out of twelve.
  MaskedDataset ds;
  ds.y = Vector::Zero(2);
  ds.x = Matrix::Zero(2, 12);
  ds.mask = Mask::Constant(2, 12, true);
  ds.covariate_names = default_covariate_names(12);
  ds.mask(0, 2) = false;
  // A row observing only the last three columns.
  for (int j = 0; j < 9; ++j) ds.mask(1, j) = false;

  REQUIRE(pattern_of(ds, 0).observed() == std::vector<int>{0, 1, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  REQUIRE(pattern_of(ds, 1).observed() == std::vector<int>{9, 10, 11});
}

TEST_CASE("bandwidth rules") {
  REQUIRE(KernelSpec::power_rule().bandwidth(1000) ==
          Catch::Approx(std::pow(1000.0, -1.0 / 3.0)).margin(1e-15));
  REQUIRE(KernelSpec::power_rule(-0.5).bandwidth(64) == Catch::Approx(0.125).margin(1e-15));
  REQUIRE(KernelSpec::fixed(0.7).bandwidth(50) == 0.7);
  REQUIRE_THROWS_AS(KernelSpec::fixed(-1.0).bandwidth(50), Error);
}

TEST_CASE("availability pattern set operations") {
  const AvailabilityPattern a({0, 1, 3});
  const AvailabilityPattern b({0, 1, 2, 3, 5});
  REQUIRE(b.superset_of(a));
  REQUIRE_FALSE(a.superset_of(b));
  REQUIRE(a.superset_of(a));
  REQUIRE(a.with(2).observed() == std::vector<int>{0, 1, 2, 3});
  REQUIRE(a.intersect(b) == a);
  REQUIRE(AvailabilityPattern({3, 1, 0, 1}).observed() == std::vector<int>{0, 1, 3});
  REQUIRE(a.hash() != b.hash());
}

TEST_CASE("standardize centers and scales observed cells") {
  MaskedDataset ds;
  ds.y = Vector{{1.0, 2.0, 3.0}};
  ds.x = Matrix{{1.0, 9.0}, {2.0, 9.5}, {3.0, 10.0}};
  ds.mask = Mask::Constant(3, 2, true);
  ds.covariate_names = {"x1", "x2"};

  auto [scaled, rec] = standardize(ds);
  REQUIRE(rec.x_mean[0] == Catch::Approx(2.0));
  REQUIRE(rec.x_sd[0] == Catch::Approx(1.0));
  REQUIRE(scaled.x(0, 0) == Catch::Approx(-1.0));
  REQUIRE(scaled.x(1, 0) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(scaled.x(2, 0) == Catch::Approx(1.0));

  SECTION("idempotent on its own output") {
    auto [twice, rec2] = standardize(scaled);
    REQUIRE(std::abs(rec2.y_mean) < 1e-12);
    REQUIRE(std::abs(rec2.y_sd - 1.0) < 1e-12);
    for (int j = 0; j < 2; ++j) {
      REQUIRE(std::abs(rec2.x_mean[j]) < 1e-12);
      REQUIRE(std::abs(rec2.x_sd[j] - 1.0) < 1e-12);
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        REQUIRE(twice.x(i, j) == Catch::Approx(scaled.x(i, j)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("standardize reports constant columns by name") {
  MaskedDataset ds = small_dataset();
  ds.x.col(1).setConstant(7.0);
  try {
    standardize(ds);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code == "constant_column");
    REQUIRE(std::string(e.what()).find("x2") != std::string::npos);
  }
}

TEST_CASE("standardize skips masked cells") {
  MaskedDataset ds = small_dataset();
  ds.mask(0, 0) = false;
  ds.x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto [scaled, rec] = standardize(ds);
  // column 0 statistics come from rows 1 and 2 only
  REQUIRE(rec.x_mean[0] == Catch::Approx(3.5));
  REQUIRE(scaled.x(1, 0) == Catch::Approx(-std::sqrt(0.5)));
  REQUIRE(std::isnan(scaled.x(0, 0)));
}

TEST_CASE("inverse transform reproduces an intercept-augmented raw fit") {
  // Oracle: least squares with an explicit intercept column on the raw data,
  // solved by QR.
  Rng rng(31);
  const int n = 40, p = 3;
  Matrix x(n, p);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = 5.0 + 2.0 * rng.normal();
    y[i] = 3.0 + x(i, 0) - 0.5 * x(i, 1) + 0.25 * x(i, 2) + 0.1 * rng.normal();
  }
  Matrix x_aug(n, p + 1);
  x_aug.col(0).setOnes();
  x_aug.rightCols(p) = x;
  const Vector oracle = x_aug.colPivHouseholderQr().solve(y);

  MaskedDataset ds;
  ds.y = y;
  ds.x = x;
  ds.mask = Mask::Constant(n, p, true);
  ds.covariate_names = default_covariate_names(p);
  auto [scaled, rec] = standardize(ds);

  // No-intercept normal equations on the standardized data.
  const Vector beta_std =
      (scaled.x.transpose() * scaled.x).ldlt().solve(scaled.x.transpose() * scaled.y);
  auto [slopes, intercept] = rec.unscale_coefficients(beta_std);

  REQUIRE(intercept == Catch::Approx(oracle[0]).margin(1e-8));
  for (int j = 0; j < p; ++j) {
    REQUIRE(slopes[j] == Catch::Approx(oracle[j + 1]).margin(1e-8));
  }
}

TEST_CASE("pattern_of commutes with row permutation") {
  ScenarioConfig cfg = scenario1();
  cfg.n = 30;
  cfg.seed = 5;
  auto [ds, truth] = gen_scenario(cfg, 0);

  std::vector<int> perm(ds.n());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(8);
  rng.shuffle(perm);

  MaskedDataset permuted = ds;
  for (int i = 0; i < ds.n(); ++i) {
    permuted.y[i] = ds.y[perm[i]];
    permuted.x.row(i) = ds.x.row(perm[i]);
    for (int j = 0; j < ds.p(); ++j) permuted.mask(i, j) = ds.mask(perm[i], j);
  }
  for (int i = 0; i < ds.n(); ++i) {
    REQUIRE(pattern_of(permuted, i) == pattern_of(ds, perm[i]));
  }
}
