#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "siteops/random.hpp"
#include "siteops/scale_model.hpp"

using namespace siteops;
using namespace siteops::scale;

namespace {

// Solves the normal equations of a least-squares polynomial fit by Gaussian
// elimination with partial pivoting.
std::vector<double> normal_equations_fit(const std::vector<double>& z, const std::vector<double>& y, int degree) {
  const int m = degree + 1;
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::vector<double> pw(2 * m, 1.0);
    for (int k = 1; k < 2 * m; ++k) {
      pw[k] = pw[k - 1] * z[i];
    }
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        a[r][c] += pw[r + c];
      }
      a[r][m] += pw[r] * y[i];
    }
  }
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int r = col + 1; r < m; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int c = col; c <= m; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> x(m);
  for (int r = 0; r < m; ++r) x[r] = a[r][m] / a[r][r];
  return x;
}

double pinhole(double h) { return 1000.0 / h; }

std::vector<ScaleSample> noiseless_pinhole_with_outliers(std::uint64_t seed, int n, double outlier_fraction,
                                                         std::vector<bool>* planted = nullptr) {
  Rng rng(seed);
  std::vector<ScaleSample> s;
  for (int i = 0; i < n; ++i) {
    const double h = rng.uniform(3.0, 20.0);
    const bool bad = rng.bernoulli(outlier_fraction);
    s.push_back({h, bad ? rng.uniform(20.0, 400.0) : pinhole(h)});
    if (planted) planted->push_back(bad);
  }
  return s;
}

}  // namespace

TEST_CASE("noiseless line is recovered exactly") {
  std::vector<ScaleSample> s;
  for (int i = 0; i < 10; ++i) {
    const double h = 2.0 + i;
    s.push_back({h, 200.0 - 10.0 * h});
  }
  const ScaleModel m = fit_ransac(s, 1, FitConfig{});
  const auto raw = m.raw_coefficients();
  REQUIRE(raw.size() == 2);
  CHECK(std::abs(raw[0] - 200.0) < 1e-6);
  CHECK(std::abs(raw[1] + 10.0) < 1e-6);
  CHECK(m.inlier_count == 10);
  CHECK(m.coefficients.size() == 2);
}

TEST_CASE("cubic on pinhole data with gross outliers") {
  const auto s = noiseless_pinhole_with_outliers(3, 200, 0.2);
  FitConfig cfg;
  cfg.rng_seed = 9;
  const ScaleModel m = fit_ransac(s, 3, cfg);
  CHECK(std::abs(predict_ppm(m, 8.0) - pinhole(8.0)) / pinhole(8.0) < 0.02);
  CHECK(std::abs(predict_ppm(m, 10.0) - 100.0) <= 2.0);
}

TEST_CASE("too few samples") {
  std::vector<ScaleSample> s{{3, 300}, {5, 200}, {8, 125}};
  CHECK_THROWS_AS(fit_ransac(s, 3, FitConfig{}), InsufficientSamples);
  std::vector<ScaleSample> flat{{5, 200}, {5, 201}, {5, 199}};
  CHECK_THROWS_AS(fit_ransac(flat, 1, FitConfig{}), InsufficientSamples);
}

TEST_CASE("consensus below the floor is a degenerate fit") {
  Rng rng(1);
  std::vector<ScaleSample> s;
  for (int i = 0; i < 50; ++i) s.push_back({rng.uniform(3, 20), rng.uniform(20, 400)});
  CHECK_THROWS_AS(fit_ransac(s, 1, FitConfig{}), DegenerateFit);
}

TEST_CASE("prediction and guards") {
  const ScaleModel line = ScaleModel::from_raw({200.0, -10.0}, 2.0, 11.0);
  CHECK(predict_ppm(line, 5.0) == doctest::Approx(150.0));
  CHECK_THROWS_AS(predict_ppm(line, 50.0), ExtrapolationError);
  CHECK_THROWS_AS(predict_ppm(line, 0.5), ExtrapolationError);
  const ScaleModel steep = ScaleModel::from_raw({100.0, -10.0}, 2.0, 11.0);
  CHECK_THROWS_AS(predict_ppm(steep, 12.0), ModelInvalidAtAltitude);
}

TEST_CASE("held-out RMSE") {
  const ScaleModel line = ScaleModel::from_raw({200.0, -10.0}, 2.0, 11.0);
  std::vector<HeldOutPair> exact{{150.0, 1.0, 5.0}, {300.0, 2.0, 5.0}, {100.0, 1.0, 10.0}};
  CHECK(evaluate_rmse(line, exact) == doctest::Approx(0.0));
  std::vector<HeldOutPair> off{{165.0, 1.0, 5.0}};  // predicts 1.1 m
  CHECK(evaluate_rmse(line, off) == doctest::Approx(10.0));
  CHECK_THROWS_AS(evaluate_rmse(line, std::vector<HeldOutPair>{}), ValidationError);
  std::vector<HeldOutPair> far{{150.0, 1.0, 40.0}};
  CHECK_THROWS_AS(evaluate_rmse(line, far), ExtrapolationError);
}

TEST_CASE("determinism") {
  const auto data = generate_pinhole(PinholeConfig{}, 21);
  const auto cfg = synthetic_study_config(PinholeConfig{}, 77);
  const ScaleModel a = fit_ransac(data.samples, 4, cfg);
  const ScaleModel b = fit_ransac(data.samples, 4, cfg);
  CHECK(a.coefficients == b.coefficients);
  CHECK(a.inliers == b.inliers);
}

TEST_CASE("refit minimizes squared error over the reported inliers") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = generate_pinhole(PinholeConfig{}, seed);
    for (int degree = 1; degree <= 4; ++degree) {
      const ScaleModel m = fit_ransac(data.samples, degree, synthetic_study_config(PinholeConfig{}, seed));
      REQUIRE(m.inlier_count == static_cast<int>(m.inliers.size()));
      REQUIRE(m.inlier_count >= degree + 1);
      std::vector<double> z, y;
      for (auto i : m.inliers) {
        z.push_back((data.samples[i].altitude - m.altitude_mean) / m.altitude_scale);
        y.push_back(data.samples[i].pixels_per_meter);
      }
      const auto oracle = normal_equations_fit(z, y, degree);
      for (int k = 0; k <= degree; ++k) {
        CHECK(m.coefficients[k] == doctest::Approx(oracle[k]).epsilon(1e-7).scale(1.0));
      }
    }
  }
}

TEST_CASE("planted outliers are excluded from the consensus") {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    std::vector<bool> planted;
    Rng rng(seed);
    std::vector<ScaleSample> s;
    for (int i = 0; i < 200; ++i) {
      const double h = rng.uniform(3.0, 20.0);
      const bool bad = rng.bernoulli(0.3);
      s.push_back({h, bad ? rng.uniform(20.0, 400.0) : pinhole(h) + rng.normal(0.0, 1.0)});
      planted.push_back(bad);
    }
    FitConfig cfg;
    cfg.inlier_threshold = 3.0;
    cfg.min_inlier_fraction = 0.4;
    cfg.rng_seed = seed;
    const ScaleModel m = fit_ransac(s, 3, cfg);
    int planted_total = 0;
    int planted_kept = 0;
    for (bool b : planted) planted_total += b;
    for (auto i : m.inliers) planted_kept += planted[i];
    CHECK(planted_total - planted_kept >= 0.9 * planted_total);
  }
}

TEST_CASE("degree study layout") {
  const auto data = generate_pinhole(PinholeConfig{}, 2);
  const auto cfg = synthetic_study_config(PinholeConfig{}, 2);
  const std::vector<int> degrees{1, 2, 3, 4};
  const StudyTable t = degree_study(data.samples, data.heldout, degrees, cfg);
  CHECK(t.rows.size() == 4);
  CHECK(t.altitudes == std::vector<double>{5, 8, 10, 15});
  CHECK(t.csv_header() == "degree,rmse_5m_cm,rmse_8m_cm,rmse_10m_cm,rmse_15m_cm");
  std::ostringstream os;
  t.write_csv(os);
  CHECK(os.str().rfind("degree,rmse_5m_cm,rmse_8m_cm,rmse_10m_cm,rmse_15m_cm\n1,", 0) == 0);

  std::vector<HeldOutPair> single;
  for (const auto& p : data.heldout) {
    if (p.altitude == 8.0) single.push_back(p);
  }
  const StudyTable one = degree_study(data.samples, single, degrees, cfg);
  CHECK(one.altitudes.size() == 1);
  CHECK(one.rows[2].rmse_cm.size() == 1);

  CHECK_THROWS_AS(degree_study(data.samples, data.heldout, std::vector<int>{}, cfg), ValidationError);
}

TEST_CASE("cubic beats linear on averaged pinhole study") {
  PinholeConfig pc;
  std::vector<double> linear(4, 0.0), cubic(4, 0.0);
  const std::vector<int> degrees{1, 3};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = generate_pinhole(pc, seed);
    const auto t = degree_study(data.samples, data.heldout, degrees, synthetic_study_config(pc, seed));
    for (int j = 0; j < 4; ++j) {
      linear[j] += t.rows[0].rmse_cm[j];
      cubic[j] += t.rows[1].rmse_cm[j];
    }
  }
  for (int j = 0; j < 4; ++j) CHECK(cubic[j] <= linear[j]);
}

TEST_CASE("CSV parsing reports line numbers") {
  std::istringstream ok("altitude_m,pixels_per_meter\n5,200\n8,125\n");
  CHECK(read_samples_csv(ok).size() == 2);
  std::istringstream bad("altitude_m,pixels_per_meter\n5,200\n8,abc\n");
  try {
    read_samples_csv(bad);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::istringstream empty("");
  CHECK_THROWS_AS(read_samples_csv(empty), ValidationError);
  std::istringstream header_only("altitude_m,pixels_per_meter\n");
  CHECK_THROWS_AS(read_samples_csv(header_only), ValidationError);

  std::ostringstream out;
  const std::vector<HeldOutPair> h{{125.0, 1.0, 8.0}};
  write_heldout_csv(out, h);
  std::istringstream in(out.str());
  const auto back = read_heldout_csv(in);
  CHECK(back[0].pixel_span == 125.0);
}
