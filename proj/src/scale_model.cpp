#include "siteops/scale_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "siteops/random.hpp"

namespace siteops::scale {

namespace {

Eigen::MatrixXd vandermonde(std::span<const double> z, std::span<const std::size_t> rows, int degree) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), degree + 1);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double p = 1.0;
    for (int k = 0; k <= degree; ++k) {
      a(static_cast<Eigen::Index>(r), k) = p;
      p *= z[rows[r]];
    }
  }
  return a;
}

double horner(std::span<const double> c, double x) {
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) {
    v = v * x + *it;
  }
  return v;
}

std::size_t distinct_count(std::span<const double> z, std::span<const std::size_t> rows) {
  std::set<double> seen;
  for (auto r : rows) {
    seen.insert(z[r]);
  }
  return seen.size();
}

struct Refit {
  std::vector<double> coefficients;
  double rmse = std::numeric_limits<double>::infinity();
};

Refit least_squares(std::span<const double> z, std::span<const double> y, std::span<const std::size_t> rows,
                    int degree) {
  const Eigen::MatrixXd a = vandermonde(z, rows, degree);
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    b(static_cast<Eigen::Index>(r)) = y[rows[r]];
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  Refit out;
  out.coefficients.assign(x.data(), x.data() + x.size());
  out.rmse = std::sqrt((a * x - b).squaredNorm() / static_cast<double>(rows.size()));
  return out;
}

void validate_samples(std::span<const ScaleSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!std::isfinite(s.altitude) || s.altitude <= 0.0) {
      throw ValidationError("sample " + std::to_string(i) + " has nonpositive altitude", "altitude_m");
    }
    if (!std::isfinite(s.pixels_per_meter) || s.pixels_per_meter <= 0.0) {
      throw ValidationError("sample " + std::to_string(i) + " has nonpositive scale", "pixels_per_meter");
    }
  }
}

std::string format_altitude(double a) {
  std::ostringstream os;
  os << a;
  return os.str();
}

}  // namespace

ScaleModel ScaleModel::from_raw(std::vector<double> raw, double min_altitude, double max_altitude) {
  if (raw.size() < 2 || raw.size() > 5) {
    throw ValidationError("raw model needs 2..5 coefficients", "coefficients");
  }
  ScaleModel m;
  m.degree = static_cast<int>(raw.size()) - 1;
  m.coefficients = std::move(raw);
  m.altitude_mean = 0.0;
  m.altitude_scale = 1.0;
  m.min_altitude = min_altitude;
  m.max_altitude = max_altitude;
  m.inlier_count = m.degree + 1;
  return m;
}

std::vector<double> ScaleModel::raw_coefficients() const {
  // sum_k c_k ((h - m) / s)^k expanded binomially.
  std::vector<double> raw(coefficients.size(), 0.0);
  for (std::size_t k = 0; k < coefficients.size(); ++k) {
    const double scale = coefficients[k] / std::pow(altitude_scale, static_cast<double>(k));
    double binom = 1.0;
    for (std::size_t j = 0; j <= k; ++j) {
      raw[j] += scale * binom * std::pow(-altitude_mean, static_cast<double>(k - j));
      binom = binom * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
  }
  return raw;
}

double ScaleModel::evaluate(double altitude) const {
  return horner(coefficients, (altitude - altitude_mean) / altitude_scale);
}

ScaleModel fit_ransac(std::span<const ScaleSample> samples, int degree, const FitConfig& cfg) {
  if (degree < 1 || degree > 4) {
    throw ValidationError("degree must be in 1..4", "degree");
  }
  if (cfg.iterations < 1) {
    throw ValidationError("iterations must be >= 1", "iterations");
  }
  if (!(cfg.inlier_threshold > 0.0)) {
    throw ValidationError("inlier threshold must be positive", "inlier_threshold");
  }
  if (cfg.min_inlier_fraction < 0.0 || cfg.min_inlier_fraction > 1.0) {
    throw ValidationError("min inlier fraction must be in [0, 1]", "min_inlier_fraction");
  }
  const std::size_t minimal = static_cast<std::size_t>(degree) + 1;
  if (samples.size() < minimal) {
    throw InsufficientSamples("degree " + std::to_string(degree) + " needs at least " + std::to_string(minimal) +
                              " samples, got " + std::to_string(samples.size()));
  }
  validate_samples(samples);

  const std::size_t n = samples.size();
  double mean = 0.0;
  double lo = samples[0].altitude;
  double hi = samples[0].altitude;
  for (const auto& s : samples) {
    mean += s.altitude;
    lo = std::min(lo, s.altitude);
    hi = std::max(hi, s.altitude);
  }
  if (lo == hi) {
    throw InsufficientSamples("all sample altitudes are identical");
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& s : samples) {
    var += (s.altitude - mean) * (s.altitude - mean);
  }
  const double stddev = std::sqrt(var / static_cast<double>(n));

  std::vector<double> z(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = (samples[i].altitude - mean) / stddev;
    y[i] = samples[i].pixels_per_meter;
  }

  Rng rng(cfg.rng_seed);
  std::vector<std::size_t> pool(n);
  std::vector<std::size_t> pick(minimal);
  std::vector<std::size_t> best_inliers;
  double best_rmse = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> inliers;
  inliers.reserve(n);

  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      pool[i] = i;
    }
    for (std::size_t k = 0; k < minimal; ++k) {
      const std::size_t j = k + rng.index(n - k);
      std::swap(pool[k], pool[j]);
      pick[k] = pool[k];
    }
    if (distinct_count(z, pick) < minimal) {
      continue;
    }
    const Eigen::MatrixXd a = vandermonde(z, pick, degree);
    Eigen::VectorXd b(static_cast<Eigen::Index>(minimal));
    for (std::size_t k = 0; k < minimal; ++k) {
      b(static_cast<Eigen::Index>(k)) = y[pick[k]];
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    const std::span<const double> coeffs(c.data(), static_cast<std::size_t>(c.size()));

    inliers.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(horner(coeffs, z[i]) - y[i]) <= cfg.inlier_threshold) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() < best_inliers.size() || inliers.size() < minimal) {
      continue;
    }
    if (distinct_count(z, inliers) < minimal) {
      continue;
    }
    const double rmse = least_squares(z, y, inliers, degree).rmse;
    if (inliers.size() > best_inliers.size() || rmse < best_rmse) {
      best_inliers = inliers;
      best_rmse = rmse;
    }
  }

  const auto required =
      static_cast<std::size_t>(std::ceil(cfg.min_inlier_fraction * static_cast<double>(n) - 1e-12));
  if (best_inliers.size() < minimal || best_inliers.size() < required) {
    throw DegenerateFit("degenerate fit: best consensus " + std::to_string(best_inliers.size()) + " of " +
                        std::to_string(n) + " samples is below the required " + std::to_string(required));
  }

  ScaleModel model;
  model.degree = degree;
  model.coefficients = least_squares(z, y, best_inliers, degree).coefficients;
  model.altitude_mean = mean;
  model.altitude_scale = stddev;
  model.min_altitude = lo;
  model.max_altitude = hi;
  model.inlier_count = static_cast<int>(best_inliers.size());
  model.inlier_threshold = cfg.inlier_threshold;
  model.inliers = std::move(best_inliers);
  return model;
}

double predict_ppm(const ScaleModel& model, double altitude) {
  if (!std::isfinite(altitude) || altitude < model.guard_low() || altitude > model.guard_high()) {
    std::ostringstream os;
    os << "altitude " << altitude << " m is outside the model range [" << model.guard_low() << ", "
       << model.guard_high() << "] m";
    throw ExtrapolationError(os.str());
  }
  const double ppm = model.evaluate(altitude);
  if (!(ppm > 0.0)) {
    std::ostringstream os;
    os << "model invalid at altitude " << altitude << " m (predicted " << ppm << " px/m)";
    throw ModelInvalidAtAltitude(os.str());
  }
  return ppm;
}

double evaluate_rmse(const ScaleModel& model, std::span<const HeldOutPair> heldout) {
  if (heldout.empty()) {
    throw ValidationError("held-out set is empty", "heldout");
  }
  double sum = 0.0;
  for (const auto& pair : heldout) {
    const double estimate = pair.pixel_span / predict_ppm(model, pair.altitude);
    const double err = estimate - pair.true_meters;
    sum += err * err;
  }
  return 100.0 * std::sqrt(sum / static_cast<double>(heldout.size()));
}

std::string StudyTable::csv_header() const {
  std::string header = "degree";
  for (double a : altitudes) {
    header += ",rmse_" + format_altitude(a) + "m_cm";
  }
  return header;
}

void StudyTable::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  for (const auto& row : rows) {
    out << row.degree;
    for (double v : row.rmse_cm) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

StudyTable degree_study(std::span<const ScaleSample> samples, std::span<const HeldOutPair> heldout,
                        std::span<const int> degrees, const FitConfig& cfg) {
  if (degrees.empty()) {
    throw ValidationError("degree set is empty", "degrees");
  }
  if (heldout.empty()) {
    throw ValidationError("held-out set is empty", "heldout");
  }
  std::map<double, std::vector<HeldOutPair>> by_altitude;
  for (const auto& p : heldout) {
    by_altitude[p.altitude].push_back(p);
  }

  std::vector<int> sorted(degrees.begin(), degrees.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  StudyTable table;
  for (const auto& [alt, _] : by_altitude) {
    table.altitudes.push_back(alt);
  }
  for (int degree : sorted) {
    const ScaleModel model = fit_ransac(samples, degree, cfg);
    StudyRow row;
    row.degree = degree;
    for (const auto& [alt, pairs] : by_altitude) {
      row.rmse_cm.push_back(evaluate_rmse(model, pairs));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SyntheticData generate_pinhole(const PinholeConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticData data;
  data.samples.reserve(static_cast<std::size_t>(cfg.sample_count));
  for (int i = 0; i < cfg.sample_count; ++i) {
    const double h = rng.uniform(cfg.min_altitude, cfg.max_altitude);
    const bool outlier = rng.bernoulli(cfg.outlier_fraction);
    double ppm = cfg.focal_px / h + rng.normal(0.0, cfg.noise_sigma);
    if (outlier) {
      ppm = rng.uniform(cfg.outlier_min_ppm, cfg.outlier_max_ppm);
    }
    data.samples.push_back({h, std::max(ppm, 1e-3)});
    data.is_outlier.push_back(outlier);
  }
  for (double h : cfg.heldout_altitudes) {
    for (int i = 0; i < cfg.heldout_per_altitude; ++i) {
      const double meters = rng.uniform(cfg.heldout_min_meters, cfg.heldout_max_meters);
      data.heldout.push_back({meters * cfg.focal_px / h, meters, h});
    }
  }
  return data;
}

FitConfig synthetic_study_config(const PinholeConfig& cfg, std::uint64_t seed) {
  FitConfig fit;
  fit.iterations = 1000;
  fit.inlier_threshold = 3.0 * cfg.noise_sigma;
  fit.min_inlier_fraction = 0.3;
  fit.rng_seed = seed;
  return fit;
}

namespace {

std::vector<std::vector<double>> read_numeric_csv(std::istream& in, const std::vector<std::string>& header) {
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
      s.pop_back();
    }
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) {
      ++b;
    }
    return s.substr(b);
  };
  std::string expected;
  for (std::size_t i = 0; i < header.size(); ++i) {
    expected += (i ? "," : "") + header[i];
  }
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    if (!have_header) {
      if (line != expected) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected header '" + expected + "'", "header");
      }
      have_header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size()) {
        throw ValidationError("line " + std::to_string(line_no) + ": '" + cell + "' is not a number",
                              header[std::min(row.size(), header.size() - 1)]);
      }
      row.push_back(v);
    }
    if (row.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                " columns, got " + std::to_string(row.size()),
                            "row");
    }
    rows.push_back(std::move(row));
  }
  if (!have_header) {
    throw ValidationError("CSV is empty", "header");
  }
  if (rows.empty()) {
    throw ValidationError("CSV has no data rows", "rows");
  }
  return rows;
}

}  // namespace

std::vector<ScaleSample> read_samples_csv(std::istream& in) {
  std::vector<ScaleSample> out;
  for (const auto& r : read_numeric_csv(in, {"altitude_m", "pixels_per_meter"})) {
    out.push_back({r[0], r[1]});
  }
  validate_samples(out);
  return out;
}

std::vector<HeldOutPair> read_heldout_csv(std::istream& in) {
  std::vector<HeldOutPair> out;
  for (const auto& r : read_numeric_csv(in, {"pixel_span_px", "true_meters", "altitude_m"})) {
    out.push_back({r[0], r[1], r[2]});
  }
  return out;
}

void write_samples_csv(std::ostream& out, std::span<const ScaleSample> samples) {
  out << "altitude_m,pixels_per_meter\n";
  out.precision(17);
  for (const auto& s : samples) {
    out << s.altitude << ',' << s.pixels_per_meter << '\n';
  }
}

void write_heldout_csv(std::ostream& out, std::span<const HeldOutPair> heldout) {
  out << "pixel_span_px,true_meters,altitude_m\n";
  out.precision(17);
  for (const auto& p : heldout) {
    out << p.pixel_span << ',' << p.true_meters << ',' << p.altitude << '\n';
  }
}

ScaleModel calibrated_pinhole_model(double focal_px, double min_altitude, double max_altitude, int degree) {
  if (!(focal_px > 0) || !(min_altitude > 0) || !(max_altitude > min_altitude)) {
    throw ValidationError("need focal_px > 0 and 0 < min_altitude < max_altitude", "camera");
  }
  std::vector<ScaleSample> samples;
  const int n = std::max(200, degree + 1);
  for (int i = 0; i < n; ++i) {
    const double h = min_altitude + (max_altitude - min_altitude) * i / (n - 1);
    samples.push_back({h, focal_px / h});
  }
  FitConfig fit;
  fit.iterations = 1;
  fit.inlier_threshold = std::numeric_limits<double>::infinity();
  fit.min_inlier_fraction = 1.0;
  return fit_ransac(samples, degree, fit);
}

}  // namespace siteops::scale
