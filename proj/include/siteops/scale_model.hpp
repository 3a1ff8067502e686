#pragma once

// Robust polynomial model of image scale (pixels per meter) against drone
// altitude, fitted with RANSAC, plus the held-out degree study.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "siteops/error.hpp"

namespace siteops::scale {

struct ScaleSample {
  double altitude = 0.0;          // m, > 0
  double pixels_per_meter = 0.0;  // px/m, > 0
};

/// One held-out measurement: two image points `pixel_span` apart whose true
/// ground separation is known.
struct HeldOutPair {
  double pixel_span = 0.0;
  double true_meters = 0.0;
  double altitude = 0.0;
};

struct FitConfig {
  int iterations = 1000;
  double inlier_threshold = 2.0;  // px/m
  double min_inlier_fraction = 0.5;
  std::uint64_t rng_seed = 0;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

/// Prediction requested outside [0.5 x min, 1.5 x max] of the training altitudes.
class ExtrapolationError : public RangeError {
 public:
  using RangeError::RangeError;
};

/// The polynomial evaluates to a nonpositive scale at the requested altitude.
class ModelInvalidAtAltitude : public RangeError {
 public:
  using RangeError::RangeError;
};

/// Polynomial in the standardized altitude z = (h - altitude_mean) / altitude_scale.
/// Coefficients are ascending powers of z.
struct ScaleModel {
  int degree = 0;
  std::vector<double> coefficients;
  double altitude_mean = 0.0;
  double altitude_scale = 1.0;
  double min_altitude = 0.0;
  double max_altitude = 0.0;
  int inlier_count = 0;
  double inlier_threshold = 0.0;
  std::vector<std::size_t> inliers;  // indices into the training samples

  /// Model with raw ascending-power coefficients in altitude, valid over
  /// [min_altitude, max_altitude] (the extrapolation guard widens this).
  static ScaleModel from_raw(std::vector<double> raw, double min_altitude, double max_altitude);

  /// Coefficients re-expressed in ascending powers of raw altitude.
  std::vector<double> raw_coefficients() const;

  /// Polynomial value without the range/positivity guards.
  double evaluate(double altitude) const;

  double guard_low() const { return 0.5 * min_altitude; }
  double guard_high() const { return 1.5 * max_altitude; }
};

ScaleModel fit_ransac(std::span<const ScaleSample> samples, int degree, const FitConfig& cfg);

double predict_ppm(const ScaleModel& model, double altitude);

/// Root-mean-square error of pixel_span / predict_ppm against true_meters, in centimeters.
double evaluate_rmse(const ScaleModel& model, std::span<const HeldOutPair> heldout);

struct StudyRow {
  int degree = 0;
  std::vector<double> rmse_cm;  // one per StudyTable::altitudes entry
};

struct StudyTable {
  std::vector<double> altitudes;  // ascending, unique held-out altitudes
  std::vector<StudyRow> rows;     // ascending degree

  /// Header `degree,rmse_<alt>m_cm,...`.
  std::string csv_header() const;
  void write_csv(std::ostream& out) const;
};

StudyTable degree_study(std::span<const ScaleSample> samples, std::span<const HeldOutPair> heldout,
                        std::span<const int> degrees, const FitConfig& cfg);

/// Parameters of the seeded pinhole calibration generator: ppm(h) = focal_px / h
/// plus Gaussian noise, with a fraction of samples replaced by uniform gross outliers.
struct PinholeConfig {
  double focal_px = 1000.0;
  double min_altitude = 3.0;
  double max_altitude = 20.0;
  int sample_count = 200;
  double noise_sigma = 3.0;  // px/m
  double outlier_fraction = 0.2;
  double outlier_min_ppm = 20.0;
  double outlier_max_ppm = 400.0;
  std::vector<double> heldout_altitudes{5.0, 8.0, 10.0, 15.0};
  int heldout_per_altitude = 20;
  double heldout_min_meters = 0.5;
  double heldout_max_meters = 3.0;
};

struct SyntheticData {
  std::vector<ScaleSample> samples;
  std::vector<bool> is_outlier;  // parallel to samples
  std::vector<HeldOutPair> heldout;
};

SyntheticData generate_pinhole(const PinholeConfig& cfg, std::uint64_t seed);

/// Camera model for simulation: a least-squares fit of the given degree to noiseless
/// pinhole samples focal_px / h. A cubic stays within 1% of the pinhole over 5..12 m.
ScaleModel calibrated_pinhole_model(double focal_px = 1000.0, double min_altitude = 5.0, double max_altitude = 12.0,
                                    int degree = 3);

/// RANSAC settings used by the synthetic study: 3-sigma threshold and a
/// consensus floor the linear model can still reach on a curved target.
FitConfig synthetic_study_config(const PinholeConfig& cfg, std::uint64_t seed);

// CSV files: `altitude_m,pixels_per_meter` and `pixel_span_px,true_meters,altitude_m`.
std::vector<ScaleSample> read_samples_csv(std::istream& in);
std::vector<HeldOutPair> read_heldout_csv(std::istream& in);
void write_samples_csv(std::ostream& out, std::span<const ScaleSample> samples);
void write_heldout_csv(std::ostream& out, std::span<const HeldOutPair> heldout);

}  // namespace siteops::scale
