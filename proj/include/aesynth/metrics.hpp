#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aesynth/core.hpp"
#include "aesynth/reconstruct.hpp"

namespace aesynth {

/// Axis-aligned rectangle in metres.
struct Rect {
  double x0 = 0.0;
  double x1 = 0.0;
  double z0 = 0.0;
  double z1 = 0.0;
  bool operator==(const Rect &) const = default;
};

/// Half-open pixel index ranges.
struct PixelRoi {
  int ix0 = 0;
  int ix1 = 0;
  int iz0 = 0;
  int iz1 = 0;

  bool empty() const { return ix1 <= ix0 || iz1 <= iz0; }
  bool overlaps(const PixelRoi &o) const {
    return ix0 < o.ix1 && o.ix0 < ix1 && iz0 < o.iz1 && o.iz0 < iz1;
  }
};

/// Pixels whose centres fall inside the rectangle. Throws if none do.
PixelRoi roi_of(const PixelGrid &grid, const Rect &rect);

struct TargetSpec {
  std::string label;
  Point expected;
  Rect signal_roi;
  Rect noise_roi;
  std::string group;  // e.g. "on-focus"; optional
  bool operator==(const TargetSpec &) const = default;
};

struct Peak {
  int ix = 0;
  int iz = 0;
  double x = 0.0;
  double z = 0.0;
  double value = 0.0;
};

/// Envelope argmax inside the ROI; ties go to the smallest z, then x.
Peak peak_pixel(const Field2D<double> &envelope, const PixelGrid &grid, const PixelRoi &roi);

/// Width between the half-maximum crossings nearest the global peak,
/// linearly interpolated between bracketing samples.
double profile_fwhm(std::span<const double> profile, double spacing);

/// 20 log10(max sidelobe / main lobe). The main lobe runs to the first
/// local minimum on each side of the peak. -inf when nothing lies outside.
double peak_sidelobe_level(std::span<const double> lateral_profile);

/// 10 log10(mean(x^2) / var(y)), population normalisation on both ROIs.
double image_snr(const Field2D<double> &values, const PixelRoi &signal_roi,
                 const PixelRoi &noise_roi);

struct TargetMetrics {
  std::string label;
  std::string group;
  std::optional<Peak> peak;
  std::optional<double> axial_resolution;    // [m]
  std::optional<double> lateral_resolution;  // [m]
  std::optional<double> psl_db;
  std::optional<double> snr_db;
  std::vector<std::string> errors;
};

struct MetricsReport {
  ImageMethod method = ImageMethod::SA;
  std::vector<TargetMetrics> targets;
};

/// Resolution and PSL from the envelope, SNR from pre-envelope values.
/// Failures are recorded per target; the batch always completes.
MetricsReport evaluate_targets(const BeamformedImage &image, const std::vector<TargetSpec> &targets);

std::string to_key_value_text(const MetricsReport &report);
std::string metrics_csv_header();
/// One CSV row per target, each prefixed with the image name.
std::string metrics_csv_rows(const MetricsReport &report, const std::string &image_name);

}  // namespace aesynth
