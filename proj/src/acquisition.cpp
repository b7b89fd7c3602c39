#include "aesynth/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aesynth/core.hpp"

namespace aesynth {

void AcquisitionSpec::validate() const {
  if (k < 1) throw Error(Errc::InvalidArgument, "AcquisitionSpec: k must be >= 1");
  if (!(noise_power >= 0.0) || !std::isfinite(noise_power)) {
    throw Error(Errc::InvalidArgument, "AcquisitionSpec: noise_power must be >= 0");
  }
  if (!std::isfinite(common_mode_amplitude) || !std::isfinite(rf_gain)) {
    throw Error(Errc::InvalidArgument, "AcquisitionSpec: amplitudes must be finite");
  }
}

void add_thermal_noise(std::span<double> trace, double noise_power, int k, Rng &rng) {
  if (!(noise_power >= 0.0) || k < 1) {
    throw Error(Errc::InvalidArgument, "add_thermal_noise: need noise_power >= 0, k >= 1");
  }
  if (noise_power == 0.0) return;
  std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / k));
  for (double &v : trace) v += gauss(rng);
}

std::vector<double> differential_subtract(std::span<const double> v_plus,
                                          std::span<const double> v_minus) {
  if (v_plus.size() != v_minus.size()) {
    throw Error(Errc::LengthMismatch, "differential_subtract: trace lengths differ");
  }
  std::vector<double> out(v_plus.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_plus[i] - v_minus[i];
  return out;
}

std::vector<double> matched_filter(std::span<const double> trace,
                                   std::span<const double> pulse_template) {
  double energy = 0.0;
  double peak = 0.0;
  for (double v : pulse_template) {
    energy += v * v;
    peak = std::max(peak, std::abs(v));
  }
  if (energy == 0.0) throw Error(Errc::ZeroTemplate, "matched_filter: template is zero");

  const double scale = peak / energy;
  const auto n = static_cast<std::ptrdiff_t>(trace.size());
  const auto len = static_cast<std::ptrdiff_t>(pulse_template.size());
  const std::ptrdiff_t center = (len - 1) / 2;
  std::vector<double> out(trace.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, center - i);
    const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(len, n - i + center);
    double acc = 0.0;
    for (std::ptrdiff_t j = j_lo; j < j_hi; ++j) {
      acc += pulse_template[static_cast<std::size_t>(j)] *
             trace[static_cast<std::size_t>(i + j - center)];
    }
    out[static_cast<std::size_t>(i)] = scale * acc;
  }
  return out;
}

std::vector<double> common_mode_trace(int num_samples, double sample_rate,
                                      double t0, double amplitude) {
  // DC offset plus a slow ripple.
  constexpr double kRippleHz = 50.0e3;
  std::vector<double> cm(static_cast<std::size_t>(std::max(0, num_samples)));
  for (std::size_t n = 0; n < cm.size(); ++n) {
    const double t = t0 + n / sample_rate;
    cm[n] = amplitude * (0.5 + std::sin(2.0 * std::numbers::pi * kRippleHz * t));
  }
  return cm;
}

}  // namespace aesynth
