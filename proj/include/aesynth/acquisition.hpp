#pragma once

#include <random>
#include <span>
#include <vector>

namespace aesynth {

/// Receive-chain conditioning for one transmit pattern.
struct AcquisitionSpec {
  int k = 1;                          // repeated transmissions averaged
  double noise_power = 0.0;           // per-sample variance before averaging [V^2]
  double common_mode_amplitude = 0.0; // [V]
  double rf_gain = 1.0;

  void validate() const;
  bool operator==(const AcquisitionSpec &) const = default;
};

using Rng = std::mt19937_64;

/// Adds zero-mean Gaussian noise of variance noise_power / k, the result of
/// averaging k independent repetitions.
void add_thermal_noise(std::span<double> trace, double noise_power, int k, Rng &rng);

/// v_plus - v_minus.
std::vector<double> differential_subtract(std::span<const double> v_plus,
                                          std::span<const double> v_minus);

/// Zero-phase cross-correlation with the pulse template. The template is
/// rescaled by max|template| / sum(template^2), so a trace equal to the
/// template keeps its own peak amplitude at the same index.
std::vector<double> matched_filter(std::span<const double> trace,
                                   std::span<const double> pulse_template);

/// Deterministic common-mode pickup, identical in both polarities.
std::vector<double> common_mode_trace(int num_samples, double sample_rate,
                                      double t0, double amplitude);

}  // namespace aesynth
