#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aesynth/acquisition.hpp"
#include "aesynth/core.hpp"

namespace aesynth {

/// One transmit pattern. Inactive elements carry delay 0.
struct TransmitEvent {
  std::vector<double> delays;  // [s], one per element
  std::vector<bool> active;
  std::string label;

  int active_count() const;
  /// Index of the only active element, or -1 if not a single-element event.
  int single_element() const;
  void validate(int num_elements) const;
  bool operator==(const TransmitEvent &) const = default;
};

enum class Decay { None, InverseSqrt, Inverse };
enum class Directivity { Omni, Cosine };

/// Single-element beam amplitude b_i(x).
struct PressureModel {
  Decay decay = Decay::None;
  double r_min = 1.0e-3;
  Directivity directivity = Directivity::Omni;
  /// Overrides the K_I * P0 * dA amplitude constant when set.
  std::optional<double> amplitude_norm;

  bool operator==(const PressureModel &) const = default;
};

/// Time axis of a simulated trace.
struct TraceSpec {
  double t0 = 0.0;
  int num_samples = 0;
};

/// Filtered pre-beamformed channel data, one row per transmit event.
struct ChannelDataSet {
  int num_events = 0;
  int num_samples = 0;
  double sample_rate = 0.0;
  double t0 = 0.0;
  std::vector<float> samples;  // row-major, num_events x num_samples
  std::vector<TransmitEvent> events;
  ArrayGeometry geometry;
  Medium medium;
  PulseSpec pulse;

  std::span<const float> channel(int event) const {
    return {samples.data() + static_cast<std::size_t>(event) * num_samples,
            static_cast<std::size_t>(num_samples)};
  }
  std::span<float> channel(int event) {
    return {samples.data() + static_cast<std::size_t>(event) * num_samples,
            static_cast<std::size_t>(num_samples)};
  }
};

double time_of_flight(Point source, Point target, double sos);

double element_beam_amplitude(const ArrayGeometry &geometry, int element_index,
                              Point point, const PressureModel &model);

/// Samples needed to cover max_depth plus the largest transmit delay.
TraceSpec trace_spec_for(double max_depth, const std::vector<TransmitEvent> &events,
                         const Medium &medium, const PulseSpec &pulse);

/// Noiseless AE voltage for one transmit:
///   V(t) = -K_I P0 dA sum_cells sum_i s(x) b_i(x) a(t - delay_i - |x - x_i| / c)
/// with the pulse placed at fractional delays by linear interpolation.
std::vector<double> simulate_channel(const SFieldGrid &s_field, const TransmitEvent &event,
                                     const ArrayGeometry &geometry, const Medium &medium,
                                     const PulseSpec &pulse, const PressureModel &model,
                                     const TraceSpec &trace);

std::vector<TransmitEvent> single_element_sequence(const ArrayGeometry &geometry);

/// All elements active, focused at (line_center, focal_depth). An infinite
/// focal depth gives a plane wave (all delays zero).
std::vector<TransmitEvent> focused_sequence(const ArrayGeometry &geometry, const Medium &medium,
                                            double focal_depth,
                                            std::span<const double> line_centers);

std::vector<double> element_line_centers(const ArrayGeometry &geometry);

/// Per event: clean trace, (+) and (-) polarity acquisitions with common
/// mode and k-averaged noise, differential subtraction, matched filter.
/// Channel c draws its noise from a generator seeded by (seed, c) only.
ChannelDataSet simulate_dataset(const SFieldGrid &s_field,
                                const std::vector<TransmitEvent> &events,
                                const ArrayGeometry &geometry, const Medium &medium,
                                const PulseSpec &pulse, const PressureModel &model,
                                const AcquisitionSpec &acquisition, std::uint64_t seed,
                                double max_depth, unsigned threads = 1);

// Channel file ("AECD", little-endian).
inline constexpr std::uint16_t kChannelFileVersion = 1;

std::vector<std::uint8_t> encode_channel_file(const ChannelDataSet &data);
ChannelDataSet decode_channel_file(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames it into place.
void write_channel_file(const std::filesystem::path &path, const ChannelDataSet &data);
ChannelDataSet read_channel_file(const std::filesystem::path &path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace aesynth
