#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "aesynth/core.hpp"
#include "aesynth/forward.hpp"

namespace aesynth {

enum class ImageMethod { SA, FUS };

const char *to_string(ImageMethod method);

struct BeamformedImage {
  PixelGrid grid;
  Field2D<double> values;                   // pre-envelope s-hat
  std::optional<Field2D<double>> envelope;  // after envelope()
  ImageMethod method = ImageMethod::SA;
  std::optional<double> f_number;
  /// SA: valid (in-support) element count per pixel.
  /// FUS: 1 where a ray line was placed in the column, 0 otherwise.
  Field2D<int> coverage;
};

/// Where the CFPL window starts relative to the time-of-arrival sample.
enum class WindowAlignment { Causal, Centered };

/// Per-pixel delayed single-element samples retained for coherence
/// weighting. Pixel p owns elements [first_element[p], first_element[p] +
/// count(p)) and samples [offsets[p], offsets[p+1]).
struct ApertureSamples {
  PixelGrid grid;
  std::vector<std::size_t> offsets;
  std::vector<int> first_element;
  std::vector<int> valid_count;
  std::vector<float> samples;
  /// Optional P-sample windows: window_samples * samples.size() values,
  /// element-major (element slot s of pixel p at offsets[p] + s holds
  /// windows[(offsets[p] + s) * P + j]).
  int window_samples = 0;
  WindowAlignment alignment = WindowAlignment::Causal;
  std::vector<float> windows;

  std::size_t pixel_index(int ix, int iz) const {
    return static_cast<std::size_t>(ix) * grid.nz + iz;
  }
  int count(std::size_t pixel) const {
    return static_cast<int>(offsets[pixel + 1] - offsets[pixel]);
  }
};

struct ElementRange {
  int first = 0;
  int count = 0;
  bool operator==(const ElementRange &) const = default;
};

/// round(z / (f_number * pitch)) clamped to [1, num_elements].
int sub_aperture_size(double z, double f_number, double pitch, int num_elements);

/// Contiguous window of sub_aperture_size() elements centred on the element
/// nearest pixel.x, truncated (not shifted) at the array edges.
ElementRange sub_aperture_elements(Point pixel, const ArrayGeometry &geometry, double f_number);

struct DasOptions {
  int window_samples = 0;  // CFPL window P; 0 keeps single samples only
  WindowAlignment alignment = WindowAlignment::Causal;
  unsigned threads = 1;
};

struct DasResult {
  BeamformedImage image;
  ApertureSamples samples;
};

/// Pixel-oriented delay-and-sum of single-element channels with a fixed
/// F-number dynamic sub-aperture. Out-of-support samples contribute zero.
DasResult das_sa(const ChannelDataSet &data, const PixelGrid &grid, double f_number,
                 const DasOptions &options = {});

/// Lateral centre of a focused event (element with the largest delay, i.e.
/// nearest the focus) and its firing time, used as the depth time origin.
struct RayLine {
  double x = 0.0;
  double t_ref = 0.0;
};
RayLine ray_line_of(const TransmitEvent &event, const ArrayGeometry &geometry);

/// Arranges focused ray lines into columns, mapping z = c (t - t_ref).
BeamformedImage fus_line_map(const ChannelDataSet &data, const PixelGrid &grid,
                             const Medium &medium);

/// Magnitude of the analytic signal along depth, per lateral column.
BeamformedImage envelope(BeamformedImage image);
std::vector<double> analytic_envelope(std::span<const double> signal);

// Export.
void write_image_csv(const std::filesystem::path &path, const Field2D<double> &values);
Field2D<double> read_image_csv(const std::filesystem::path &path);
/// Envelope normalised to its peak, log compressed over dynamic_range_db.
void write_envelope_pgm(const std::filesystem::path &path, const Field2D<double> &envelope,
                        double dynamic_range_db = 40.0);
/// Linear map of [0, 1] to [0, 255].
void write_linear_pgm(const std::filesystem::path &path, const Field2D<double> &values);

}  // namespace aesynth
