#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aesynth {

enum class Errc {
  InvalidArgument,
  Dimension,
  InvalidEvent,
  LengthMismatch,
  ZeroTemplate,
  DegenerateAxis,
  GridMismatch,
  NoPeak,
  HalfMaxNotCrossed,
  UndefinedSnr,
  MethodMismatch,
  Format,
  Schema,
};

const char *to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string &what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Point {
  double x = 0.0;
  double z = 0.0;
  bool operator==(const Point &) const = default;
};

/// Dense 2D array indexed (ix, iz). Storage is column-major in x: each
/// lateral column is contiguous along depth.
template <typename T>
class Field2D {
 public:
  Field2D() = default;
  Field2D(int nx, int nz, T fill = T{})
      : nx_(checked(nx)), nz_(checked(nz)), data_(static_cast<std::size_t>(nx) * nz, fill) {}

  int nx() const { return nx_; }
  int nz() const { return nz_; }
  std::size_t size() const { return data_.size(); }

  T &operator()(int ix, int iz) {
    return data_[static_cast<std::size_t>(ix) * nz_ + iz];
  }
  const T &operator()(int ix, int iz) const {
    return data_[static_cast<std::size_t>(ix) * nz_ + iz];
  }

  T *column(int ix) { return data_.data() + static_cast<std::size_t>(ix) * nz_; }
  const T *column(int ix) const {
    return data_.data() + static_cast<std::size_t>(ix) * nz_;
  }

  std::vector<T> &data() { return data_; }
  const std::vector<T> &data() const { return data_; }

  bool same_shape(const Field2D &other) const {
    return nx_ == other.nx_ && nz_ == other.nz_;
  }
  bool operator==(const Field2D &) const = default;

 private:
  static int checked(int n) {
    if (n < 0) throw Error(Errc::Dimension, "Field2D: negative dimension");
    return n;
  }

  int nx_ = 0;
  int nz_ = 0;
  std::vector<T> data_;
};

/// Linear array at depth z = 0, elements centred on center_x.
struct ArrayGeometry {
  int num_elements = 64;
  double pitch = 0.315e-3;
  double center_x = 0.0;

  double element_x(int i) const {
    return center_x + (i - (num_elements - 1) / 2.0) * pitch;
  }
  Point element_position(int i) const { return {element_x(i), 0.0}; }
  double aperture_width() const { return num_elements * pitch; }
  double left_edge() const { return center_x - aperture_width() / 2.0; }

  void validate() const;
  bool operator==(const ArrayGeometry &) const = default;
};

struct Medium {
  double sos = 1480.0;  // m/s
  double k_i = 1.0;     // 1/Pa
  double p0 = 1.0;      // Pa

  void validate() const;
  bool operator==(const Medium &) const = default;
};

enum class PulseKind { Impulse, Tone };

/// Transmit pulse a(t), centred at t = 0.
struct PulseSpec {
  double center_frequency = 2.0e6;
  double num_cycles = 1.0;
  double sample_rate = 40.0e6;
  PulseKind kind = PulseKind::Tone;

  /// Samples on each side of the centre sample.
  int half_length() const;
  int length_samples() const { return 2 * half_length() + 1; }
  /// Sampled waveform; index half_length() is t = 0.
  std::vector<double> waveform() const;

  void validate() const;
  bool operator==(const PulseSpec &) const = default;
};

/// Source field s(x, z) on a regular grid. Cell (ix, iz) is centred at
/// origin + (ix * dx, iz * dz).
struct SFieldGrid {
  Point origin;
  double dx = 1e-4;
  double dz = 1e-4;
  Field2D<double> values;

  Point cell_center(int ix, int iz) const {
    return {origin.x + ix * dx, origin.z + iz * dz};
  }
  void validate() const;
};

struct PixelGrid {
  Point origin;
  double dx = 1e-4;
  double dz = 1e-4;
  int nx = 1;
  int nz = 1;

  double x(int ix) const { return origin.x + ix * dx; }
  double z(int iz) const { return origin.z + iz * dz; }
  Point pixel(int ix, int iz) const { return {x(ix), z(iz)}; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * nz; }

  void validate() const;
  bool operator==(const PixelGrid &) const = default;
};

/// Two-component vector field sharing the SFieldGrid layout.
struct VectorField {
  Point origin;
  double dx = 1e-4;
  double dz = 1e-4;
  Field2D<double> x;
  Field2D<double> z;
};

/// s = J^L . (rho0 J^I), evaluated pointwise.
SFieldGrid compose_s_field(const VectorField &lead_field,
                           const VectorField &current_density,
                           const Field2D<double> &resistivity);

double wavelength(const Medium &medium, const PulseSpec &pulse);

/// Grid at 0.43 lambda laterally and 0.25 lambda axially. Column 0 sits at
/// the left aperture edge and depths run over (0, max_depth].
PixelGrid default_pixel_grid(const ArrayGeometry &geometry,
                             const Medium &medium, const PulseSpec &pulse,
                             double max_depth);

inline constexpr double kLateralSpacingWavelengths = 0.43;
inline constexpr double kAxialSpacingWavelengths = 0.25;

/// Resolves a thread count: 0 means "use AE_SYNTH_THREADS, else 1".
unsigned resolve_threads(unsigned requested);

}  // namespace aesynth
