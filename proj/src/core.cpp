#include "aesynth/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

namespace aesynth {

const char *to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "invalid-argument";
    case Errc::Dimension: return "dimension";
    case Errc::InvalidEvent: return "invalid-event";
    case Errc::LengthMismatch: return "length-mismatch";
    case Errc::ZeroTemplate: return "zero-template";
    case Errc::DegenerateAxis: return "degenerate-axis";
    case Errc::GridMismatch: return "grid-mismatch";
    case Errc::NoPeak: return "no-peak";
    case Errc::HalfMaxNotCrossed: return "half-max-not-crossed";
    case Errc::UndefinedSnr: return "undefined-snr";
    case Errc::MethodMismatch: return "method-mismatch";
    case Errc::Format: return "format";
    case Errc::Schema: return "schema";
  }
  return "unknown";
}

namespace {

void require(bool condition, const char *message) {
  if (!condition) throw Error(Errc::InvalidArgument, message);
}

}  // namespace

void ArrayGeometry::validate() const {
  require(num_elements >= 1, "ArrayGeometry: num_elements must be >= 1");
  require(std::isfinite(pitch) && pitch > 0.0, "ArrayGeometry: pitch must be > 0");
  require(std::isfinite(center_x), "ArrayGeometry: center_x must be finite");
}

void Medium::validate() const {
  require(std::isfinite(sos) && sos > 0.0, "Medium: sos must be > 0");
  require(std::isfinite(k_i) && std::isfinite(p0), "Medium: k_i and p0 must be finite");
}

int PulseSpec::half_length() const {
  if (kind == PulseKind::Impulse) return 0;
  const double duration = num_cycles / center_frequency;
  return static_cast<int>(std::floor(0.5 * duration * sample_rate + 1e-9));
}

std::vector<double> PulseSpec::waveform() const {
  const int half = half_length();
  std::vector<double> w(static_cast<std::size_t>(2 * half + 1), 0.0);
  if (kind == PulseKind::Impulse) {
    w[0] = 1.0;
    return w;
  }
  // Hann-windowed cosine carrier: zero phase, so the peak sits at t = 0.
  const double duration = num_cycles / center_frequency;
  for (int n = -half; n <= half; ++n) {
    const double t = n / sample_rate;
    const double window = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * t / duration));
    w[static_cast<std::size_t>(n + half)] =
        window * std::cos(2.0 * std::numbers::pi * center_frequency * t);
  }
  return w;
}

void PulseSpec::validate() const {
  require(std::isfinite(center_frequency) && center_frequency > 0.0,
          "PulseSpec: center_frequency must be > 0");
  require(std::isfinite(num_cycles) && num_cycles > 0.0, "PulseSpec: num_cycles must be > 0");
  require(std::isfinite(sample_rate) && sample_rate >= 8.0 * center_frequency,
          "PulseSpec: sample_rate must be >= 8 x center_frequency");
}

void SFieldGrid::validate() const {
  require(dx > 0.0 && dz > 0.0, "SFieldGrid: spacing must be > 0");
  for (double v : values.data()) {
    require(std::isfinite(v), "SFieldGrid: values must be finite");
  }
}

void PixelGrid::validate() const {
  require(dx > 0.0 && dz > 0.0, "PixelGrid: spacing must be > 0");
  require(nx >= 1 && nz >= 1, "PixelGrid: nx and nz must be >= 1");
}

SFieldGrid compose_s_field(const VectorField &lead_field,
                           const VectorField &current_density,
                           const Field2D<double> &resistivity) {
  const bool same_grid = lead_field.origin == current_density.origin &&
                         lead_field.dx == current_density.dx &&
                         lead_field.dz == current_density.dz;
  const bool same_shape = lead_field.x.same_shape(lead_field.z) &&
                          lead_field.x.same_shape(current_density.x) &&
                          lead_field.x.same_shape(current_density.z) &&
                          lead_field.x.same_shape(resistivity);
  if (!same_grid || !same_shape) {
    throw Error(Errc::Dimension, "compose_s_field: fields do not share one grid");
  }
  SFieldGrid s{lead_field.origin, lead_field.dx, lead_field.dz,
               Field2D<double>(resistivity.nx(), resistivity.nz())};
  auto &out = s.values.data();
  const auto &lx = lead_field.x.data();
  const auto &lz = lead_field.z.data();
  const auto &jx = current_density.x.data();
  const auto &jz = current_density.z.data();
  const auto &rho = resistivity.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lx[i] * (rho[i] * jx[i]) + lz[i] * (rho[i] * jz[i]);
  }
  s.validate();
  return s;
}

double wavelength(const Medium &medium, const PulseSpec &pulse) {
  require(pulse.center_frequency > 0.0, "wavelength: center_frequency must be > 0");
  return medium.sos / pulse.center_frequency;
}

PixelGrid default_pixel_grid(const ArrayGeometry &geometry,
                             const Medium &medium, const PulseSpec &pulse,
                             double max_depth) {
  require(max_depth > 0.0, "default_pixel_grid: max_depth must be > 0");
  geometry.validate();
  const double lambda = wavelength(medium, pulse);
  PixelGrid grid;
  grid.dx = kLateralSpacingWavelengths * lambda;
  grid.dz = kAxialSpacingWavelengths * lambda;
  grid.origin = {geometry.left_edge(), grid.dz};
  const double eps = 1e-9;
  grid.nx = static_cast<int>(std::floor(geometry.aperture_width() / grid.dx + eps)) + 1;
  grid.nz = std::max(1, static_cast<int>(std::floor(max_depth / grid.dz + eps)));
  return grid;
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char *env = std::getenv("AE_SYNTH_THREADS")) {
    char *end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

}  // namespace aesynth
