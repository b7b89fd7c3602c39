#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aesynth/acquisition.hpp"
#include "aesynth/core.hpp"
#include "aesynth/forward.hpp"
#include "aesynth/metrics.hpp"
#include "aesynth/reconstruct.hpp"

namespace aesynth {

/// Concentrated source: the nearest s-field cell receives amplitude / (dx dz),
/// so the integrated strength equals amplitude.
struct PointSource {
  Point position;
  double amplitude = 1.0;
  bool operator==(const PointSource &) const = default;
};

/// Uniform disc. Cells whose centres fall inside share the integrated
/// strength equally.
struct DiscSource {
  Point center;
  double radius = 1.0e-3;
  double amplitude = 1.0;
  bool operator==(const DiscSource &) const = default;
};

struct SFieldSpec {
  /// Unset: the grid spans the image field of view at 0.1 mm.
  std::optional<Point> origin;
  double dx = 1.0e-4;
  double dz = 1.0e-4;
  int nx = 0;
  int nz = 0;
  std::vector<PointSource> points;
  std::vector<DiscSource> discs;
  /// CSV of s values on this grid (rows are depths), relative to the
  /// scenario file.
  std::optional<std::string> file;
  bool operator==(const SFieldSpec &) const = default;
};

enum class TransmitKind { SA, FUS };

struct TransmitScheme {
  TransmitKind kind = TransmitKind::SA;
  double focal_depth = 22.0e-3;
  /// FUS only; empty means one line per element position.
  std::vector<double> line_centers;
  bool operator==(const TransmitScheme &) const = default;
};

enum class Weighting { None, CF, CFPL };

const char *to_string(Weighting weighting);
Weighting parse_weighting(const std::string &text);

struct GridSpec {
  double max_depth = 50.0e-3;
  /// Replaces the default grid entirely when set.
  std::optional<PixelGrid> explicit_grid;
  bool operator==(const GridSpec &) const = default;
};

struct ReconstructionSpec {
  double f_number = 1.5;
  GridSpec grid;
  Weighting weighting = Weighting::None;
  bool amplitude_correct = false;
  WindowAlignment window_alignment = WindowAlignment::Causal;
  bool operator==(const ReconstructionSpec &) const = default;
};

struct Scenario {
  std::string name = "scenario";
  ArrayGeometry geometry;
  Medium medium;
  PulseSpec pulse;
  PressureModel pressure;
  AcquisitionSpec acquisition;
  SFieldSpec s_field;
  TransmitScheme transmit;
  ReconstructionSpec reconstruction;
  std::vector<TargetSpec> targets;
  std::uint64_t seed = 0;

  PixelGrid pixel_grid() const;
  double max_depth() const;
  /// Throws Errc::Schema naming the offending field.
  void validate() const;
  bool operator==(const Scenario &) const = default;
};

/// Lengths are read from `_mm` keys; unknown keys are rejected.
Scenario parse_scenario(const std::string &json_text);
std::string serialize_scenario(const Scenario &scenario);
Scenario load_scenario(const std::filesystem::path &path);

/// Rasterises the source primitives. `base_dir` resolves s_field.file.
SFieldGrid build_s_field(const Scenario &scenario, const std::filesystem::path &base_dir = {});

std::vector<TransmitEvent> transmit_events(const Scenario &scenario);

}  // namespace aesynth
