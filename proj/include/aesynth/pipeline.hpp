#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aesynth/coherence.hpp"
#include "aesynth/metrics.hpp"
#include "aesynth/reconstruct.hpp"
#include "aesynth/scenario.hpp"

namespace aesynth {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  bool no_noise = false;
  unsigned threads = 0;               // 0: AE_SYNTH_THREADS, else 1
};

ChannelDataSet simulate_scenario(const Scenario &scenario, const RunOptions &options,
                                 const std::filesystem::path &base_dir = {});

struct ChannelDigest {
  int num_events = 0;
  int num_samples = 0;
  double sample_rate = 0.0;
  std::uint32_t crc32 = 0;
  std::string line() const;
};

ChannelDigest digest_of(const ChannelDataSet &data);

/// Simulates the scenario and writes the channel file atomically.
ChannelDigest cmd_simulate(const std::filesystem::path &scenario_path,
                           const std::filesystem::path &out_path, const RunOptions &options);

enum class MethodChoice { Auto, SA, FUS };

/// SA when every event fires one element, FUS when every event fires all of
/// them. Throws MethodMismatch for anything else or a conflicting request.
ImageMethod select_method(const ChannelDataSet &data, MethodChoice requested);

struct ReconstructSettings {
  MethodChoice method = MethodChoice::Auto;
  PixelGrid grid;
  double f_number = 1.5;
  Weighting weighting = Weighting::None;
  bool amplitude_correct = false;
  WindowAlignment window_alignment = WindowAlignment::Causal;
  PressureModel pressure;
  /// Replaces the file's pulse description (only the sample rate is stored).
  std::optional<PulseSpec> pulse;
  unsigned threads = 1;
};

/// Grid, F-number, pulse and pressure model from the scenario when given,
/// defaults otherwise.
ReconstructSettings settings_for(const ChannelDataSet &data, const std::optional<Scenario> &scenario);

struct NamedImage {
  std::string variant;  // "sa", "cf-sa", "cfpl-sa", "corrected-sa", "fus"
  BeamformedImage image;
};

struct NamedMap {
  std::string name;  // "cf_map", "cfpl_map", "beam_map"
  PixelGrid grid;
  Field2D<double> values;
  bool unit_range = true;  // coherence maps lie in [0, 1]
};

struct Reconstruction {
  std::vector<NamedImage> images;
  std::vector<NamedMap> maps;
};

Reconstruction reconstruct_dataset(const ChannelDataSet &data, const ReconstructSettings &settings);

struct ImageMeta {
  ImageMethod method = ImageMethod::SA;
  std::string variant;
  std::optional<double> f_number;
  PixelGrid grid;
};

std::filesystem::path meta_path_for(const std::filesystem::path &image_csv);
void write_image_meta(const std::filesystem::path &path, const ImageMeta &meta);
ImageMeta read_image_meta(const std::filesystem::path &path);

/// Writes <prefix>_<variant>.csv/.pgm/.meta.txt per image and
/// <prefix>_<map>.csv/.pgm per map. Returns the written paths.
std::vector<std::filesystem::path> write_reconstruction(const Reconstruction &recon,
                                                        const std::filesystem::path &prefix);

std::vector<std::filesystem::path> cmd_reconstruct(const std::filesystem::path &channel_path,
                                                   const std::filesystem::path &out_prefix,
                                                   const ReconstructSettings &settings);

/// One evaluated image: its name (CSV row key), variant and report.
struct EvaluatedImage {
  std::string name;
  std::string variant;
  MetricsReport report;
};

/// Per (variant, group) means, with the change relative to the FUS rows of
/// the same group: percent for AR/LR, dB difference for PSL/SNR.
std::string group_summary_csv(const std::vector<EvaluatedImage> &images);

struct EvaluateResult {
  std::string metrics_csv;
  std::string groups_csv;
};

EvaluateResult evaluate_images(const std::vector<std::filesystem::path> &image_csvs,
                               const Scenario &scenario);

/// Writes <out> and, next to it, <out stem>_groups.csv.
EvaluateResult cmd_evaluate(const std::vector<std::filesystem::path> &image_csvs,
                            const std::filesystem::path &scenario_path,
                            const std::filesystem::path &out_csv);

/// Saline electrodes: 6 mm apart laterally, 2 mm apart in depth around
/// the nominal depth.
std::array<Point, 2> saline_electrodes(double depth);

/// Bundled phantoms. depth in metres; FUS focus fixed at 22 mm.
Scenario saline_scenario(double depth, TransmitKind transmit, std::uint64_t seed);
Scenario nerve_scenario(double depth, TransmitKind transmit, std::uint64_t seed);

inline constexpr double kSuiteFocalDepth = 22.0e-3;
inline constexpr double kSuiteDepths[] = {15.0e-3, 22.0e-3, 35.0e-3};

struct SuiteResult {
  std::vector<std::string> failures;
  std::string summary;
  bool ok() const { return failures.empty(); }
};

/// Saline and nerve analogues at three depths, FUS and SA with CF/CFPL
/// weighting and amplitude correction. Writes channel files, images, maps,
/// metrics.csv, groups.csv, summary.txt and checksums.txt to out_dir.
SuiteResult paper_suite(const std::filesystem::path &out_dir, std::uint64_t seed, bool no_noise,
                        unsigned threads);

}  // namespace aesynth
