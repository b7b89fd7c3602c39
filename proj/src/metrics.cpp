#include "aesynth/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace aesynth {

PixelRoi roi_of(const PixelGrid &grid, const Rect &rect) {
  const double eps = 1e-9;
  const auto first_at_or_after = [eps](double lo, double origin, double step) {
    return static_cast<int>(std::ceil((lo - origin) / step - eps));
  };
  const auto last_at_or_before = [eps](double hi, double origin, double step) {
    return static_cast<int>(std::floor((hi - origin) / step + eps));
  };
  PixelRoi roi;
  roi.ix0 = std::max(0, first_at_or_after(std::min(rect.x0, rect.x1), grid.origin.x, grid.dx));
  roi.ix1 = std::min(grid.nx, last_at_or_before(std::max(rect.x0, rect.x1), grid.origin.x, grid.dx) + 1);
  roi.iz0 = std::max(0, first_at_or_after(std::min(rect.z0, rect.z1), grid.origin.z, grid.dz));
  roi.iz1 = std::min(grid.nz, last_at_or_before(std::max(rect.z0, rect.z1), grid.origin.z, grid.dz) + 1);
  if (roi.empty()) throw Error(Errc::InvalidArgument, "ROI contains no pixel of the grid");
  return roi;
}

Peak peak_pixel(const Field2D<double> &envelope, const PixelGrid &grid, const PixelRoi &roi) {
  if (roi.empty()) throw Error(Errc::InvalidArgument, "peak_pixel: empty ROI");
  Peak best;
  best.value = 0.0;
  bool found = false;
  for (int iz = roi.iz0; iz < roi.iz1; ++iz) {
    for (int ix = roi.ix0; ix < roi.ix1; ++ix) {
      const double v = envelope(ix, iz);
      if (v > best.value) {
        best = {ix, iz, grid.x(ix), grid.z(iz), v};
        found = true;
      }
    }
  }
  if (!found) throw Error(Errc::NoPeak, "peak_pixel: ROI holds no positive value");
  return best;
}

double profile_fwhm(std::span<const double> profile, double spacing) {
  if (profile.empty()) throw Error(Errc::NoPeak, "profile_fwhm: empty profile");
  const auto peak_it = std::max_element(profile.begin(), profile.end());
  if (!(*peak_it > 0.0)) throw Error(Errc::NoPeak, "profile_fwhm: no positive maximum");
  const auto p = static_cast<std::ptrdiff_t>(peak_it - profile.begin());
  const auto n = static_cast<std::ptrdiff_t>(profile.size());
  const double half = *peak_it / 2.0;

  std::ptrdiff_t l = p - 1;
  while (l >= 0 && profile[l] > half) --l;
  std::ptrdiff_t r = p + 1;
  while (r < n && profile[r] > half) ++r;
  if (l < 0 || r >= n) {
    throw Error(Errc::HalfMaxNotCrossed, "profile_fwhm: half maximum not crossed on both sides");
  }
  const double left = l + (half - profile[l]) / (profile[l + 1] - profile[l]);
  const double right = r - (half - profile[r]) / (profile[r - 1] - profile[r]);
  return (right - left) * spacing;
}

double peak_sidelobe_level(std::span<const double> lateral_profile) {
  if (lateral_profile.empty()) throw Error(Errc::NoPeak, "peak_sidelobe_level: empty profile");
  const auto peak_it = std::max_element(lateral_profile.begin(), lateral_profile.end());
  const double main = *peak_it;
  if (!(main > 0.0)) throw Error(Errc::NoPeak, "peak_sidelobe_level: no positive main lobe");
  const std::size_t p = static_cast<std::size_t>(peak_it - lateral_profile.begin());

  std::size_t r = p;
  while (r + 1 < lateral_profile.size() && lateral_profile[r + 1] <= lateral_profile[r]) ++r;
  std::size_t l = p;
  while (l > 0 && lateral_profile[l - 1] <= lateral_profile[l]) --l;

  double sidelobe = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < l; ++i) {
    sidelobe = std::max(sidelobe, lateral_profile[i]);
    any = true;
  }
  for (std::size_t i = r + 1; i < lateral_profile.size(); ++i) {
    sidelobe = std::max(sidelobe, lateral_profile[i]);
    any = true;
  }
  if (!any || sidelobe <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(sidelobe / main);
}

double image_snr(const Field2D<double> &values, const PixelRoi &signal_roi,
                 const PixelRoi &noise_roi) {
  if (signal_roi.empty() || noise_roi.empty()) {
    throw Error(Errc::InvalidArgument, "image_snr: empty ROI");
  }
  if (signal_roi.overlaps(noise_roi)) {
    throw Error(Errc::InvalidArgument, "image_snr: signal and noise ROIs overlap");
  }
  double power = 0.0;
  std::size_t n_signal = 0;
  for (int ix = signal_roi.ix0; ix < signal_roi.ix1; ++ix) {
    for (int iz = signal_roi.iz0; iz < signal_roi.iz1; ++iz) {
      power += values(ix, iz) * values(ix, iz);
      ++n_signal;
    }
  }
  double mean = 0.0;
  std::size_t n_noise = 0;
  for (int ix = noise_roi.ix0; ix < noise_roi.ix1; ++ix) {
    for (int iz = noise_roi.iz0; iz < noise_roi.iz1; ++iz) {
      mean += values(ix, iz);
      ++n_noise;
    }
  }
  mean /= static_cast<double>(n_noise);
  double variance = 0.0;
  for (int ix = noise_roi.ix0; ix < noise_roi.ix1; ++ix) {
    for (int iz = noise_roi.iz0; iz < noise_roi.iz1; ++iz) {
      const double d = values(ix, iz) - mean;
      variance += d * d;
    }
  }
  variance /= static_cast<double>(n_noise);
  if (!(variance > 0.0)) throw Error(Errc::UndefinedSnr, "image_snr: noise ROI has zero variance");
  return 10.0 * std::log10((power / static_cast<double>(n_signal)) / variance);
}

namespace {

template <typename Fn>
void record(TargetMetrics &metrics, const char *what, Fn &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    metrics.errors.push_back(fmt::format("{}: {} ({})", what, to_string(e.code()), e.what()));
  }
}

}  // namespace

MetricsReport evaluate_targets(const BeamformedImage &image, const std::vector<TargetSpec> &targets) {
  if (!image.envelope) throw Error(Errc::InvalidArgument, "evaluate_targets: envelope not computed");
  const Field2D<double> &env = *image.envelope;
  const PixelGrid &grid = image.grid;

  MetricsReport report;
  report.method = image.method;
  for (const TargetSpec &target : targets) {
    TargetMetrics m;
    m.label = target.label;
    m.group = target.group;
    record(m, "peak", [&] { m.peak = peak_pixel(env, grid, roi_of(grid, target.signal_roi)); });
    if (m.peak) {
      const Peak &peak = *m.peak;
      std::vector<double> depth_profile(env.column(peak.ix), env.column(peak.ix) + grid.nz);
      std::vector<double> lateral_profile(static_cast<std::size_t>(grid.nx));
      for (int ix = 0; ix < grid.nx; ++ix) lateral_profile[ix] = env(ix, peak.iz);
      record(m, "AR", [&] { m.axial_resolution = profile_fwhm(depth_profile, grid.dz); });
      record(m, "LR", [&] { m.lateral_resolution = profile_fwhm(lateral_profile, grid.dx); });
      record(m, "PSL", [&] { m.psl_db = peak_sidelobe_level(lateral_profile); });
    }
    record(m, "SNR", [&] {
      m.snr_db = image_snr(image.values, roi_of(grid, target.signal_roi), roi_of(grid, target.noise_roi));
    });
    report.targets.push_back(std::move(m));
  }
  return report;
}

namespace {

std::string number_or_empty(const std::optional<double> &v, double scale = 1.0) {
  return v ? fmt::format("{:.6g}", *v * scale) : std::string{};
}

std::string join_errors(const std::vector<std::string> &errors) {
  std::string out;
  for (const auto &e : errors) {
    if (!out.empty()) out += "; ";
    for (char c : e) out += (c == ',' || c == '\n') ? ' ' : c;
  }
  return out;
}

}  // namespace

std::string to_key_value_text(const MetricsReport &report) {
  std::string out = fmt::format("method = {}\ntargets = {}\n", to_string(report.method), report.targets.size());
  for (std::size_t t = 0; t < report.targets.size(); ++t) {
    const auto &m = report.targets[t];
    const std::string key = fmt::format("target.{}", t);
    out += fmt::format("{}.label = {}\n", key, m.label);
    if (!m.group.empty()) out += fmt::format("{}.group = {}\n", key, m.group);
    if (m.peak) {
      out += fmt::format("{}.peak_x_mm = {:.6g}\n{}.peak_z_mm = {:.6g}\n", key, m.peak->x * 1e3, key,
                         m.peak->z * 1e3);
    }
    if (m.axial_resolution) out += fmt::format("{}.ar_mm = {}\n", key, number_or_empty(m.axial_resolution, 1e3));
    if (m.lateral_resolution) out += fmt::format("{}.lr_mm = {}\n", key, number_or_empty(m.lateral_resolution, 1e3));
    if (m.psl_db) out += fmt::format("{}.psl_db = {}\n", key, number_or_empty(m.psl_db));
    if (m.snr_db) out += fmt::format("{}.snr_db = {}\n", key, number_or_empty(m.snr_db));
    if (!m.errors.empty()) out += fmt::format("{}.errors = {}\n", key, join_errors(m.errors));
  }
  return out;
}

std::string metrics_csv_header() {
  return "image,method,target,group,peak_x_mm,peak_z_mm,ar_mm,lr_mm,psl_db,snr_db,error\n";
}

std::string metrics_csv_rows(const MetricsReport &report, const std::string &image_name) {
  std::string out;
  for (const auto &m : report.targets) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", image_name, to_string(report.method), m.label,
                       m.group, m.peak ? fmt::format("{:.6g}", m.peak->x * 1e3) : "",
                       m.peak ? fmt::format("{:.6g}", m.peak->z * 1e3) : "",
                       number_or_empty(m.axial_resolution, 1e3), number_or_empty(m.lateral_resolution, 1e3),
                       number_or_empty(m.psl_db), number_or_empty(m.snr_db), join_errors(m.errors));
  }
  return out;
}

}  // namespace aesynth
