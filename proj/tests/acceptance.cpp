// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "aesynth/pipeline.hpp"

using namespace aesynth;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double db(double ratio) { return 10.0 * std::log10(ratio); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

const Medium kMedium{};
const PulseSpec kPulse{};
const double kHalfWavelength = wavelength(kMedium, kPulse) / 2.0;

SFieldGrid point_field(const std::vector<std::pair<Point, double>> &sources) {
  // One cell per source holding strength / dA on a common 0.1 mm lattice.
  double x0 = sources.front().first.x, z0 = sources.front().first.z, x1 = x0, z1 = z0;
  for (const auto &[p, _] : sources) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    z0 = std::min(z0, p.z);
    z1 = std::max(z1, p.z);
  }
  SFieldGrid s;
  s.origin = {x0, z0};
  s.dx = s.dz = 0.1e-3;
  s.values = Field2D<double>(static_cast<int>(std::lround((x1 - x0) / s.dx)) + 1,
                             static_cast<int>(std::lround((z1 - z0) / s.dz)) + 1);
  for (const auto &[p, strength] : sources) {
    s.values(static_cast<int>(std::lround((p.x - x0) / s.dx)), static_cast<int>(std::lround((p.z - z0) / s.dz))) +=
        strength / (s.dx * s.dz);
  }
  return s;
}

ChannelDataSet simulate(const SFieldGrid &s, const std::vector<TransmitEvent> &events, const ArrayGeometry &g,
                        const AcquisitionSpec &acq, std::uint64_t seed, double max_depth = 50e-3) {
  return simulate_dataset(s, events, g, kMedium, kPulse, PressureModel{}, acq, seed, max_depth, 1);
}

Peak global_peak(const BeamformedImage &img) {
  return peak_pixel(*img.envelope, img.grid, {0, img.grid.nx, 0, img.grid.nz});
}

// ---------------------------------------------------------------------------

Outcome noise_law() {
  const auto start = Clock::now();
  std::string detail;
  bool ok = true;
  for (int k : {1, 4, 16, 64}) {
    std::vector<double> trace(100'000, 0.0);
    Rng rng(100 + k);
    add_thermal_noise(trace, 1.0, k, rng);
    const double mean = std::accumulate(trace.begin(), trace.end(), 0.0) / trace.size();
    double var = 0.0;
    for (double v : trace) var += (v - mean) * (v - mean);
    var /= trace.size();
    const double rel = std::abs(var * k - 1.0);
    ok = ok && rel <= 0.10;
    detail += fmt::format("k={} var*k={:.4f}; ", k, var * k);
  }
  const double t = seconds_since(start);
  ok = ok && t < 5.0;
  return {ok, detail + fmt::format("{:.2f} s", t)};
}

// SA and FUS image SNR at a point source, noise from (noisy - clean) residuals.
struct SnrRatio {
  double sa_snr = 0.0, fus_snr = 0.0;
  int sa_aperture = 0;
  double ratio_db() const { return db(sa_snr / fus_snr); }
};

SnrRatio snr_ratio(int sa_k, int fus_k, int trials) {
  const ArrayGeometry g{16, 0.315e-3, 0.0};
  const double depth = 20e-3;
  const int m_sa = 8;
  const double f_number = depth / (m_sa * g.pitch);
  const SFieldGrid s = point_field({{{0.0, depth}, 1.0}});
  const double max_depth = 40e-3;

  // Pixels whose sub-aperture holds exactly m_sa elements; the source sits at (10, 11).
  const PixelGrid sa_grid{{-1.0e-3, depth - 1.1e-3}, 0.1e-3, 0.1e-3, 21, 23};
  const double line[] = {0.0};
  const auto fus_events = focused_sequence(g, kMedium, depth, line);
  const PixelGrid fus_grid{{0.0, 5e-3}, 0.1e-3, 0.1e-3, 1, 351};
  const int fus_source = 150;

  const auto sa_events = single_element_sequence(g);
  const auto sa_clean = das_sa(simulate(s, sa_events, g, {}, 0, max_depth), sa_grid, f_number);
  const auto fus_clean = fus_line_map(simulate(s, fus_events, g, {}, 0, max_depth), fus_grid, kMedium);

  SnrRatio out;
  out.sa_aperture = sa_clean.samples.count(sa_clean.samples.pixel_index(10, 11));
  for (std::size_t p = 0; p < sa_grid.size(); ++p) {
    if (sa_clean.samples.count(p) != m_sa) out.sa_aperture = -1;
  }

  double sa_sum = 0.0, sa_sq = 0.0, fus_sum = 0.0, fus_sq = 0.0;
  std::size_t sa_n = 0, fus_n = 0;
  for (int t = 0; t < trials; ++t) {
    const auto sa = das_sa(simulate(s, sa_events, g, {sa_k, 1.0, 0.1, 1.0}, 1000 + t, max_depth), sa_grid, f_number);
    for (std::size_t p = 0; p < sa_grid.size(); ++p) {
      const double r = sa.image.values.data()[p] - sa_clean.image.values.data()[p];
      sa_sum += r;
      sa_sq += r * r;
      ++sa_n;
    }
    const auto fus = fus_line_map(simulate(s, fus_events, g, {fus_k, 1.0, 0.1, 1.0}, 5000 + t, max_depth),
                                  fus_grid, kMedium);
    for (std::size_t p = 0; p < fus_grid.size(); ++p) {
      const double r = fus.values.data()[p] - fus_clean.values.data()[p];
      fus_sum += r;
      fus_sq += r * r;
      ++fus_n;
    }
  }
  const double sa_var = sa_sq / sa_n - std::pow(sa_sum / sa_n, 2);
  const double fus_var = fus_sq / fus_n - std::pow(fus_sum / fus_n, 2);
  out.sa_snr = std::pow(sa_clean.image.values(10, 11), 2) / sa_var;
  out.fus_snr = std::pow(fus_clean.values(0, fus_source), 2) / fus_var;
  return out;
}

Outcome snr_suppression() {
  const auto start = Clock::now();
  const SnrRatio r = snr_ratio(10, 10, 200);
  const double t = seconds_since(start);
  const double expected = db(8.0 / (16.0 * 16.0));
  const bool ok = r.sa_aperture == 8 && std::abs(r.ratio_db() - expected) <= 1.5 && t < 60.0;
  return {ok, fmt::format("M_sa={} SNR_SA/SNR_F={:.2f} dB (expected {:.2f} dB), {:.1f} s", r.sa_aperture,
                          r.ratio_db(), expected, t)};
}

Outcome averaging_compensation() {
  const int k = 10;
  const int k2 = 16 * 16 / 8 * k;
  const SnrRatio r = snr_ratio(k2, k, 200);
  return {std::abs(r.ratio_db()) <= 1.0,
          fmt::format("k_SA={} k_FUS={} SNR_SA/SNR_F={:.2f} dB", k2, k, r.ratio_db())};
}

// Noiseless point at (0, depth) on the default 64-element array and grid.
struct PointImages {
  BeamformedImage sa;
  BeamformedImage fus;
};

PointImages point_images(double depth, bool with_sa) {
  const ArrayGeometry g{};
  const PixelGrid grid = default_pixel_grid(g, kMedium, kPulse, 50e-3);
  const SFieldGrid s = point_field({{{0.0, depth}, 1.0}});
  PointImages out;
  if (with_sa) out.sa = envelope(das_sa(simulate(s, single_element_sequence(g), g, {}, 1), grid, 1.5).image);
  const auto centers = element_line_centers(g);
  out.fus = envelope(fus_line_map(simulate(s, focused_sequence(g, kMedium, kSuiteFocalDepth, centers), g, {}, 1),
                                  grid, kMedium));
  return out;
}

std::optional<double> lateral_fwhm(const BeamformedImage &img, double depth) {
  const TargetSpec t{"pt", {0.0, depth}, {-2e-3, 2e-3, depth - 2e-3, depth + 2e-3}, {-9e-3, 9e-3, 46e-3, 49e-3}, ""};
  return evaluate_targets(img, {t}).targets.at(0).lateral_resolution;
}

std::map<double, PointImages> g_point_images;

Outcome localization() {
  const auto start = Clock::now();
  for (double d : {15e-3, 25e-3, 35e-3}) g_point_images[d] = point_images(d, true);
  const double t = seconds_since(start);
  bool ok = t < 120.0;
  std::string detail;
  for (double d : {15e-3, 25e-3, 35e-3}) {
    const Peak sa = global_peak(g_point_images[d].sa);
    const Peak fus = global_peak(g_point_images[d].fus);
    const double sa_err = std::hypot(sa.x, sa.z - d);
    const double fus_err = std::hypot(fus.x, fus.z - d);
    const bool fus_within = fus_err <= kHalfWavelength;
    ok = ok && sa_err <= kHalfWavelength && (d == 25e-3 ? fus_within : !fus_within);
    detail += fmt::format("{:.0f} mm: SA err {:.3f} mm, FUS err {:.3f} mm; ", d * 1e3, sa_err * 1e3, fus_err * 1e3);
  }
  return {ok, detail + fmt::format("limit {:.3f} mm, {:.1f} s", kHalfWavelength * 1e3, t)};
}

Outcome depth_uniform_resolution() {
  std::vector<double> sa_lr;
  for (double d : {15e-3, 25e-3, 35e-3}) {
    if (!g_point_images.count(d)) g_point_images[d] = point_images(d, true);
    const auto lr = lateral_fwhm(g_point_images[d].sa, d);
    if (!lr) return {false, fmt::format("SA FWHM undefined at {:.0f} mm", d * 1e3)};
    sa_lr.push_back(*lr);
  }
  const double mean = (sa_lr[0] + sa_lr[1] + sa_lr[2]) / 3.0;
  const double spread = (*std::max_element(sa_lr.begin(), sa_lr.end()) -
                         *std::min_element(sa_lr.begin(), sa_lr.end())) / mean;
  const PointImages at_focus = point_images(kSuiteFocalDepth, false);
  const auto fus_focus = lateral_fwhm(at_focus.fus, kSuiteFocalDepth);
  const auto fus_deep = lateral_fwhm(g_point_images[35e-3].fus, 35e-3);
  if (!fus_focus || !fus_deep) return {false, "FUS FWHM undefined"};
  const bool ok = spread <= 0.25 && *fus_deep >= 2.0 * *fus_focus;
  return {ok, fmt::format("SA LR {:.3f}/{:.3f}/{:.3f} mm, spread {:.1f}%; FUS LR {:.3f} mm at focus, {:.3f} mm at "
                          "35 mm ({:.2f}x)",
                          sa_lr[0] * 1e3, sa_lr[1] * 1e3, sa_lr[2] * 1e3, spread * 100, *fus_focus * 1e3,
                          *fus_deep * 1e3, *fus_deep / *fus_focus)};
}

Outcome coherence_bounds() {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> normal;
  std::uniform_int_distribution<int> size(1, 128);
  bool bounded = true, identical = true, one_hot = true;
  for (int trial = 0; trial < 10'000; ++trial) {
    const int m = size(rng);
    std::vector<float> v(m);
    for (auto &x : v) x = normal(rng) + (trial % 3 == 0 ? 2.0f : 0.0f);
    const double cf = coherence_of(v, m);
    bounded = bounded && cf >= 0.0 && cf <= 1.0;
    std::fill(v.begin(), v.end(), normal(rng));
    if (v[0] != 0.0f) identical = identical && coherence_of(v, m) == 1.0;
    std::fill(v.begin(), v.end(), 0.0f);
    v[trial % m] = normal(rng) + 3.0f;
    one_hot = one_hot && std::abs(coherence_of(v, m) * m - 1.0) <= 1e-14;
  }

  // CFPL with a one-sample window against CF through the full DAS path.
  const ArrayGeometry g{};
  ChannelDataSet data;
  data.geometry = g;
  data.events = single_element_sequence(g);
  data.num_events = g.num_elements;
  data.num_samples = 1400;
  data.sample_rate = kPulse.sample_rate;
  data.samples.resize(static_cast<std::size_t>(data.num_events) * data.num_samples);
  for (auto &x : data.samples) x = normal(rng);
  const auto das = das_sa(data, default_pixel_grid(g, kMedium, kPulse, 50e-3), 1.5, {1, WindowAlignment::Causal, 1});
  const bool bitwise = coherence_factor_pl(das.samples).values == coherence_factor(das.samples).values;
  for (double v : coherence_factor_pl(das.samples).values.data()) bounded = bounded && v >= 0.0 && v <= 1.0;

  return {bounded && identical && one_hot && bitwise,
          fmt::format("bounded={} identical=1:{} one-hot=1/M:{} CFPL(P=1)==CF bitwise:{}", bounded, identical,
                      one_hot, bitwise)};
}

Outcome coherence_recovery() {
  const ArrayGeometry g{};
  const PixelGrid grid = default_pixel_grid(g, kMedium, kPulse, 50e-3);
  const Point plus{-4e-3, 22e-3}, minus{4e-3, 30e-3};
  // 81 x 81 cells at 0.1 mm with the two sources on opposite corners.
  SFieldGrid s{plus, 0.1e-3, 0.1e-3, Field2D<double>(81, 81, 0.0)};
  s.values(0, 0) = 1.0 / (s.dx * s.dz);
  s.values(80, 80) = -1.0 / (s.dx * s.dz);
  const Rect noise_roi{-9.5e-3, 9.5e-3, 36e-3, 46e-3};
  const std::vector<TargetSpec> targets{
      {"S+", plus, {plus.x - 0.5e-3, plus.x + 0.5e-3, plus.z - 0.5e-3, plus.z + 0.5e-3}, noise_roi, ""},
      {"S-", minus, {minus.x - 0.5e-3, minus.x + 0.5e-3, minus.z - 0.5e-3, minus.z + 0.5e-3}, noise_roi, ""}};
  const AcquisitionSpec acq{16, 0.1, 0.1, 1.0};
  const auto fus_events = focused_sequence(g, kMedium, kSuiteFocalDepth, element_line_centers(g));
  const auto sa_events = single_element_sequence(g);

  const auto mean_of = [](const MetricsReport &r, auto field) {
    double sum = 0.0;
    for (const auto &t : r.targets) sum += *(t.*field);
    return sum / r.targets.size();
  };

  int order_ok = 0, beats_fus = 0;
  double lr_sa = 0.0, lr_cf = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto das = das_sa(simulate(s, sa_events, g, acq, seed), grid, 1.5,
                            {kPulse.length_samples(), WindowAlignment::Causal, 1});
    const BeamformedImage sa = envelope(das.image);
    const BeamformedImage cf = apply_weighting(sa, coherence_factor(das.samples));
    const BeamformedImage cfpl = apply_weighting(sa, coherence_factor_pl(das.samples));
    const BeamformedImage fus = envelope(fus_line_map(simulate(s, fus_events, g, acq, seed), grid, kMedium));
    const auto r_sa = evaluate_targets(sa, targets), r_cf = evaluate_targets(cf, targets),
               r_cfpl = evaluate_targets(cfpl, targets), r_fus = evaluate_targets(fus, targets);
    for (const auto *r : {&r_sa, &r_cf, &r_cfpl, &r_fus})
      for (const auto &t : r->targets)
        if (!t.snr_db || !t.lateral_resolution) return {false, fmt::format("seed {}: metrics missing", seed)};
    const double snr_sa = mean_of(r_sa, &TargetMetrics::snr_db), snr_cf = mean_of(r_cf, &TargetMetrics::snr_db),
                 snr_cfpl = mean_of(r_cfpl, &TargetMetrics::snr_db), snr_fus = mean_of(r_fus, &TargetMetrics::snr_db);
    order_ok += snr_cfpl > snr_cf && snr_cf > snr_sa;
    beats_fus += snr_cf > snr_fus;
    lr_sa += mean_of(r_sa, &TargetMetrics::lateral_resolution);
    lr_cf += mean_of(r_cf, &TargetMetrics::lateral_resolution);
    detail += fmt::format("seed {}: FUS {:.1f} SA {:.1f} CF {:.1f} CFPL {:.1f} dB; ", seed, snr_fus, snr_sa, snr_cf,
                          snr_cfpl);
  }
  const bool ok = order_ok >= 4 && beats_fus >= 3 && lr_cf <= lr_sa;
  return {ok, detail + fmt::format("CFPL>CF>SA in {}/5, CF>FUS in {}/5, mean LR SA {:.3f} mm CF {:.3f} mm", order_ok,
                                   beats_fus, lr_sa / 5 * 1e3, lr_cf / 5 * 1e3)};
}

Outcome amplitude_correction() {
  const ArrayGeometry g{};
  const PixelGrid grid = default_pixel_grid(g, kMedium, kPulse, 50e-3);
  const Point shallow{0.0, 15e-3}, deep{0.0, 35e-3};
  const SFieldGrid s = point_field({{shallow, 1.0}, {deep, 1.0}});
  const BeamformedImage sa = envelope(das_sa(simulate(s, single_element_sequence(g), g, {}, 1), grid, 1.5).image);
  const BeamformedImage corrected =
      amplitude_correct(sa, effective_beam_map(g, grid, 1.5, kMedium, kPulse, PressureModel{}));
  const auto peak_near = [&grid](const BeamformedImage &img, Point p) {
    return peak_pixel(*img.envelope, grid, roi_of(grid, {p.x - 1e-3, p.x + 1e-3, p.z - 1e-3, p.z + 1e-3})).value;
  };
  const double before = peak_near(sa, deep) / peak_near(sa, shallow);
  const double after = peak_near(corrected, deep) / peak_near(corrected, shallow);
  return {before >= 1.8 && after >= 0.8 && after <= 1.25,
          fmt::format("peak ratio 35/15 mm: {:.3f} before, {:.3f} after correction", before, after)};
}

Outcome metric_units() {
  const double fwhm = profile_fwhm(std::vector<double>{0, 0.5, 1, 0.5, 0}, 1.0);
  const double psl = peak_sidelobe_level(std::vector<double>{0.1, 0.0, 1.0, 0.0});
  Field2D<double> f(4, 2);
  for (int iz = 0; iz < 2; ++iz) {
    f(0, iz) = 2.0;
    f(1, iz) = -2.0;
    f(2, iz) = iz ? 1.0 : -1.0;
    f(3, iz) = iz ? -1.0 : 1.0;
  }
  const double snr = image_snr(f, {0, 2, 0, 2}, {2, 4, 0, 2});
  const bool ok = fwhm == 2.0 && psl == -20.0 && std::abs(snr - 6.02) <= 0.05;
  return {ok, fmt::format("FWHM {} PSL {} dB SNR {:.4f} dB", fwhm, psl, snr)};
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string &cli, const fs::path &work) {
  const auto start = Clock::now();
  fs::remove_all(work);
  const auto run = [&](const std::string &name, int threads) {
    const fs::path dir = work / name;
    const std::string cmd = fmt::format("\"{}\" paper-suite --seed 7 --threads {} --out \"{}\" > \"{}\" 2>&1", cli,
                                        threads, dir.string(), (work / (name + ".log")).string());
    fs::create_directories(work);
    const int status = std::system(cmd.c_str());
    return std::pair{dir, status};
  };
  const auto [a, sa] = run("first", 1);
  const auto [b, sb] = run("second", 1);
  const auto [c, sc] = run("threads8", 8);
  std::vector<std::string> compared, differing;
  for (const auto &entry : fs::directory_iterator(a)) {
    const fs::path name = entry.path().filename();
    if (name.extension() != ".csv" && name != "checksums.txt") continue;
    compared.push_back(name.string());
    const std::string ref = slurp(entry.path());
    if (ref != slurp(b / name) || ref != slurp(c / name)) differing.push_back(name.string());
  }
  const bool have_checksums = fs::exists(a / "checksums.txt") && !slurp(a / "checksums.txt").empty();
  const bool ok = differing.empty() && compared.size() > 1 && have_checksums && sa == sb && sa == sc;
  std::string detail = fmt::format("{} files compared across 3 runs, {} differ; exit statuses {}/{}/{}; {:.0f} s",
                                   compared.size(), differing.size(), sa, sb, sc, seconds_since(start));
  for (const auto &d : differing) detail += " " + d;
  return {ok, detail};
}

Outcome sham() {
  const ArrayGeometry g{};
  const PixelGrid grid = default_pixel_grid(g, kMedium, kPulse, 50e-3);
  const SFieldGrid zero{{0.0, 10e-3}, 0.1e-3, 0.1e-3, Field2D<double>(1, 1, 0.0)};
  std::vector<double> background;
  std::string detail;
  bool cf_ok = true;
  for (int k : {8, 32, 128}) {
    const auto das = das_sa(simulate(zero, single_element_sequence(g), g, {k, 1.0, 0.1, 1.0}, 11), grid, 1.5);
    const BeamformedImage img = envelope(das.image);
    const CoherenceMap cf = coherence_factor(das.samples);
    double env_sum = 0.0, cf_sum = 0.0, bound_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      env_sum += img.envelope->data()[p];
      const int valid = das.samples.valid_count[p];
      if (valid == 0) continue;
      cf_sum += cf.values.data()[p];
      bound_sum += 2.0 / valid;
      ++n;
    }
    background.push_back(env_sum / grid.size());
    const double mean_cf = cf_sum / n, bound = bound_sum / n;
    cf_ok = cf_ok && mean_cf <= bound;
    detail += fmt::format("k={}: mean envelope {:.4g}, mean CF {:.4f} (bound {:.4f}); ", k, background.back(),
                          mean_cf, bound);
  }
  const bool ok = cf_ok && background[0] > background[1] && background[1] > background[2];
  return {ok, detail};
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"acceptance criteria"};
  std::string cli;
  std::string work = "acceptance_work";
  app.add_option("--cli", cli, "path to the aesynth executable")->required();
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"noise averaging law", noise_law},
      {"SNR suppression ratio", snr_suppression},
      {"averaging compensation", averaging_compensation},
      {"localization", localization},
      {"depth-uniform resolution", depth_uniform_resolution},
      {"coherence bounds and limits", coherence_bounds},
      {"coherence-weighting SNR recovery", coherence_recovery},
      {"amplitude correction", amplitude_correction},
      {"metric unit values", metric_units},
      {"determinism", [&] { return determinism(cli, work); }},
      {"sham scenario", sham},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
