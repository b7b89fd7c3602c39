#include "aesynth/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

namespace aesynth {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Format, "cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error(Errc::Format, "write failed: " + path.string());
}

}  // namespace

ChannelDataSet simulate_scenario(const Scenario &scenario, const RunOptions &options,
                                 const fs::path &base_dir) {
  scenario.validate();
  const SFieldGrid s_field = build_s_field(scenario, base_dir);
  AcquisitionSpec acquisition = scenario.acquisition;
  if (options.no_noise) acquisition.noise_power = 0.0;
  return simulate_dataset(s_field, transmit_events(scenario), scenario.geometry, scenario.medium,
                          scenario.pulse, scenario.pressure, acquisition,
                          options.seed.value_or(scenario.seed), scenario.max_depth(),
                          resolve_threads(options.threads));
}

std::string ChannelDigest::line() const {
  return fmt::format("events={} samples={} sample_rate={:.9g} crc32={:08x}", num_events, num_samples,
                     sample_rate, crc32);
}

ChannelDigest digest_of(const ChannelDataSet &data) {
  const std::vector<std::uint8_t> bytes = encode_channel_file(data);
  return {data.num_events, data.num_samples, data.sample_rate, crc32_of(bytes)};
}

ChannelDigest cmd_simulate(const fs::path &scenario_path, const fs::path &out_path,
                           const RunOptions &options) {
  const Scenario scenario = load_scenario(scenario_path);
  const ChannelDataSet data = simulate_scenario(scenario, options, scenario_path.parent_path());
  write_channel_file(out_path, data);
  return digest_of(data);
}

ImageMethod select_method(const ChannelDataSet &data, MethodChoice requested) {
  const int m = data.geometry.num_elements;
  const bool all_single = std::all_of(data.events.begin(), data.events.end(),
                                      [](const TransmitEvent &e) { return e.single_element() >= 0; });
  const bool all_full = std::all_of(data.events.begin(), data.events.end(),
                                    [m](const TransmitEvent &e) { return e.active_count() == m; });
  if (data.events.empty() || (!all_single && !all_full)) {
    throw Error(Errc::MethodMismatch, "channel data holds neither single-element nor full-aperture events");
  }
  if (requested == MethodChoice::SA && !all_single) {
    throw Error(Errc::MethodMismatch, "SA reconstruction requested on focused transmit events");
  }
  if (requested == MethodChoice::FUS && !all_full) {
    throw Error(Errc::MethodMismatch, "FUS reconstruction requested on single-element transmit events");
  }
  if (requested == MethodChoice::FUS) return ImageMethod::FUS;
  return all_single ? ImageMethod::SA : ImageMethod::FUS;
}

ReconstructSettings settings_for(const ChannelDataSet &data, const std::optional<Scenario> &scenario) {
  ReconstructSettings settings;
  if (scenario) {
    settings.grid = scenario->pixel_grid();
    settings.f_number = scenario->reconstruction.f_number;
    settings.weighting = scenario->reconstruction.weighting;
    settings.amplitude_correct = scenario->reconstruction.amplitude_correct;
    settings.window_alignment = scenario->reconstruction.window_alignment;
    settings.pressure = scenario->pressure;
    settings.pulse = scenario->pulse;
  } else {
    settings.grid = default_pixel_grid(data.geometry, data.medium, data.pulse, 50.0e-3);
  }
  return settings;
}

namespace {

Reconstruction reconstruct_impl(const ChannelDataSet &data, const ReconstructSettings &settings,
                                bool want_cf, bool want_cfpl) {
  Reconstruction out;
  const ImageMethod method = select_method(data, settings.method);
  if (method == ImageMethod::FUS) {
    if (want_cf || want_cfpl || settings.amplitude_correct) {
      throw Error(Errc::MethodMismatch,
                  "coherence weighting and amplitude correction need single-element (SA) channel data");
    }
    out.images.push_back({"fus", envelope(fus_line_map(data, settings.grid, data.medium))});
    return out;
  }

  DasOptions das;
  const PulseSpec pulse = settings.pulse.value_or(data.pulse);
  if (pulse.sample_rate != data.sample_rate) {
    throw Error(Errc::InvalidArgument, "scenario sample rate differs from the channel file");
  }
  das.window_samples = want_cfpl ? pulse.length_samples() : 0;
  das.alignment = settings.window_alignment;
  das.threads = settings.threads;
  DasResult result = das_sa(data, settings.grid, settings.f_number, das);
  const BeamformedImage base = envelope(std::move(result.image));
  out.images.push_back({"sa", base});
  if (want_cf) {
    CoherenceMap cf = coherence_factor(result.samples);
    out.images.push_back({"cf-sa", apply_weighting(base, cf)});
    out.maps.push_back({"cf_map", cf.grid, std::move(cf.values), true});
  }
  if (want_cfpl) {
    CoherenceMap cfpl = coherence_factor_pl(result.samples);
    out.images.push_back({"cfpl-sa", apply_weighting(base, cfpl)});
    out.maps.push_back({"cfpl_map", cfpl.grid, std::move(cfpl.values), true});
  }
  if (settings.amplitude_correct) {
    BeamMap beam = effective_beam_map(data.geometry, settings.grid, settings.f_number, data.medium,
                                      pulse, settings.pressure);
    out.images.push_back({"corrected-sa", amplitude_correct(base, beam)});
    out.maps.push_back({"beam_map", beam.grid, std::move(beam.values), false});
  }
  return out;
}

}  // namespace

Reconstruction reconstruct_dataset(const ChannelDataSet &data, const ReconstructSettings &settings) {
  return reconstruct_impl(data, settings, settings.weighting == Weighting::CF,
                          settings.weighting == Weighting::CFPL);
}

fs::path meta_path_for(const fs::path &image_csv) {
  fs::path p = image_csv;
  p.replace_extension(".meta.txt");
  return p;
}

void write_image_meta(const fs::path &path, const ImageMeta &meta) {
  std::string text = fmt::format("method = {}\nvariant = {}\n", to_string(meta.method), meta.variant);
  if (meta.f_number) text += fmt::format("f_number = {:.17g}\n", *meta.f_number);
  text += fmt::format(
      "origin_x_m = {:.17g}\norigin_z_m = {:.17g}\ndx_m = {:.17g}\ndz_m = {:.17g}\nnx = {}\nnz = {}\n",
      meta.grid.origin.x, meta.grid.origin.z, meta.grid.dx, meta.grid.dz, meta.grid.nx, meta.grid.nz);
  write_text(path, text);
}

ImageMeta read_image_meta(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Format, "missing image metadata " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const auto get = [&](const char *key) -> const std::string & {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(Errc::Format, fmt::format("{}: missing '{}'", path.string(), key));
    return it->second;
  };
  ImageMeta meta;
  const std::string &method = get("method");
  if (method == "SA") meta.method = ImageMethod::SA;
  else if (method == "FUS") meta.method = ImageMethod::FUS;
  else throw Error(Errc::Format, fmt::format("{}: unknown method '{}'", path.string(), method));
  meta.variant = get("variant");
  if (kv.count("f_number")) meta.f_number = std::stod(kv["f_number"]);
  try {
    meta.grid.origin = {std::stod(get("origin_x_m")), std::stod(get("origin_z_m"))};
    meta.grid.dx = std::stod(get("dx_m"));
    meta.grid.dz = std::stod(get("dz_m"));
    meta.grid.nx = std::stoi(get("nx"));
    meta.grid.nz = std::stoi(get("nz"));
  } catch (const std::logic_error &) {
    throw Error(Errc::Format, path.string() + ": malformed grid entry");
  }
  meta.grid.validate();
  return meta;
}

std::vector<fs::path> write_reconstruction(const Reconstruction &recon, const fs::path &prefix) {
  std::vector<fs::path> written;
  const auto with_suffix = [&prefix](const std::string &suffix) {
    return prefix.parent_path() / (prefix.filename().string() + suffix);
  };
  for (const NamedImage &named : recon.images) {
    const BeamformedImage &image = named.image;
    const fs::path csv = with_suffix("_" + named.variant + ".csv");
    write_image_csv(csv, image.values);
    written.push_back(csv);
    if (image.envelope) {
      const fs::path pgm = with_suffix("_" + named.variant + ".pgm");
      write_envelope_pgm(pgm, *image.envelope);
      written.push_back(pgm);
    }
    const fs::path meta = meta_path_for(csv);
    write_image_meta(meta, {image.method, named.variant, image.f_number, image.grid});
    written.push_back(meta);
  }
  for (const NamedMap &map : recon.maps) {
    const fs::path csv = with_suffix("_" + map.name + ".csv");
    write_image_csv(csv, map.values);
    written.push_back(csv);
    Field2D<double> shown = map.values;
    if (!map.unit_range) {
      double peak = 0.0;
      for (double v : shown.data()) peak = std::max(peak, v);
      if (peak > 0.0) {
        for (double &v : shown.data()) v /= peak;
      }
    }
    const fs::path pgm = with_suffix("_" + map.name + ".pgm");
    write_linear_pgm(pgm, shown);
    written.push_back(pgm);
  }
  return written;
}

std::vector<fs::path> cmd_reconstruct(const fs::path &channel_path, const fs::path &out_prefix,
                                      const ReconstructSettings &settings) {
  const ChannelDataSet data = read_channel_file(channel_path);
  return write_reconstruction(reconstruct_dataset(data, settings), out_prefix);
}

namespace {

struct GroupStats {
  std::string variant;
  std::string group;
  int targets = 0;
  std::optional<double> ar, lr, psl, snr;
};

class Mean {
 public:
  void add(const std::optional<double> &v) {
    if (v && std::isfinite(*v)) {
      sum_ += *v;
      ++n_;
    }
  }
  std::optional<double> value() const {
    return n_ ? std::optional<double>(sum_ / n_) : std::nullopt;
  }

 private:
  double sum_ = 0.0;
  int n_ = 0;
};

std::vector<GroupStats> aggregate(const std::vector<EvaluatedImage> &images) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::array<Mean, 4>> means;
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto &img : images) {
    for (const auto &t : img.report.targets) {
      if (t.group.empty()) continue;
      const auto key = std::make_pair(img.variant, t.group);
      if (!counts.count(key)) order.push_back(key);
      ++counts[key];
      auto &m = means[key];
      m[0].add(t.axial_resolution);
      m[1].add(t.lateral_resolution);
      m[2].add(t.psl_db);
      m[3].add(t.snr_db);
    }
  }
  std::vector<GroupStats> out;
  for (const auto &key : order) {
    const auto &m = means[key];
    out.push_back({key.first, key.second, counts[key], m[0].value(), m[1].value(), m[2].value(), m[3].value()});
  }
  return out;
}

const GroupStats *find_stats(const std::vector<GroupStats> &stats, const std::string &variant,
                             const std::string &group) {
  for (const auto &s : stats) {
    if (s.variant == variant && s.group == group) return &s;
  }
  return nullptr;
}

std::string fmt_opt(const std::optional<double> &v, double scale = 1.0) {
  return v ? fmt::format("{:.6g}", *v * scale) : std::string{};
}

}  // namespace

std::string group_summary_csv(const std::vector<EvaluatedImage> &images) {
  std::string out =
      "variant,group,targets,ar_mm,lr_mm,psl_db,snr_db,ar_vs_fus_pct,lr_vs_fus_pct,psl_vs_fus_db,snr_vs_fus_db\n";
  const auto stats = aggregate(images);
  for (const auto &s : stats) {
    std::string rel[4];
    if (s.variant == "fus") {
      for (auto &r : rel) r = "bm";
    } else if (const GroupStats *bm = find_stats(stats, "fus", s.group)) {
      const auto pct = [](const std::optional<double> &v, const std::optional<double> &b) {
        return (v && b && *b != 0.0) ? fmt::format("{:.3g}", 100.0 * (*v - *b) / *b) : std::string{};
      };
      const auto diff = [](const std::optional<double> &v, const std::optional<double> &b) {
        return (v && b) ? fmt::format("{:.3g}", *v - *b) : std::string{};
      };
      rel[0] = pct(s.ar, bm->ar);
      rel[1] = pct(s.lr, bm->lr);
      rel[2] = diff(s.psl, bm->psl);
      rel[3] = diff(s.snr, bm->snr);
    }
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", s.variant, s.group, s.targets, fmt_opt(s.ar, 1e3),
                       fmt_opt(s.lr, 1e3), fmt_opt(s.psl), fmt_opt(s.snr), rel[0], rel[1], rel[2], rel[3]);
  }
  return out;
}

EvaluateResult evaluate_images(const std::vector<fs::path> &image_csvs, const Scenario &scenario) {
  std::vector<EvaluatedImage> evaluated;
  EvaluateResult result;
  result.metrics_csv = metrics_csv_header();
  for (const fs::path &csv : image_csvs) {
    const ImageMeta meta = read_image_meta(meta_path_for(csv));
    BeamformedImage image;
    image.grid = meta.grid;
    image.values = read_image_csv(csv);
    if (image.values.nx() != meta.grid.nx || image.values.nz() != meta.grid.nz) {
      throw Error(Errc::GridMismatch, csv.string() + ": image size differs from its metadata grid");
    }
    image.method = meta.method;
    image.f_number = meta.f_number;
    image.coverage = Field2D<int>(meta.grid.nx, meta.grid.nz, 0);
    image = envelope(std::move(image));
    EvaluatedImage e{csv.stem().string(), meta.variant, evaluate_targets(image, scenario.targets)};
    result.metrics_csv += metrics_csv_rows(e.report, e.name);
    evaluated.push_back(std::move(e));
  }
  result.groups_csv = group_summary_csv(evaluated);
  return result;
}

EvaluateResult cmd_evaluate(const std::vector<fs::path> &image_csvs, const fs::path &scenario_path,
                            const fs::path &out_csv) {
  const EvaluateResult result = evaluate_images(image_csvs, load_scenario(scenario_path));
  write_text(out_csv, result.metrics_csv);
  fs::path groups = out_csv;
  groups.replace_filename(out_csv.stem().string() + "_groups.csv");
  write_text(groups, result.groups_csv);
  return result;
}

namespace {

// Desk-scale acquisition: k = 16 averages instead of thousands, with the
// noise power scaled so that FUS stays well above SA in image SNR.
Scenario suite_base(TransmitKind transmit, std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.acquisition = {16, 0.1, 0.1, 1.0};
  s.transmit.kind = transmit;
  s.transmit.focal_depth = kSuiteFocalDepth;
  s.reconstruction.f_number = 1.5;
  s.reconstruction.weighting = Weighting::CFPL;
  s.reconstruction.amplitude_correct = true;
  return s;
}

// Every element-to-source distance stays below 40 mm for the bundled
// depths, so this band holds noise only.
constexpr Rect kBackground{-9.5e-3, 9.5e-3, 41.0e-3, 49.0e-3};

std::string group_of(double depth) {
  return std::abs(depth - kSuiteFocalDepth) < 1e-6 ? "on-focus" : "off-focus";
}

}  // namespace

std::array<Point, 2> saline_electrodes(double depth) {
  return {Point{-3.0e-3, depth - 1.0e-3}, Point{3.0e-3, depth + 1.0e-3}};
}

Scenario saline_scenario(double depth, TransmitKind transmit, std::uint64_t seed) {
  Scenario s = suite_base(transmit, seed);
  s.name = fmt::format("saline_{:.0f}mm", depth * 1e3);
  const std::string group = group_of(depth);
  for (const Point &p : saline_electrodes(depth)) {
    s.s_field.points.push_back({p, 1.0});
    TargetSpec t;
    t.label = fmt::format("electrode_{}", p.x < 0 ? "L" : "R");
    t.group = group;
    t.expected = p;
    t.signal_roi = {p.x - 0.5e-3, p.x + 0.5e-3, p.z - 0.4e-3, p.z + 0.4e-3};
    t.noise_roi = kBackground;
    s.targets.push_back(t);
  }
  return s;
}

Scenario nerve_scenario(double depth, TransmitKind transmit, std::uint64_t seed) {
  Scenario s = suite_base(transmit, seed);
  s.name = fmt::format("nerve_{:.0f}mm", depth * 1e3);
  s.s_field.discs.push_back({{0.0, depth}, 1.0e-3, 1.0});
  TargetSpec t;
  t.label = "nerve";
  t.group = group_of(depth);
  t.expected = {0.0, depth};
  t.signal_roi = {-1.0e-3, 1.0e-3, depth - 1.0e-3, depth + 1.0e-3};
  t.noise_roi = kBackground;
  s.targets.push_back(t);
  return s;
}

SuiteResult paper_suite(const fs::path &out_dir, std::uint64_t seed, bool no_noise, unsigned threads) {
  fs::create_directories(out_dir);
  threads = resolve_threads(threads);
  SuiteResult result;
  std::string metrics = metrics_csv_header();
  std::string checksums;
  std::string summary;
  const double half_wavelength = wavelength(Medium{}, PulseSpec{}) / 2.0;

  struct Phantom {
    const char *name;
    Scenario (*make)(double, TransmitKind, std::uint64_t);
  };
  for (const Phantom &phantom : {Phantom{"saline", saline_scenario}, Phantom{"nerve", nerve_scenario}}) {
    std::vector<EvaluatedImage> evaluated;
    for (double depth : kSuiteDepths) {
      for (TransmitKind kind : {TransmitKind::FUS, TransmitKind::SA}) {
        const Scenario scenario = phantom.make(depth, kind, seed);
        const std::string tag = kind == TransmitKind::SA ? "sa" : "fus";
        const std::string case_name = fmt::format("{}_{}", scenario.name, tag);
        try {
          const ChannelDataSet data = simulate_scenario(scenario, {seed, no_noise, threads});
          const fs::path channel_file = out_dir / (case_name + ".aecd");
          write_channel_file(channel_file, data);
          checksums += fmt::format("{} {}\n", channel_file.filename().string(), digest_of(data).line());

          ReconstructSettings settings = settings_for(data, scenario);
          settings.threads = threads;
          const bool sa = kind == TransmitKind::SA;
          if (!sa) settings.amplitude_correct = false;
          const Reconstruction recon = reconstruct_impl(data, settings, sa, sa);
          write_reconstruction(recon, out_dir / scenario.name);
          for (const NamedImage &named : recon.images) {
            EvaluatedImage e{fmt::format("{}_{}", scenario.name, named.variant), named.variant,
                             evaluate_targets(named.image, scenario.targets)};
            metrics += metrics_csv_rows(e.report, e.name);
            if (no_noise && phantom.make == saline_scenario &&
                (named.variant == "sa" || (named.variant == "fus" && group_of(depth) == "on-focus"))) {
              for (const TargetMetrics &t : e.report.targets) {
                const auto electrodes = saline_electrodes(depth);
                const Point expected = t.label == "electrode_L" ? electrodes[0] : electrodes[1];
                const double err = t.peak ? std::hypot(t.peak->x - expected.x, t.peak->z - expected.z) : HUGE_VAL;
                if (!(err <= half_wavelength)) {
                  result.failures.push_back(fmt::format("{} {}: peak {:.3f} mm from truth (limit {:.3f} mm)",
                                                        e.name, t.label, err * 1e3, half_wavelength * 1e3));
                }
              }
            }
            evaluated.push_back(std::move(e));
          }
        } catch (const Error &err) {
          result.failures.push_back(fmt::format("{}: {} ({})", case_name, to_string(err.code()), err.what()));
        }
      }
    }
    const std::string groups = group_summary_csv(evaluated);
    write_text(out_dir / fmt::format("groups_{}.csv", phantom.name), groups);
    summary += fmt::format("== {}\n{}", phantom.name, groups);

    if (!no_noise) {
      const auto stats = aggregate(evaluated);
      const auto check = [&](const std::string &group, const char *what, bool ok) {
        if (!ok) result.failures.push_back(fmt::format("{} {}: {}", phantom.name, group, what));
      };
      for (const char *group : {"on-focus", "off-focus"}) {
        const GroupStats *fus = find_stats(stats, "fus", group);
        const GroupStats *sa = find_stats(stats, "sa", group);
        const GroupStats *cf = find_stats(stats, "cf-sa", group);
        const GroupStats *cfpl = find_stats(stats, "cfpl-sa", group);
        if (!fus || !sa || !cf || !cfpl || !fus->snr || !sa->snr || !cf->snr || !cfpl->snr || !sa->lr || !cf->lr) {
          check(group, "metrics missing", false);
          continue;
        }
        if (std::string(group) == "on-focus") check(group, "SNR(SA) < SNR(FUS)", *sa->snr < *fus->snr);
        check(group, "SNR(CF-SA) > SNR(SA)", *cf->snr > *sa->snr);
        check(group, "SNR(CFPL-SA) > SNR(SA)", *cfpl->snr > *sa->snr);
        check(group, "SNR(CF-SA) > SNR(FUS)", *cf->snr > *fus->snr);
        check(group, "LR(CF-SA) <= LR(SA)", *cf->lr <= *sa->lr);
      }
    }
  }
  write_text(out_dir / "metrics.csv", metrics);
  write_text(out_dir / "checksums.txt", checksums);
  summary += result.ok() ? "all checks passed\n" : "FAILED checks:\n";
  for (const auto &f : result.failures) summary += "  " + f + "\n";
  write_text(out_dir / "summary.txt", summary);
  result.summary = summary;
  return result;
}

}  // namespace aesynth
