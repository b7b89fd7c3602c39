#include "aesynth/scenario.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

namespace aesynth {

using nlohmann::json;

const char *to_string(Weighting weighting) {
  switch (weighting) {
    case Weighting::None: return "none";
    case Weighting::CF: return "cf";
    case Weighting::CFPL: return "cfpl";
  }
  return "none";
}

Weighting parse_weighting(const std::string &text) {
  if (text == "none") return Weighting::None;
  if (text == "cf") return Weighting::CF;
  if (text == "cfpl") return Weighting::CFPL;
  throw Error(Errc::InvalidArgument, "unknown weighting '" + text + "' (expected none, cf or cfpl)");
}

namespace {

[[noreturn]] void schema_error(const std::string &path, const std::string &what) {
  throw Error(Errc::Schema, fmt::format("{}: {}", path.empty() ? "<root>" : path, what));
}

// Millimetre value that reads back to exactly `metres`.
double to_mm(double metres) {
  double mm = metres * 1e3;
  for (int step = 0; step < 8 && mm * 1e-3 != metres; ++step) {
    mm = std::nextafter(mm, (mm * 1e-3 < metres) ? HUGE_VAL : -HUGE_VAL);
  }
  return mm;
}

/// Typed access to one JSON object. Every key read is remembered so that
/// finish() can reject the rest.
class Reader {
 public:
  Reader(const json &node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) schema_error(path_, "expected an object");
  }

  std::string key_path(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string &key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  double number(const std::string &key, double fallback) {
    return has(key) ? required_number(key) : fallback;
  }
  double required_number(const std::string &key) {
    const json &v = required(key);
    if (!v.is_number()) schema_error(key_path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_error(key_path(key), "expected a finite number");
    return d;
  }
  double mm(const std::string &key, double fallback_m) {
    return has(key) ? required_number(key) * 1e-3 : fallback_m;
  }
  double required_mm(const std::string &key) { return required_number(key) * 1e-3; }

  long long integer(const std::string &key, long long fallback) {
    if (!has(key)) return fallback;
    const json &v = node_.at(key);
    if (!v.is_number_integer()) schema_error(key_path(key), "expected an integer");
    return v.get<long long>();
  }

  std::uint64_t required_unsigned(const std::string &key) {
    const json &v = required(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      schema_error(key_path(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string &key, bool fallback) {
    if (!has(key)) return fallback;
    const json &v = node_.at(key);
    if (!v.is_boolean()) schema_error(key_path(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string &key, const std::string &fallback) {
    if (!has(key)) return fallback;
    const json &v = node_.at(key);
    if (!v.is_string()) schema_error(key_path(key), "expected a string");
    return v.get<std::string>();
  }

  template <typename Enum>
  Enum choice(const std::string &key, Enum fallback,
              std::initializer_list<std::pair<const char *, Enum>> options) {
    if (!has(key)) return fallback;
    const std::string text = string(key, "");
    std::string expected;
    for (const auto &[name, value] : options) {
      if (text == name) return value;
      expected += expected.empty() ? name : std::string(", ") + name;
    }
    schema_error(key_path(key), fmt::format("unknown value '{}' (expected one of: {})", text, expected));
  }

  std::vector<double> mm_list(const std::string &key, std::size_t exact_size = 0) {
    const json &v = required(key);
    if (!v.is_array()) schema_error(key_path(key), "expected an array");
    if (exact_size && v.size() != exact_size) {
      schema_error(key_path(key), fmt::format("expected {} values", exact_size));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) schema_error(fmt::format("{}[{}]", key_path(key), i), "expected a number");
      out.push_back(v[i].get<double>() * 1e-3);
    }
    return out;
  }

  Reader object(const std::string &key) {
    seen_.insert(key);
    return Reader(node_.contains(key) ? node_.at(key) : empty_object(), key_path(key));
  }

  const json &array(const std::string &key) {
    if (!has(key)) return empty_array();
    const json &v = node_.at(key);
    if (!v.is_array()) schema_error(key_path(key), "expected an array");
    return v;
  }

  void finish() const {
    for (const auto &item : node_.items()) {
      if (!seen_.count(item.key())) schema_error(key_path(item.key()), "unknown key");
    }
  }

 private:
  const json &required(const std::string &key) {
    if (!has(key)) schema_error(key_path(key), "missing required field");
    return node_.at(key);
  }
  static const json &empty_object() {
    static const json e = json::object();
    return e;
  }
  static const json &empty_array() {
    static const json e = json::array();
    return e;
  }

  const json &node_;
  std::string path_;
  std::set<std::string> seen_;
};

Rect read_rect(Reader &r, const std::string &key) {
  const auto v = r.mm_list(key, 4);
  return {v[0], v[1], v[2], v[3]};
}

json rect_json(const Rect &rect) {
  return json::array({to_mm(rect.x0), to_mm(rect.x1), to_mm(rect.z0), to_mm(rect.z1)});
}

PixelGrid read_grid(Reader r) {
  PixelGrid g;
  const auto origin = r.mm_list("origin_mm", 2);
  g.origin = {origin[0], origin[1]};
  g.dx = r.required_mm("dx_mm");
  g.dz = r.required_mm("dz_mm");
  g.nx = static_cast<int>(r.integer("nx", 0));
  g.nz = static_cast<int>(r.integer("nz", 0));
  r.finish();
  return g;
}

}  // namespace

Scenario parse_scenario(const std::string &json_text) {
  json root;
  try {
    root = json::parse(json_text, nullptr, true, true);
  } catch (const json::parse_error &e) {
    throw Error(Errc::Schema, std::string("scenario is not valid JSON: ") + e.what());
  }
  Reader top(root, "");
  Scenario s;
  s.name = top.string("name", s.name);
  s.seed = top.required_unsigned("seed");

  {
    Reader r = top.object("array");
    s.geometry.num_elements = static_cast<int>(r.integer("num_elements", s.geometry.num_elements));
    s.geometry.pitch = r.mm("pitch_mm", s.geometry.pitch);
    s.geometry.center_x = r.mm("center_x_mm", s.geometry.center_x);
    r.finish();
  }
  {
    Reader r = top.object("medium");
    s.medium.sos = r.number("sos", s.medium.sos);
    s.medium.k_i = r.number("k_i", s.medium.k_i);
    s.medium.p0 = r.number("p0", s.medium.p0);
    r.finish();
  }
  {
    Reader r = top.object("pulse");
    s.pulse.center_frequency = r.number("center_frequency_hz", s.pulse.center_frequency);
    s.pulse.num_cycles = r.number("num_cycles", s.pulse.num_cycles);
    s.pulse.sample_rate = r.number("sample_rate_hz", s.pulse.sample_rate);
    s.pulse.kind = r.choice("kind", s.pulse.kind, {{"tone", PulseKind::Tone}, {"impulse", PulseKind::Impulse}});
    r.finish();
  }
  {
    Reader r = top.object("pressure");
    s.pressure.decay = r.choice("decay", s.pressure.decay,
                                {{"none", Decay::None}, {"inverse_sqrt", Decay::InverseSqrt},
                                 {"inverse", Decay::Inverse}});
    s.pressure.r_min = r.mm("r_min_mm", s.pressure.r_min);
    s.pressure.directivity = r.choice("directivity", s.pressure.directivity,
                                      {{"omni", Directivity::Omni}, {"cosine", Directivity::Cosine}});
    if (r.has("amplitude_norm")) s.pressure.amplitude_norm = r.required_number("amplitude_norm");
    r.finish();
  }
  {
    Reader r = top.object("acquisition");
    s.acquisition.k = static_cast<int>(r.integer("k", s.acquisition.k));
    s.acquisition.noise_power = r.number("noise_power", s.acquisition.noise_power);
    s.acquisition.common_mode_amplitude = r.number("common_mode", s.acquisition.common_mode_amplitude);
    s.acquisition.rf_gain = r.number("rf_gain", s.acquisition.rf_gain);
    r.finish();
  }
  {
    Reader r = top.object("s_field");
    if (r.has("origin_mm")) {
      const auto o = r.mm_list("origin_mm", 2);
      s.s_field.origin = Point{o[0], o[1]};
    }
    s.s_field.dx = r.mm("dx_mm", s.s_field.dx);
    s.s_field.dz = r.mm("dz_mm", s.s_field.dz);
    s.s_field.nx = static_cast<int>(r.integer("nx", 0));
    s.s_field.nz = static_cast<int>(r.integer("nz", 0));
    const json &points = r.array("points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      Reader p(points[i], fmt::format("{}[{}]", r.key_path("points"), i));
      PointSource src;
      src.position = {p.required_mm("x_mm"), p.required_mm("z_mm")};
      src.amplitude = p.number("amplitude", src.amplitude);
      p.finish();
      s.s_field.points.push_back(src);
    }
    const json &discs = r.array("discs");
    for (std::size_t i = 0; i < discs.size(); ++i) {
      Reader d(discs[i], fmt::format("{}[{}]", r.key_path("discs"), i));
      DiscSource src;
      src.center = {d.required_mm("x_mm"), d.required_mm("z_mm")};
      src.radius = d.required_mm("radius_mm");
      src.amplitude = d.number("amplitude", src.amplitude);
      d.finish();
      s.s_field.discs.push_back(src);
    }
    if (r.has("file")) s.s_field.file = r.string("file", "");
    r.finish();
  }
  {
    Reader r = top.object("transmit");
    s.transmit.kind = r.choice("scheme", s.transmit.kind, {{"sa", TransmitKind::SA}, {"fus", TransmitKind::FUS}});
    s.transmit.focal_depth = r.mm("focal_depth_mm", s.transmit.focal_depth);
    if (r.has("line_centers_mm")) s.transmit.line_centers = r.mm_list("line_centers_mm");
    r.finish();
  }
  {
    Reader r = top.object("reconstruction");
    s.reconstruction.f_number = r.number("f_number", s.reconstruction.f_number);
    s.reconstruction.weighting = r.choice("weighting", s.reconstruction.weighting,
                                          {{"none", Weighting::None}, {"cf", Weighting::CF},
                                           {"cfpl", Weighting::CFPL}});
    s.reconstruction.amplitude_correct = r.boolean("amplitude_correct", s.reconstruction.amplitude_correct);
    s.reconstruction.window_alignment = r.choice(
        "cfpl_window", s.reconstruction.window_alignment,
        {{"causal", WindowAlignment::Causal}, {"centered", WindowAlignment::Centered}});
    Reader g = r.object("grid");
    s.reconstruction.grid.max_depth = g.mm("max_depth_mm", s.reconstruction.grid.max_depth);
    if (g.has("explicit")) s.reconstruction.grid.explicit_grid = read_grid(g.object("explicit"));
    g.finish();
    r.finish();
  }
  {
    const json &targets = top.array("targets");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      Reader t(targets[i], fmt::format("targets[{}]", i));
      TargetSpec target;
      target.label = t.string("label", fmt::format("target{}", i));
      target.group = t.string("group", "");
      target.expected = {t.required_mm("x_mm"), t.required_mm("z_mm")};
      target.signal_roi = read_rect(t, "signal_roi_mm");
      target.noise_roi = read_rect(t, "noise_roi_mm");
      t.finish();
      s.targets.push_back(std::move(target));
    }
  }
  top.finish();
  s.validate();
  return s;
}

std::string serialize_scenario(const Scenario &s) {
  json root = json::object();
  root["name"] = s.name;
  root["seed"] = s.seed;
  root["array"] = {{"num_elements", s.geometry.num_elements},
                   {"pitch_mm", to_mm(s.geometry.pitch)},
                   {"center_x_mm", to_mm(s.geometry.center_x)}};
  root["medium"] = {{"sos", s.medium.sos}, {"k_i", s.medium.k_i}, {"p0", s.medium.p0}};
  root["pulse"] = {{"center_frequency_hz", s.pulse.center_frequency},
                   {"num_cycles", s.pulse.num_cycles},
                   {"sample_rate_hz", s.pulse.sample_rate},
                   {"kind", s.pulse.kind == PulseKind::Tone ? "tone" : "impulse"}};
  const char *decay = s.pressure.decay == Decay::None          ? "none"
                      : s.pressure.decay == Decay::InverseSqrt ? "inverse_sqrt"
                                                               : "inverse";
  root["pressure"] = {{"decay", decay},
                      {"r_min_mm", to_mm(s.pressure.r_min)},
                      {"directivity", s.pressure.directivity == Directivity::Omni ? "omni" : "cosine"}};
  if (s.pressure.amplitude_norm) root["pressure"]["amplitude_norm"] = *s.pressure.amplitude_norm;
  root["acquisition"] = {{"k", s.acquisition.k},
                         {"noise_power", s.acquisition.noise_power},
                         {"common_mode", s.acquisition.common_mode_amplitude},
                         {"rf_gain", s.acquisition.rf_gain}};

  json sf = json::object();
  if (s.s_field.origin) sf["origin_mm"] = {to_mm(s.s_field.origin->x), to_mm(s.s_field.origin->z)};
  sf["dx_mm"] = to_mm(s.s_field.dx);
  sf["dz_mm"] = to_mm(s.s_field.dz);
  sf["nx"] = s.s_field.nx;
  sf["nz"] = s.s_field.nz;
  sf["points"] = json::array();
  for (const auto &p : s.s_field.points) {
    sf["points"].push_back({{"x_mm", to_mm(p.position.x)}, {"z_mm", to_mm(p.position.z)}, {"amplitude", p.amplitude}});
  }
  sf["discs"] = json::array();
  for (const auto &d : s.s_field.discs) {
    sf["discs"].push_back({{"x_mm", to_mm(d.center.x)},
                           {"z_mm", to_mm(d.center.z)},
                           {"radius_mm", to_mm(d.radius)},
                           {"amplitude", d.amplitude}});
  }
  if (s.s_field.file) sf["file"] = *s.s_field.file;
  root["s_field"] = sf;

  json tx = {{"scheme", s.transmit.kind == TransmitKind::SA ? "sa" : "fus"},
             {"focal_depth_mm", to_mm(s.transmit.focal_depth)}};
  if (!s.transmit.line_centers.empty()) {
    tx["line_centers_mm"] = json::array();
    for (double x : s.transmit.line_centers) tx["line_centers_mm"].push_back(to_mm(x));
  }
  root["transmit"] = tx;

  json grid = {{"max_depth_mm", to_mm(s.reconstruction.grid.max_depth)}};
  if (const auto &g = s.reconstruction.grid.explicit_grid) {
    grid["explicit"] = {{"origin_mm", {to_mm(g->origin.x), to_mm(g->origin.z)}},
                        {"dx_mm", to_mm(g->dx)},
                        {"dz_mm", to_mm(g->dz)},
                        {"nx", g->nx},
                        {"nz", g->nz}};
  }
  root["reconstruction"] = {
      {"f_number", s.reconstruction.f_number},
      {"weighting", to_string(s.reconstruction.weighting)},
      {"amplitude_correct", s.reconstruction.amplitude_correct},
      {"cfpl_window", s.reconstruction.window_alignment == WindowAlignment::Causal ? "causal" : "centered"},
      {"grid", grid}};

  root["targets"] = json::array();
  for (const auto &t : s.targets) {
    json tj = {{"label", t.label},
               {"x_mm", to_mm(t.expected.x)},
               {"z_mm", to_mm(t.expected.z)},
               {"signal_roi_mm", rect_json(t.signal_roi)},
               {"noise_roi_mm", rect_json(t.noise_roi)}};
    if (!t.group.empty()) tj["group"] = t.group;
    root["targets"].push_back(tj);
  }
  return root.dump(2) + "\n";
}

Scenario load_scenario(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidArgument, "cannot open scenario " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scenario(text);
}

PixelGrid Scenario::pixel_grid() const {
  if (reconstruction.grid.explicit_grid) return *reconstruction.grid.explicit_grid;
  return default_pixel_grid(geometry, medium, pulse, reconstruction.grid.max_depth);
}

double Scenario::max_depth() const {
  if (const auto &g = reconstruction.grid.explicit_grid) return g->z(g->nz - 1);
  return reconstruction.grid.max_depth;
}

void Scenario::validate() const {
  const auto wrap = [](const char *path, auto &&check) {
    try {
      check();
    } catch (const Error &e) {
      if (e.code() == Errc::Schema) throw;
      schema_error(path, e.what());
    }
  };
  wrap("array", [&] { geometry.validate(); });
  wrap("medium", [&] { medium.validate(); });
  wrap("pulse", [&] { pulse.validate(); });
  wrap("acquisition", [&] { acquisition.validate(); });
  if (!(pressure.r_min > 0.0)) schema_error("pressure.r_min_mm", "must be > 0");
  if (pressure.amplitude_norm && !std::isfinite(*pressure.amplitude_norm)) {
    schema_error("pressure.amplitude_norm", "must be finite");
  }
  if (!(reconstruction.f_number > 0.0)) schema_error("reconstruction.f_number", "must be > 0");
  if (reconstruction.grid.explicit_grid) {
    wrap("reconstruction.grid.explicit", [&] { reconstruction.grid.explicit_grid->validate(); });
  } else if (!(reconstruction.grid.max_depth > 0.0)) {
    schema_error("reconstruction.grid.max_depth_mm", "must be > 0");
  }
  if (transmit.kind == TransmitKind::FUS && !(transmit.focal_depth > 0.0)) {
    schema_error("transmit.focal_depth_mm", "must be > 0");
  }
  if (!(s_field.dx > 0.0)) schema_error("s_field.dx_mm", "must be > 0");
  if (!(s_field.dz > 0.0)) schema_error("s_field.dz_mm", "must be > 0");
  if (s_field.origin && (s_field.nx < 1 || s_field.nz < 1)) {
    schema_error("s_field", "an explicit origin needs nx >= 1 and nz >= 1");
  }
  if (s_field.file && !s_field.origin) schema_error("s_field.file", "an s-field file needs origin_mm");

  const double depth = max_depth();
  const auto check_depth = [depth](const std::string &path, double z) {
    if (!(z > 0.0) || z > depth + 1e-12) {
      schema_error(path, fmt::format("depth {:.6g} mm lies outside (0, {:.6g}] mm", z * 1e3, depth * 1e3));
    }
  };
  for (std::size_t i = 0; i < s_field.points.size(); ++i) {
    check_depth(fmt::format("s_field.points[{}].z_mm", i), s_field.points[i].position.z);
  }
  for (std::size_t i = 0; i < s_field.discs.size(); ++i) {
    check_depth(fmt::format("s_field.discs[{}].z_mm", i), s_field.discs[i].center.z);
    if (!(s_field.discs[i].radius > 0.0)) schema_error(fmt::format("s_field.discs[{}].radius_mm", i), "must be > 0");
  }
  const PixelGrid grid = pixel_grid();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const TargetSpec &t = targets[i];
    check_depth(fmt::format("targets[{}].z_mm", i), t.expected.z);
    PixelRoi sig, noise;
    wrap(fmt::format("targets[{}].signal_roi_mm", i).c_str(), [&] { sig = roi_of(grid, t.signal_roi); });
    wrap(fmt::format("targets[{}].noise_roi_mm", i).c_str(), [&] { noise = roi_of(grid, t.noise_roi); });
    if (sig.overlaps(noise)) schema_error(fmt::format("targets[{}]", i), "signal and noise ROIs overlap");
  }
}

SFieldGrid build_s_field(const Scenario &scenario, const std::filesystem::path &base_dir) {
  const SFieldSpec &spec = scenario.s_field;
  SFieldGrid field;
  field.dx = spec.dx;
  field.dz = spec.dz;
  if (spec.origin) {
    field.origin = *spec.origin;
    field.values = Field2D<double>(spec.nx, spec.nz, 0.0);
  } else {
    const PixelGrid grid = scenario.pixel_grid();
    const double x_lo = grid.x(0), x_hi = grid.x(grid.nx - 1);
    const double z_lo = grid.z(0), z_hi = scenario.max_depth();
    field.origin = {x_lo, z_lo};
    const int nx = static_cast<int>(std::floor((x_hi - x_lo) / spec.dx + 1e-9)) + 1;
    const int nz = static_cast<int>(std::floor((z_hi - z_lo) / spec.dz + 1e-9)) + 1;
    field.values = Field2D<double>(nx, nz, 0.0);
  }
  const double cell_area = field.dx * field.dz;
  const int nx = field.values.nx(), nz = field.values.nz();

  for (std::size_t i = 0; i < spec.points.size(); ++i) {
    const PointSource &p = spec.points[i];
    const long ix = std::lround((p.position.x - field.origin.x) / field.dx);
    const long iz = std::lround((p.position.z - field.origin.z) / field.dz);
    if (ix < 0 || ix >= nx || iz < 0 || iz >= nz) {
      schema_error(fmt::format("s_field.points[{}]", i), "lies outside the s-field grid");
    }
    field.values(static_cast<int>(ix), static_cast<int>(iz)) += p.amplitude / cell_area;
  }
  for (std::size_t i = 0; i < spec.discs.size(); ++i) {
    const DiscSource &d = spec.discs[i];
    std::vector<std::pair<int, int>> cells;
    for (int ix = 0; ix < nx; ++ix) {
      for (int iz = 0; iz < nz; ++iz) {
        const Point c = field.cell_center(ix, iz);
        const double ddx = c.x - d.center.x, ddz = c.z - d.center.z;
        if (ddx * ddx + ddz * ddz <= d.radius * d.radius) cells.emplace_back(ix, iz);
      }
    }
    if (cells.empty()) schema_error(fmt::format("s_field.discs[{}]", i), "covers no s-field cell centre");
    const double s = d.amplitude / (cell_area * static_cast<double>(cells.size()));
    for (const auto &[ix, iz] : cells) field.values(ix, iz) += s;
  }
  if (spec.file) {
    const Field2D<double> loaded = read_image_csv(base_dir / *spec.file);
    if (loaded.nx() != nx || loaded.nz() != nz) {
      schema_error("s_field.file", fmt::format("file is {}x{} but the s-field grid is {}x{}", loaded.nx(),
                                               loaded.nz(), nx, nz));
    }
    for (std::size_t k = 0; k < loaded.size(); ++k) field.values.data()[k] += loaded.data()[k];
  }
  return field;
}

std::vector<TransmitEvent> transmit_events(const Scenario &scenario) {
  if (scenario.transmit.kind == TransmitKind::SA) return single_element_sequence(scenario.geometry);
  const std::vector<double> centers = scenario.transmit.line_centers.empty()
                                          ? element_line_centers(scenario.geometry)
                                          : scenario.transmit.line_centers;
  return focused_sequence(scenario.geometry, scenario.medium, scenario.transmit.focal_depth, centers);
}

}  // namespace aesynth
