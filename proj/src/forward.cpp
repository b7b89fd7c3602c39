#include "aesynth/forward.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "aesynth/parallel.hpp"

namespace aesynth {

int TransmitEvent::active_count() const {
  return static_cast<int>(std::count(active.begin(), active.end(), true));
}

int TransmitEvent::single_element() const {
  if (active_count() != 1) return -1;
  return static_cast<int>(std::find(active.begin(), active.end(), true) - active.begin());
}

void TransmitEvent::validate(int num_elements) const {
  if (static_cast<int>(delays.size()) != num_elements ||
      static_cast<int>(active.size()) != num_elements) {
    throw Error(Errc::InvalidEvent, "TransmitEvent '" + label + "': table size != element count");
  }
  if (active_count() == 0) {
    throw Error(Errc::InvalidEvent, "TransmitEvent '" + label + "': no active element");
  }
  for (int i = 0; i < num_elements; ++i) {
    if (active[i] && !(delays[i] >= 0.0 && std::isfinite(delays[i]))) {
      throw Error(Errc::InvalidEvent, "TransmitEvent '" + label + "': negative delay");
    }
  }
}

double time_of_flight(Point source, Point target, double sos) {
  if (!(sos > 0.0)) throw Error(Errc::InvalidArgument, "time_of_flight: sos must be > 0");
  return std::hypot(target.x - source.x, target.z - source.z) / sos;
}

double element_beam_amplitude(const ArrayGeometry &geometry, int element_index,
                              Point point, const PressureModel &model) {
  const Point element = geometry.element_position(element_index);
  const double r = std::hypot(point.x - element.x, point.z - element.z);
  double amplitude = 1.0;
  switch (model.decay) {
    case Decay::None: break;
    case Decay::InverseSqrt: amplitude = std::sqrt(model.r_min / std::max(r, model.r_min)); break;
    case Decay::Inverse: amplitude = model.r_min / std::max(r, model.r_min); break;
  }
  if (model.directivity == Directivity::Cosine && r > 0.0) {
    amplitude *= (point.z - element.z) / r;
  }
  return amplitude;
}

TraceSpec trace_spec_for(double max_depth, const std::vector<TransmitEvent> &events,
                         const Medium &medium, const PulseSpec &pulse) {
  double max_delay = 0.0;
  for (const auto &event : events) {
    for (std::size_t i = 0; i < event.delays.size(); ++i) {
      if (event.active[i]) max_delay = std::max(max_delay, event.delays[i]);
    }
  }
  const double samples = std::ceil((max_depth / medium.sos + max_delay) * pulse.sample_rate - 1e-9);
  return {0.0, static_cast<int>(samples) + pulse.length_samples()};
}

namespace {

// Adds amplitude * a(t_n - tau) to the trace, a() linearly interpolated from
// the sampled waveform (zero outside it).
void render_pulse(std::vector<double> &trace, std::span<const double> wave, int half,
                  double sample_rate, double t0, double tau, double amplitude) {
  const double q = (tau - t0) * sample_rate;
  const auto len = static_cast<long>(wave.size());
  const long base = static_cast<long>(std::floor(q)) - half;
  const long n_begin = std::max<long>(0, base - 1);
  const long n_end = std::min<long>(static_cast<long>(trace.size()), base + len + 2);
  for (long n = n_begin; n < n_end; ++n) {
    const double u = static_cast<double>(n) - q + half;
    const double lower = std::floor(u);
    const double frac = u - lower;
    const long i0 = static_cast<long>(lower);
    double a = 0.0;
    if (i0 >= 0 && i0 < len) a += wave[static_cast<std::size_t>(i0)] * (1.0 - frac);
    if (i0 + 1 >= 0 && i0 + 1 < len) a += wave[static_cast<std::size_t>(i0 + 1)] * frac;
    if (a != 0.0) trace[static_cast<std::size_t>(n)] += amplitude * a;
  }
}

}  // namespace

std::vector<double> simulate_channel(const SFieldGrid &s_field, const TransmitEvent &event,
                                     const ArrayGeometry &geometry, const Medium &medium,
                                     const PulseSpec &pulse, const PressureModel &model,
                                     const TraceSpec &trace) {
  event.validate(geometry.num_elements);
  if (trace.num_samples < 0) throw Error(Errc::InvalidArgument, "simulate_channel: negative length");

  const double gain = -model.amplitude_norm.value_or(medium.k_i * medium.p0 * s_field.dx * s_field.dz);
  const std::vector<double> wave = pulse.waveform();
  const int half = pulse.half_length();
  std::vector<double> out(static_cast<std::size_t>(trace.num_samples), 0.0);

  std::vector<int> active;
  for (int i = 0; i < geometry.num_elements; ++i) {
    if (event.active[i]) active.push_back(i);
  }

  const auto &values = s_field.values;
  for (int ix = 0; ix < values.nx(); ++ix) {
    for (int iz = 0; iz < values.nz(); ++iz) {
      const double s = values(ix, iz);
      if (s == 0.0) continue;
      const Point cell = s_field.cell_center(ix, iz);
      for (int i : active) {
        const double tau = event.delays[i] + time_of_flight(geometry.element_position(i), cell, medium.sos);
        const double b = element_beam_amplitude(geometry, i, cell, model);
        render_pulse(out, wave, half, pulse.sample_rate, trace.t0, tau, gain * s * b);
      }
    }
  }
  return out;
}

std::vector<TransmitEvent> single_element_sequence(const ArrayGeometry &geometry) {
  geometry.validate();
  const int m = geometry.num_elements;
  std::vector<TransmitEvent> events;
  events.reserve(m);
  for (int i = 0; i < m; ++i) {
    TransmitEvent event{std::vector<double>(m, 0.0), std::vector<bool>(m, false),
                        "element " + std::to_string(i)};
    event.active[i] = true;
    events.push_back(std::move(event));
  }
  return events;
}

std::vector<TransmitEvent> focused_sequence(const ArrayGeometry &geometry, const Medium &medium,
                                            double focal_depth,
                                            std::span<const double> line_centers) {
  geometry.validate();
  if (!(focal_depth > 0.0)) throw Error(Errc::InvalidArgument, "focused_sequence: focal_depth must be > 0");
  const int m = geometry.num_elements;
  std::vector<TransmitEvent> events;
  events.reserve(line_centers.size());
  for (std::size_t l = 0; l < line_centers.size(); ++l) {
    TransmitEvent event{std::vector<double>(m, 0.0), std::vector<bool>(m, true),
                        "line " + std::to_string(l)};
    if (std::isfinite(focal_depth)) {
      const Point focus{line_centers[l], focal_depth};
      std::vector<double> distance(m);
      for (int i = 0; i < m; ++i) {
        distance[i] = std::hypot(focus.x - geometry.element_x(i), focus.z);
      }
      const double farthest = *std::max_element(distance.begin(), distance.end());
      for (int i = 0; i < m; ++i) event.delays[i] = (farthest - distance[i]) / medium.sos;
    }
    events.push_back(std::move(event));
  }
  return events;
}

std::vector<double> element_line_centers(const ArrayGeometry &geometry) {
  std::vector<double> centers(geometry.num_elements);
  for (int i = 0; i < geometry.num_elements; ++i) centers[i] = geometry.element_x(i);
  return centers;
}

ChannelDataSet simulate_dataset(const SFieldGrid &s_field,
                                const std::vector<TransmitEvent> &events,
                                const ArrayGeometry &geometry, const Medium &medium,
                                const PulseSpec &pulse, const PressureModel &model,
                                const AcquisitionSpec &acquisition, std::uint64_t seed,
                                double max_depth, unsigned threads) {
  geometry.validate();
  medium.validate();
  pulse.validate();
  acquisition.validate();
  s_field.validate();
  if (events.empty()) throw Error(Errc::InvalidEvent, "simulate_dataset: no transmit events");
  if (!(max_depth > 0.0)) throw Error(Errc::InvalidArgument, "simulate_dataset: max_depth must be > 0");
  for (const auto &event : events) event.validate(geometry.num_elements);

  const TraceSpec trace = trace_spec_for(max_depth, events, medium, pulse);
  ChannelDataSet data;
  data.num_events = static_cast<int>(events.size());
  data.num_samples = trace.num_samples;
  data.sample_rate = pulse.sample_rate;
  data.t0 = trace.t0;
  data.samples.assign(static_cast<std::size_t>(data.num_events) * data.num_samples, 0.0f);
  data.events = events;
  data.geometry = geometry;
  data.medium = medium;
  data.pulse = pulse;

  const std::vector<double> pulse_template = pulse.waveform();
  const std::vector<double> common_mode = common_mode_trace(
      trace.num_samples, pulse.sample_rate, trace.t0, acquisition.common_mode_amplitude);

  detail::parallel_for(events.size(), threads, [&](std::size_t c) {
    const std::vector<double> clean =
        simulate_channel(s_field, events[c], geometry, medium, pulse, model, trace);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(c)};
    Rng rng(seq);

    // The trough acquisition sees the negated s-field; by linearity of the
    // forward model that is the exact negation of the clean trace.
    std::vector<double> v_plus(clean.size());
    std::vector<double> v_minus(clean.size());
    for (std::size_t n = 0; n < clean.size(); ++n) {
      v_plus[n] = clean[n] + common_mode[n];
      v_minus[n] = -clean[n] + common_mode[n];
    }
    add_thermal_noise(v_plus, acquisition.noise_power, acquisition.k, rng);
    add_thermal_noise(v_minus, acquisition.noise_power, acquisition.k, rng);
    if (acquisition.rf_gain != 1.0) {
      for (auto &v : v_plus) v *= acquisition.rf_gain;
      for (auto &v : v_minus) v *= acquisition.rf_gain;
    }
    const std::vector<double> filtered =
        matched_filter(differential_subtract(v_plus, v_minus), pulse_template);
    auto row = data.channel(static_cast<int>(c));
    for (std::size_t n = 0; n < filtered.size(); ++n) row[n] = static_cast<float>(filtered[n]);
  });
  return data;
}

// ---------------------------------------------------------------------------
// Channel file

namespace {

constexpr char kMagic[4] = {'A', 'E', 'C', 'D'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 4 + 4 * 8;

template <typename U>
void put_le(std::vector<std::uint8_t> &out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
  }
}

void put_f64(std::vector<std::uint8_t> &out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::vector<std::uint8_t> &out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + b]) << (8 * b));
    }
    pos_ += sizeof(U);
    return value;
  }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  std::uint8_t byte() { return get_le<std::uint8_t>(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(Errc::Format, "channel file: truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_channel_file(const ChannelDataSet &data) {
  const int m = data.geometry.num_elements;
  if (data.num_events < 1 || data.num_events > 0xFFFF) {
    throw Error(Errc::Format, "channel file: event count must be in [1, 65535]");
  }
  if (static_cast<int>(data.events.size()) != data.num_events ||
      data.samples.size() != static_cast<std::size_t>(data.num_events) * data.num_samples) {
    throw Error(Errc::Format, "channel file: inconsistent dataset");
  }
  const std::size_t mask_bytes = (static_cast<std::size_t>(m) + 7) / 8;
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + data.samples.size() * 4 +
              data.events.size() * (static_cast<std::size_t>(m) * 8 + mask_bytes));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kChannelFileVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(data.num_events));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.num_samples));
  put_f64(out, data.sample_rate);
  put_f64(out, data.t0);
  put_f64(out, data.geometry.pitch);
  put_f64(out, data.medium.sos);
  for (float v : data.samples) put_f32(out, v);
  for (const auto &event : data.events) {
    event.validate(m);
    for (int i = 0; i < m; ++i) put_f64(out, event.delays[i]);
  }
  for (const auto &event : data.events) {
    for (std::size_t byte = 0; byte < mask_bytes; ++byte) {
      std::uint8_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        const std::size_t i = byte * 8 + b;
        if (i < static_cast<std::size_t>(m) && event.active[i]) bits |= static_cast<std::uint8_t>(1u << b);
      }
      out.push_back(bits);
    }
  }
  return out;
}

ChannelDataSet decode_channel_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::Format, "channel file: bad magic");
  }
  Reader in(bytes.subspan(4));
  const auto version = in.get_le<std::uint16_t>();
  if (version != kChannelFileVersion) {
    throw Error(Errc::Format, "channel file: unsupported version " + std::to_string(version));
  }
  ChannelDataSet data;
  data.num_events = in.get_le<std::uint16_t>();
  data.num_samples = static_cast<int>(in.get_le<std::uint32_t>());
  data.sample_rate = in.f64();
  data.t0 = in.f64();
  data.geometry.pitch = in.f64();
  data.medium.sos = in.f64();
  if (data.num_events < 1) throw Error(Errc::Format, "channel file: no events");

  data.samples.resize(static_cast<std::size_t>(data.num_events) * data.num_samples);
  for (float &v : data.samples) v = in.f32();

  // The element count is implied by the size of the delay and mask tables.
  const std::size_t rest = in.remaining();
  const std::size_t events = static_cast<std::size_t>(data.num_events);
  int m = 0;
  for (std::size_t cand = 1; events * cand * 8 <= rest; ++cand) {
    if (events * (cand * 8 + (cand + 7) / 8) == rest) {
      m = static_cast<int>(cand);
      break;
    }
  }
  if (m == 0) throw Error(Errc::Format, "channel file: transmit tables have inconsistent size");
  data.geometry.num_elements = m;

  data.events.resize(events);
  for (std::size_t e = 0; e < events; ++e) {
    auto &event = data.events[e];
    event.label = "tx " + std::to_string(e);
    event.delays.resize(m);
    for (int i = 0; i < m; ++i) event.delays[i] = in.f64();
  }
  const std::size_t mask_bytes = (static_cast<std::size_t>(m) + 7) / 8;
  for (auto &event : data.events) {
    event.active.assign(m, false);
    for (std::size_t byte = 0; byte < mask_bytes; ++byte) {
      const std::uint8_t bits = in.byte();
      for (int b = 0; b < 8; ++b) {
        const std::size_t i = byte * 8 + b;
        if (i < static_cast<std::size_t>(m)) event.active[i] = (bits >> b) & 1u;
      }
    }
  }
  data.pulse.sample_rate = data.sample_rate;
  return data;
}

void write_channel_file(const std::filesystem::path &path, const ChannelDataSet &data) {
  const std::vector<std::uint8_t> bytes = encode_channel_file(data);
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(Errc::Format, "cannot write " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

ChannelDataSet read_channel_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Format, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_channel_file(bytes);
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace aesynth
