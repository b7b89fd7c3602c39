#include "aesynth/reconstruct.hpp"

#include <fftw3.h>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <sstream>

#include "aesynth/parallel.hpp"

namespace aesynth {

const char *to_string(ImageMethod method) {
  return method == ImageMethod::SA ? "SA" : "FUS";
}

int sub_aperture_size(double z, double f_number, double pitch, int num_elements) {
  if (!(f_number > 0.0) || !(pitch > 0.0) || num_elements < 1) {
    throw Error(Errc::InvalidArgument, "sub_aperture_size: need f_number, pitch > 0");
  }
  const double nominal = std::round(std::max(0.0, z) / (f_number * pitch));
  if (nominal >= num_elements) return num_elements;
  return std::max(1, static_cast<int>(nominal));
}

ElementRange sub_aperture_elements(Point pixel, const ArrayGeometry &geometry, double f_number) {
  const int m = geometry.num_elements;
  const int size = sub_aperture_size(pixel.z, f_number, geometry.pitch, m);
  if (size == m) return {0, m};
  const double nearest = (pixel.x - geometry.element_x(0)) / geometry.pitch;
  const long start = static_cast<long>(std::floor(nearest - (size - 1) / 2.0 + 0.5));
  const long first = std::clamp<long>(start, 0, m);
  const long last = std::clamp<long>(start + size, 0, m);
  return {static_cast<int>(first), static_cast<int>(std::max(0L, last - first))};
}

namespace {

// Linear interpolation at fractional sample u; nullopt outside [0, T-1].
struct Sampler {
  std::span<const float> channel;
  double t0;
  double sample_rate;

  bool in_support(double u) const {
    return u >= 0.0 && u <= static_cast<double>(channel.size()) - 1.0;
  }
  double at_index(double u) const {
    const auto i0 = static_cast<std::size_t>(u);
    const double frac = u - static_cast<double>(i0);
    if (i0 + 1 >= channel.size()) return channel[channel.size() - 1];
    return channel[i0] * (1.0 - frac) + channel[i0 + 1] * frac;
  }
  double index_of(double t) const { return (t - t0) * sample_rate; }
};

}  // namespace

DasResult das_sa(const ChannelDataSet &data, const PixelGrid &grid, double f_number,
                 const DasOptions &options) {
  grid.validate();
  const ArrayGeometry &geometry = data.geometry;
  const int m = geometry.num_elements;
  if (!(f_number > 0.0)) throw Error(Errc::InvalidArgument, "das_sa: f_number must be > 0");
  if (options.window_samples < 0) throw Error(Errc::InvalidArgument, "das_sa: negative window");

  std::vector<int> channel_of(m, -1);
  for (int e = 0; e < data.num_events; ++e) {
    const int element = data.events[e].single_element();
    if (element < 0) {
      throw Error(Errc::MethodMismatch, "das_sa: event " + std::to_string(e) + " is not a single-element transmit");
    }
    channel_of[element] = e;
  }
  for (int i = 0; i < m; ++i) {
    if (channel_of[i] < 0) {
      throw Error(Errc::MethodMismatch, "das_sa: no channel for element " + std::to_string(i));
    }
  }

  DasResult result;
  BeamformedImage &image = result.image;
  image.grid = grid;
  image.values = Field2D<double>(grid.nx, grid.nz);
  image.coverage = Field2D<int>(grid.nx, grid.nz);
  image.method = ImageMethod::SA;
  image.f_number = f_number;

  ApertureSamples &ap = result.samples;
  ap.grid = grid;
  ap.window_samples = options.window_samples;
  ap.alignment = options.alignment;
  const std::size_t pixels = grid.size();
  ap.offsets.assign(pixels + 1, 0);
  ap.first_element.assign(pixels, 0);
  ap.valid_count.assign(pixels, 0);
  for (int ix = 0; ix < grid.nx; ++ix) {
    for (int iz = 0; iz < grid.nz; ++iz) {
      const std::size_t p = ap.pixel_index(ix, iz);
      const ElementRange range = sub_aperture_elements(grid.pixel(ix, iz), geometry, f_number);
      ap.first_element[p] = range.first;
      ap.offsets[p + 1] = ap.offsets[p] + static_cast<std::size_t>(range.count);
    }
  }
  ap.samples.assign(ap.offsets.back(), 0.0f);
  const int window = options.window_samples;
  ap.windows.assign(ap.offsets.back() * static_cast<std::size_t>(window), 0.0f);
  const double window_shift =
      options.alignment == WindowAlignment::Centered ? -(window - 1) / 2.0 : 0.0;

  std::vector<Sampler> samplers;
  samplers.reserve(m);
  for (int i = 0; i < m; ++i) {
    samplers.push_back({data.channel(channel_of[i]), data.t0, data.sample_rate});
  }
  const double sos = data.medium.sos;

  detail::parallel_for(static_cast<std::size_t>(grid.nx), options.threads, [&](std::size_t col) {
    const int ix = static_cast<int>(col);
    for (int iz = 0; iz < grid.nz; ++iz) {
      const std::size_t p = ap.pixel_index(ix, iz);
      const Point pixel = grid.pixel(ix, iz);
      const int first = ap.first_element[p];
      const int count = ap.count(p);
      double sum = 0.0;
      int valid = 0;
      for (int s = 0; s < count; ++s) {
        const int i = first + s;
        const Sampler &sampler = samplers[i];
        const double u = sampler.index_of(time_of_flight(geometry.element_position(i), pixel, sos));
        const std::size_t slot = ap.offsets[p] + static_cast<std::size_t>(s);
        if (sampler.in_support(u)) {
          const double v = sampler.at_index(u);
          sum += v;
          ++valid;
          ap.samples[slot] = static_cast<float>(v);
        }
        for (int j = 0; j < window; ++j) {
          const double uj = u + window_shift + j;
          if (sampler.in_support(uj)) {
            ap.windows[slot * window + j] = static_cast<float>(sampler.at_index(uj));
          }
        }
      }
      image.values(ix, iz) = sum;
      image.coverage(ix, iz) = valid;
      ap.valid_count[p] = valid;
    }
  });
  return result;
}

RayLine ray_line_of(const TransmitEvent &event, const ArrayGeometry &geometry) {
  double max_delay = -1.0;
  for (int i = 0; i < geometry.num_elements; ++i) {
    if (event.active[i]) max_delay = std::max(max_delay, event.delays[i]);
  }
  if (max_delay < 0.0) throw Error(Errc::InvalidEvent, "ray_line_of: no active element");
  const double tol = 1e-12 * std::max(max_delay, 1e-9);
  double x_sum = 0.0;
  int ties = 0;
  for (int i = 0; i < geometry.num_elements; ++i) {
    if (event.active[i] && max_delay - event.delays[i] <= tol) {
      x_sum += geometry.element_x(i);
      ++ties;
    }
  }
  return {x_sum / ties, max_delay};
}

BeamformedImage fus_line_map(const ChannelDataSet &data, const PixelGrid &grid,
                             const Medium &medium) {
  grid.validate();
  const ArrayGeometry &geometry = data.geometry;
  const int m = geometry.num_elements;
  BeamformedImage image;
  image.grid = grid;
  image.values = Field2D<double>(grid.nx, grid.nz);
  image.coverage = Field2D<int>(grid.nx, grid.nz);
  image.method = ImageMethod::FUS;

  std::vector<int> line_of_column(grid.nx, -1);
  std::vector<double> distance_of_column(grid.nx, 0.0);
  std::vector<RayLine> lines(data.num_events);
  for (int e = 0; e < data.num_events; ++e) {
    const TransmitEvent &event = data.events[e];
    if (event.active_count() != m || (m > 1 && event.single_element() >= 0)) {
      throw Error(Errc::MethodMismatch,
                  "fus_line_map: event " + std::to_string(e) + " is not a full-aperture focused transmit");
    }
    lines[e] = ray_line_of(event, geometry);
    const long ix = std::lround((lines[e].x - grid.origin.x) / grid.dx);
    if (ix < 0 || ix >= grid.nx) continue;
    const double distance = std::abs(lines[e].x - grid.x(static_cast<int>(ix)));
    if (line_of_column[ix] < 0 || distance < distance_of_column[ix]) {
      line_of_column[ix] = e;
      distance_of_column[ix] = distance;
    }
  }

  for (int ix = 0; ix < grid.nx; ++ix) {
    const int e = line_of_column[ix];
    if (e < 0) continue;
    const Sampler sampler{data.channel(e), data.t0, data.sample_rate};
    for (int iz = 0; iz < grid.nz; ++iz) {
      const double u = sampler.index_of(lines[e].t_ref + grid.z(iz) / medium.sos);
      image.values(ix, iz) = sampler.in_support(u) ? sampler.at_index(u) : 0.0;
      image.coverage(ix, iz) = 1;
    }
  }
  return image;
}

// ---------------------------------------------------------------------------
// Envelope

namespace {

std::mutex &fftw_planner_mutex() {
  static std::mutex mutex;
  return mutex;
}

// Analytic signal via FFT: zero the negative frequencies, double the positive.
class AnalyticSignal {
 public:
  explicit AnalyticSignal(int n) : n_(n), buffer_(static_cast<std::size_t>(n)) {
    auto *raw = reinterpret_cast<fftw_complex *>(buffer_.data());
    std::lock_guard lock(fftw_planner_mutex());
    forward_ = fftw_plan_dft_1d(n, raw, raw, FFTW_FORWARD, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_1d(n, raw, raw, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~AnalyticSignal() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  AnalyticSignal(const AnalyticSignal &) = delete;
  AnalyticSignal &operator=(const AnalyticSignal &) = delete;

  void magnitude(const double *in, double *out) {
    for (int i = 0; i < n_; ++i) buffer_[i] = {in[i], 0.0};
    fftw_execute(forward_);
    const int half = n_ / 2;
    for (int k = 1; k < n_; ++k) {
      if (k < (n_ + 1) / 2) {
        buffer_[k] *= 2.0;
      } else if (!(n_ % 2 == 0 && k == half)) {
        buffer_[k] = 0.0;
      }
    }
    fftw_execute(inverse_);
    for (int i = 0; i < n_; ++i) out[i] = std::abs(buffer_[i]) / n_;
  }

 private:
  int n_;
  std::vector<std::complex<double>> buffer_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

}  // namespace

std::vector<double> analytic_envelope(std::span<const double> signal) {
  if (signal.size() < 4) throw Error(Errc::DegenerateAxis, "envelope: need at least 4 samples");
  std::vector<double> out(signal.size());
  AnalyticSignal analytic(static_cast<int>(signal.size()));
  analytic.magnitude(signal.data(), out.data());
  return out;
}

BeamformedImage envelope(BeamformedImage image) {
  const int nz = image.values.nz();
  if (nz < 4) throw Error(Errc::DegenerateAxis, "envelope: depth axis needs at least 4 samples");
  Field2D<double> env(image.values.nx(), nz);
  AnalyticSignal analytic(nz);
  for (int ix = 0; ix < image.values.nx(); ++ix) {
    analytic.magnitude(image.values.column(ix), env.column(ix));
  }
  image.envelope = std::move(env);
  return image;
}

// ---------------------------------------------------------------------------
// Export

void write_image_csv(const std::filesystem::path &path, const Field2D<double> &values) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Format, "cannot write " + path.string());
  std::string line;
  for (int iz = 0; iz < values.nz(); ++iz) {
    line.clear();
    for (int ix = 0; ix < values.nx(); ++ix) {
      if (ix > 0) line += ',';
      line += fmt::format("{:.17g}", values(ix, iz));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error(Errc::Format, "write failed: " + path.string());
}

Field2D<double> read_image_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Format, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception &) {
        throw Error(Errc::Format, path.string() + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(Errc::Format, path.string() + ": ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(Errc::Format, path.string() + ": empty image");
  Field2D<double> values(static_cast<int>(rows.front().size()), static_cast<int>(rows.size()));
  for (int iz = 0; iz < values.nz(); ++iz) {
    for (int ix = 0; ix < values.nx(); ++ix) values(ix, iz) = rows[iz][ix];
  }
  return values;
}

namespace {

void write_pgm(const std::filesystem::path &path, const Field2D<double> &values,
               auto &&to_gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Format, "cannot write " + path.string());
  out << "P5\n" << values.nx() << ' ' << values.nz() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(values.nx()));
  for (int iz = 0; iz < values.nz(); ++iz) {
    for (int ix = 0; ix < values.nx(); ++ix) {
      const double g = std::clamp(to_gray(values(ix, iz)), 0.0, 255.0);
      row[ix] = static_cast<unsigned char>(std::lround(g));
    }
    out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

}  // namespace

void write_envelope_pgm(const std::filesystem::path &path, const Field2D<double> &envelope,
                        double dynamic_range_db) {
  double peak = 0.0;
  for (double v : envelope.data()) peak = std::max(peak, v);
  write_pgm(path, envelope, [&](double v) {
    if (peak <= 0.0 || v <= 0.0) return 0.0;
    const double db = 20.0 * std::log10(v / peak);
    return 255.0 * (1.0 + db / dynamic_range_db);
  });
}

void write_linear_pgm(const std::filesystem::path &path, const Field2D<double> &values) {
  write_pgm(path, values, [](double v) { return 255.0 * v; });
}

}  // namespace aesynth
