#include "aesynth/coherence.hpp"

#include <algorithm>
#include <cmath>

namespace aesynth {

double coherence_of(std::span<const float> samples, int element_count) {
  if (element_count <= 0) return 0.0;
  // Extended precision keeps the sums of float samples exact for the
  // aperture sizes used here, so identical channels give exactly 1.
  long double sum = 0.0L;
  long double energy = 0.0L;
  for (float v : samples) {
    sum += v;
    energy += static_cast<long double>(v) * v;
  }
  if (energy == 0.0L) return 0.0;
  const double ratio = static_cast<double>(sum * sum / energy);
  return std::clamp(ratio / element_count, 0.0, 1.0);
}

CoherenceMap coherence_factor(const ApertureSamples &samples) {
  const PixelGrid &grid = samples.grid;
  CoherenceMap map{grid, Field2D<double>(grid.nx, grid.nz), CoherenceKind::CF, 1};
  for (int ix = 0; ix < grid.nx; ++ix) {
    for (int iz = 0; iz < grid.nz; ++iz) {
      const std::size_t p = samples.pixel_index(ix, iz);
      const std::span<const float> pixel(samples.samples.data() + samples.offsets[p],
                                         static_cast<std::size_t>(samples.count(p)));
      map.values(ix, iz) = coherence_of(pixel, samples.valid_count[p]);
    }
  }
  return map;
}

CoherenceMap coherence_factor_pl(const ApertureSamples &samples) {
  const int window = samples.window_samples;
  if (window < 1) {
    throw Error(Errc::InvalidArgument, "coherence_factor_pl: aperture samples carry no P-sample windows");
  }
  const PixelGrid &grid = samples.grid;
  CoherenceMap map{grid, Field2D<double>(grid.nx, grid.nz), CoherenceKind::CFPL, window};
  std::vector<float> instant;
  for (int ix = 0; ix < grid.nx; ++ix) {
    for (int iz = 0; iz < grid.nz; ++iz) {
      const std::size_t p = samples.pixel_index(ix, iz);
      const int count = samples.count(p);
      instant.resize(static_cast<std::size_t>(count));
      double total = 0.0;
      for (int j = 0; j < window; ++j) {
        for (int s = 0; s < count; ++s) {
          instant[s] = samples.windows[(samples.offsets[p] + s) * window + j];
        }
        total += coherence_of(instant, samples.valid_count[p]);
      }
      map.values(ix, iz) = total / window;
    }
  }
  return map;
}

namespace {

BeamformedImage with_fresh_envelope(BeamformedImage image) {
  if (image.values.nz() >= 4) return envelope(std::move(image));
  image.envelope.reset();
  return image;
}

}  // namespace

BeamformedImage apply_weighting(const BeamformedImage &image, const CoherenceMap &map) {
  if (!(image.grid == map.grid) || !image.values.same_shape(map.values)) {
    throw Error(Errc::GridMismatch, "apply_weighting: image and map grids differ");
  }
  BeamformedImage weighted = image;
  auto &values = weighted.values.data();
  const auto &weights = map.values.data();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= weights[i];
  return with_fresh_envelope(std::move(weighted));
}

BeamMap effective_beam_map(const ArrayGeometry &geometry, const PixelGrid &grid,
                           double f_number, [[maybe_unused]] const Medium &medium,
                           [[maybe_unused]] const PulseSpec &pulse, const PressureModel &model) {
  geometry.validate();
  grid.validate();
  BeamMap map{grid, Field2D<double>(grid.nx, grid.nz)};
  for (int ix = 0; ix < grid.nx; ++ix) {
    for (int iz = 0; iz < grid.nz; ++iz) {
      const Point pixel = grid.pixel(ix, iz);
      const ElementRange range = sub_aperture_elements(pixel, geometry, f_number);
      double amplitude = 0.0;
      for (int i = range.first; i < range.first + range.count; ++i) {
        amplitude += element_beam_amplitude(geometry, i, pixel, model);
      }
      map.values(ix, iz) = amplitude;
    }
  }
  return map;
}

BeamformedImage amplitude_correct(const BeamformedImage &image, const BeamMap &beam_map,
                                  double epsilon) {
  if (!(image.grid == beam_map.grid) || !image.values.same_shape(beam_map.values)) {
    throw Error(Errc::GridMismatch, "amplitude_correct: image and beam map grids differ");
  }
  if (!(epsilon > 0.0)) throw Error(Errc::InvalidArgument, "amplitude_correct: epsilon must be > 0");
  double peak = 0.0;
  for (double v : beam_map.values.data()) peak = std::max(peak, v);
  if (!(peak > 0.0)) throw Error(Errc::InvalidArgument, "amplitude_correct: beam map is not positive");

  const double floor_value = epsilon * peak;
  BeamformedImage corrected = image;
  auto &values = corrected.values.data();
  const auto &beam = beam_map.values.data();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] /= std::max(beam[i], floor_value);
  return with_fresh_envelope(std::move(corrected));
}

}  // namespace aesynth
