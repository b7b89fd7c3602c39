#pragma once

#include <span>

#include "aesynth/core.hpp"
#include "aesynth/forward.hpp"
#include "aesynth/reconstruct.hpp"

namespace aesynth {

enum class CoherenceKind { CF, CFPL };

struct CoherenceMap {
  PixelGrid grid;
  Field2D<double> values;  // in [0, 1]
  CoherenceKind kind = CoherenceKind::CF;
  int pulse_samples = 1;   // P, CFPL only
};

/// |sum s_i|^2 / (M sum |s_i|^2) over M in-support samples; 0 when the
/// denominator vanishes.
double coherence_of(std::span<const float> samples, int element_count);

CoherenceMap coherence_factor(const ApertureSamples &samples);

/// Mean over the P window instants of the per-instant coherence factor.
CoherenceMap coherence_factor_pl(const ApertureSamples &samples);

/// Multiplies pre-envelope values by the map and recomputes the envelope.
BeamformedImage apply_weighting(const BeamformedImage &image, const CoherenceMap &map);

/// Synthesised on-focus beam amplitude sum_{i in S(x)} b_i(x).
struct BeamMap {
  PixelGrid grid;
  Field2D<double> values;
};

BeamMap effective_beam_map(const ArrayGeometry &geometry, const PixelGrid &grid,
                           double f_number, const Medium &medium, const PulseSpec &pulse,
                           const PressureModel &model);

inline constexpr double kDefaultCorrectionEpsilon = 0.05;

/// Divides by max(beam, epsilon * max(beam)) and recomputes the envelope.
BeamformedImage amplitude_correct(const BeamformedImage &image, const BeamMap &beam_map,
                                  double epsilon = kDefaultCorrectionEpsilon);

}  // namespace aesynth
