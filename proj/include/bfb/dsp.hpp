#pragma once

#include "bfb/types.hpp"

#include <vector>

namespace bfb {

struct BandSpec {
  double low_hz{8.0};
  double high_hz{12.0};
};

// One second-order section, direct form II transposed.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

struct FilterCoeffs {
  std::vector<Biquad> sections;
  int order{0};  // analog prototype order; band-pass yields `order` sections
};

// Per-section, per-channel delay registers. Single-owner: one stream only.
struct FilterState {
  Matrix z1;  // sections x channels
  Matrix z2;

  static FilterState zero(const FilterCoeffs& coeffs, int channels);
};

// Butterworth band-pass from the analog prototype via the bilinear transform
// with frequency pre-warping. `order` is the analog low-pass order (even);
// the band-pass cascade has `order` stable second-order sections and unit
// gain at the warped geometric center frequency.
FilterCoeffs design_bandpass(const BandSpec& band, double rate, int order = 4);

// Causal streaming filter; advances `state`. Splitting a signal into blocks
// yields bit-identical output to filtering it whole.
SampleBlock filter_stream(const FilterCoeffs& coeffs, FilterState& state, const SampleBlock& block);

// Convenience: zero-state filtering of a whole segment.
Matrix filter_offline(const FilterCoeffs& coeffs, const Matrix& data);

// Log band power: natural log of the per-channel variance of the window,
// variance floored at 1e-12 so degenerate windows stay finite.
Vector band_power(const SampleBlock& window);

struct BandGrid {
  double low_hz{4.0};
  double high_hz{40.0};
  double step_hz{2.0};
  double min_width_hz{4.0};
  double max_width_hz{24.0};
};

struct BandChoice {
  BandSpec band;
  double score{0.0};  // mean |point-biserial r| across channels
};

// Subject-specific band selection: grid search over contiguous candidate
// bands, scoring each by the mean absolute point-biserial correlation
// between per-channel log band power and the class label.
BandChoice select_band(const std::vector<SampleBlock>& epochs,
                       const std::vector<MiClass>& labels,
                       const BandGrid& grid = {},
                       int order = 4);

}  // namespace bfb
