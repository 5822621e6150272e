#include "bfb/dsp.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace bfb {

namespace {

using cd = std::complex<double>;

void check_band(const BandSpec& band, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("design_bandpass: rate must be positive");
  if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < rate / 2.0))
    throw std::invalid_argument("design_bandpass: band must satisfy 0 < low < high < rate/2");
}

}  // namespace

FilterState FilterState::zero(const FilterCoeffs& coeffs, int channels) {
  FilterState s;
  s.z1 = Matrix::Zero(static_cast<int>(coeffs.sections.size()), channels);
  s.z2 = Matrix::Zero(static_cast<int>(coeffs.sections.size()), channels);
  return s;
}

FilterCoeffs design_bandpass(const BandSpec& band, double rate, int order) {
  check_band(band, rate);
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("design_bandpass: order must be even and >= 2");

  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * rate;  // bilinear constant

  // Pre-warp band edges so the digital -3 dB points land exactly on them.
  const double w1 = fs2 * std::tan(pi * band.low_hz / rate);
  const double w2 = fs2 * std::tan(pi * band.high_hz / rate);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  FilterCoeffs out;
  out.order = order;
  out.sections.reserve(static_cast<size_t>(order));

  // Upper-half-plane prototype poles; conjugates are implicit.
  for (int m = 0; m < order / 2; ++m) {
    const double theta = pi * (2.0 * m + order + 1.0) / (2.0 * order);
    const cd p(std::cos(theta), std::sin(theta));

    // Low-pass -> band-pass: each prototype pole splits into two.
    const cd bp = bw * p / 2.0;
    const cd disc = std::sqrt(bp * bp - cd(w0 * w0, 0.0));
    for (const cd s : {bp + disc, bp - disc}) {
      const cd zd = (cd(fs2, 0.0) + s) / (cd(fs2, 0.0) - s);
      Biquad q;
      q.b0 = 1.0;
      q.b1 = 0.0;
      q.b2 = -1.0;  // one zero at z=+1, one at z=-1
      q.a1 = -2.0 * zd.real();
      q.a2 = std::norm(zd);
      out.sections.push_back(q);
    }
  }

  // Normalize to unit gain at the warped center frequency.
  const double wc = 2.0 * std::atan(w0 / fs2);  // rad/sample
  const cd z = std::polar(1.0, wc);
  const cd zi = 1.0 / z;
  cd h(1.0, 0.0);
  for (const Biquad& q : out.sections)
    h *= (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
  const double g = std::pow(1.0 / std::abs(h), 1.0 / order);
  for (Biquad& q : out.sections) {
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
  }
  return out;
}

SampleBlock filter_stream(const FilterCoeffs& coeffs, FilterState& state, const SampleBlock& block) {
  const int ns = static_cast<int>(coeffs.sections.size());
  const int ch = block.channels();
  if (state.z1.rows() != ns || state.z1.cols() != ch || state.z2.rows() != ns || state.z2.cols() != ch)
    throw std::invalid_argument("filter_stream: state dimensions do not match coeffs/block");

  SampleBlock out;
  out.rate = block.rate;
  out.data.resize(ch, block.samples());

  Vector x(ch), y(ch);
  for (int t = 0; t < block.samples(); ++t) {
    x = block.data.col(t);
    for (int s = 0; s < ns; ++s) {
      const Biquad& q = coeffs.sections[s];
      y = q.b0 * x + state.z1.row(s).transpose();
      state.z1.row(s) = (q.b1 * x - q.a1 * y + state.z2.row(s).transpose()).transpose();
      state.z2.row(s) = (q.b2 * x - q.a2 * y).transpose();
      x = y;
    }
    out.data.col(t) = x;
  }
  return out;
}

Matrix filter_offline(const FilterCoeffs& coeffs, const Matrix& data) {
  FilterState state = FilterState::zero(coeffs, static_cast<int>(data.rows()));
  SampleBlock block{data, 1.0};
  return filter_stream(coeffs, state, block).data;
}

Vector band_power(const SampleBlock& window) {
  constexpr double kVarFloor = 1e-12;
  const int n = window.samples();
  if (n < 2) throw std::invalid_argument("band_power: window too short");
  Vector out(window.channels());
  for (int c = 0; c < window.channels(); ++c) {
    const double mean = window.data.row(c).mean();
    const double var = (window.data.row(c).array() - mean).square().sum() / n;
    out[c] = std::log(std::max(var, kVarFloor));
  }
  return out;
}

BandChoice select_band(const std::vector<SampleBlock>& epochs,
                       const std::vector<MiClass>& labels,
                       const BandGrid& grid,
                       int order) {
  if (epochs.size() != labels.size() || epochs.empty())
    throw std::invalid_argument("select_band: epochs/labels mismatch");
  bool has_left = false, has_right = false;
  for (MiClass c : labels) (c == MiClass::Left ? has_left : has_right) = true;
  if (!has_left || !has_right) throw std::invalid_argument("select_band: need both classes");

  const int n = static_cast<int>(epochs.size());
  const int ch = epochs[0].channels();
  const double rate = epochs[0].rate;

  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = labels[i] == MiClass::Right ? 1.0 : 0.0;
  const double ymean = y.mean();
  const double ysd = std::sqrt((y.array() - ymean).square().sum() / n);

  BandChoice best;
  best.score = -1.0;
  Matrix feat(n, ch);
  for (double width = grid.min_width_hz; width <= grid.max_width_hz + 1e-9; width += grid.step_hz) {
    for (double low = grid.low_hz; low + width <= grid.high_hz + 1e-9; low += grid.step_hz) {
      const BandSpec band{low, low + width};
      const FilterCoeffs coeffs = design_bandpass(band, rate, order);
      for (int i = 0; i < n; ++i) {
        SampleBlock filtered{filter_offline(coeffs, epochs[i].data), rate};
        feat.row(i) = band_power(filtered).transpose();
      }
      double score = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double fmean = feat.col(c).mean();
        const double fsd = std::sqrt((feat.col(c).array() - fmean).square().sum() / n);
        if (fsd < 1e-15 || ysd < 1e-15) continue;
        const double cov = ((feat.col(c).array() - fmean) * (y.array() - ymean)).sum() / n;
        score += std::abs(cov / (fsd * ysd));
      }
      score /= ch;
      if (score > best.score) {
        best.score = score;
        best.band = band;
      }
    }
  }
  return best;
}

}  // namespace bfb
