#pragma once

// Independent numerical oracles for the test suites. Everything here stays
// off the implementation paths it checks: the beta CDF oracle integrates the
// density by adaptive quadrature (no continued fraction, no lgamma), the
// filter oracle evaluates the designed transfer function on the unit circle,
// and the t-tail oracle integrates the Student density.

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double tol,
                                   int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50);
}

// Unnormalized integral of t^(a-1) (1-t)^(b-1) over [0, x] for x <= 1/2,
// with the substitution u = t^a that removes the left-endpoint singularity.
inline double beta_left_integral(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  const double upper = std::pow(x, a);
  return adaptive_simpson(
             [a, b](double u) { return std::pow(1.0 - std::pow(u, 1.0 / a), b - 1.0); }, 0.0,
             upper) /
         a;
}

// Same integral over [x, 1] for x >= 1/2 via u = (1-t)^b.
inline double beta_right_integral(double x, double a, double b) {
  if (x >= 1.0) return 0.0;
  const double upper = std::pow(1.0 - x, b);
  return adaptive_simpson(
             [a, b](double u) { return std::pow(1.0 - std::pow(u, 1.0 / b), a - 1.0); }, 0.0,
             upper) /
         b;
}

inline double beta_cdf(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("oracle beta_cdf: bad shapes");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double total = beta_left_integral(0.5, a, b) + beta_right_integral(0.5, a, b);
  const double partial =
      x <= 0.5 ? beta_left_integral(x, a, b) : total - beta_right_integral(x, a, b);
  return partial / total;
}

// |H(e^{j 2 pi f / rate})| for a cascade of biquads given as
// (b0, b1, b2, a1, a2) tuples.
template <typename Section>
double sos_magnitude(const std::vector<Section>& sections, double freq_hz, double rate) {
  const std::complex<double> zi = std::polar(1.0, -2.0 * M_PI * freq_hz / rate);
  std::complex<double> h(1.0, 0.0);
  for (const auto& s : sections)
    h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
  return std::abs(h);
}

// Two-sided Student-t tail probability by quadrature of the density;
// p = 2 * integral(|t|, inf) / integral(-inf, inf).
inline double t_two_sided_p(double t, double df) {
  const double at = std::abs(t);
  if (at == 0.0) return 1.0;
  const auto density = [df](double v) {
    return std::pow(1.0 + v * v / df, -(df + 1.0) / 2.0);
  };
  const double body = adaptive_simpson(density, 0.0, at);
  // v = at / u maps (at, inf) onto (0, 1)
  const double tail = adaptive_simpson(
      [&](double u) {
        if (u <= 0.0) return 0.0;
        const double v = at / u;
        return density(v) * at / (u * u);
      },
      0.0, 1.0);
  return tail / (body + tail);
}

}  // namespace oracle
