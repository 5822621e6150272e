#include "bfb/bias.hpp"

#include <cmath>
#include <stdexcept>

namespace bfb {

const char* bias_name(BiasKind k) {
  switch (k) {
    case BiasKind::Negative: return "negative";
    case BiasKind::Positive: return "positive";
    case BiasKind::None: return "none";
  }
  return "none";
}

BiasKind bias_from_name(const std::string& name) {
  if (name == "negative") return BiasKind::Negative;
  if (name == "positive") return BiasKind::Positive;
  if (name == "none") return BiasKind::None;
  throw std::invalid_argument("unknown bias kind: " + name);
}

double BiasSpec::shape_a() const {
  switch (kind) {
    case BiasKind::Positive: return 1.0 - k;
    case BiasKind::Negative: return 1.0 + k;
    case BiasKind::None: return 1.0;
  }
  return 1.0;
}

double BiasSpec::shape_b() const {
  switch (kind) {
    case BiasKind::Positive: return 1.0 + k;
    case BiasKind::Negative: return 1.0 - k;
    case BiasKind::None: return 1.0;
  }
  return 1.0;
}

namespace {

// Continued fraction for I_x(a,b) (modified Lentz). Valid for
// x < (a+1)/(a+b+2); the caller applies the symmetry switch.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 1e-12;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;

  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;

    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("beta_cdf: continued fraction did not converge");
}

}  // namespace

double beta_cdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta_cdf: shapes must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("beta_cdf: x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  // log of x^a (1-x)^b / (a B(a,b)) prefactor
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b;
}

double apply_bias(const BiasSpec& spec, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("apply_bias: x must be in [0,1]");
  if (spec.kind == BiasKind::None) return x;
  return beta_cdf(x, spec.shape_a(), spec.shape_b());
}

}  // namespace bfb
