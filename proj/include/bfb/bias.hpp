#pragma once

#include "bfb/types.hpp"

namespace bfb {

enum class BiasKind { Negative, Positive, None };

const char* bias_name(BiasKind k);
BiasKind bias_from_name(const std::string& name);

// Beta-CDF remap of the classifier output. The shift k bends the identity
// map (a=b=1) into an optimistic (positive) or pessimistic (negative) curve;
// the two curves are mutually symmetric but individually asymmetric.
struct BiasSpec {
  BiasKind kind{BiasKind::None};
  double k{0.33};

  double shape_a() const;
  double shape_b() const;
};

// Regularized incomplete beta function I_x(a,b), evaluated by a Lentz
// continued fraction with the symmetry switch at x > (a+1)/(a+b+2).
// Absolute error <= 1e-10 over a,b in the bias range.
double beta_cdf(double x, double a, double b);

// Remaps x in [0,1] through the spec's beta CDF; identity for kind None.
double apply_bias(const BiasSpec& spec, double x);

}  // namespace bfb
