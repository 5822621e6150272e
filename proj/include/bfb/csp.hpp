#pragma once

#include "bfb/types.hpp"

#include <vector>

namespace bfb {

// Per-class mean covariance, each epoch trace-normalized before averaging.
struct CovariancePair {
  Matrix c1;  // left
  Matrix c2;  // right
};

// CSP projection: `filters` rows are spatial filters sorted by generalized
// eigenvalue, the `pairs` largest first, then the `pairs` smallest.
// Eigenvalues satisfy W (c1 + c2) W^T = I (whitening identity).
struct SpatialFilterBank {
  Matrix filters;      // 2*pairs x channels
  Vector eigenvalues;  // descending, in [0,1]
  int pairs{3};
};

CovariancePair estimate_class_covariances(const std::vector<SampleBlock>& epochs,
                                          const std::vector<MiClass>& labels);

SpatialFilterBank train_csp(const CovariancePair& cov, int pairs = 3);

SampleBlock apply_csp(const SpatialFilterBank& bank, const SampleBlock& block);

}  // namespace bfb
