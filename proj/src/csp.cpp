#include "bfb/csp.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace bfb {

CovariancePair estimate_class_covariances(const std::vector<SampleBlock>& epochs,
                                          const std::vector<MiClass>& labels) {
  if (epochs.size() != labels.size() || epochs.empty())
    throw std::invalid_argument("estimate_class_covariances: epochs/labels mismatch");
  const int ch = epochs[0].channels();

  Matrix sum1 = Matrix::Zero(ch, ch), sum2 = Matrix::Zero(ch, ch);
  int n1 = 0, n2 = 0;
  for (size_t i = 0; i < epochs.size(); ++i) {
    const Matrix& x = epochs[i].data;
    if (x.rows() != ch) throw std::invalid_argument("estimate_class_covariances: channel mismatch");
    const Matrix centered = x.colwise() - x.rowwise().mean();
    Matrix c = centered * centered.transpose();
    const double tr = c.trace();
    if (tr > 0.0) c /= tr;
    if (labels[i] == MiClass::Left) {
      sum1 += c;
      ++n1;
    } else {
      sum2 += c;
      ++n2;
    }
  }
  if (n1 == 0 || n2 == 0)
    throw std::invalid_argument("estimate_class_covariances: need at least one epoch per class");
  return CovariancePair{sum1 / n1, sum2 / n2};
}

SpatialFilterBank train_csp(const CovariancePair& cov, int pairs) {
  const int ch = static_cast<int>(cov.c1.rows());
  if (pairs < 1 || 2 * pairs > ch) throw std::invalid_argument("train_csp: invalid pair count");
  if (cov.c1.rows() != cov.c1.cols() || cov.c2.rows() != cov.c2.cols() || cov.c2.rows() != ch)
    throw std::invalid_argument("train_csp: covariance shape mismatch");
  if ((cov.c1 - cov.c1.transpose()).cwiseAbs().maxCoeff() > 1e-8 ||
      (cov.c2 - cov.c2.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw std::invalid_argument("train_csp: covariances must be symmetric");

  // c1 w = lambda (c1 + c2) w; ridge on the composite for conditioning.
  const Matrix composite = cov.c1 + cov.c2 + 1e-9 * Matrix::Identity(ch, ch);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(cov.c1, composite);
  if (solver.info() != Eigen::Success) throw std::runtime_error("train_csp: eigensolver failed");

  // Eigen returns eigenvalues ascending with B-orthonormal eigenvectors.
  const Vector evals = solver.eigenvalues();
  const Matrix evecs = solver.eigenvectors();

  SpatialFilterBank bank;
  bank.pairs = pairs;
  bank.filters.resize(2 * pairs, ch);
  bank.eigenvalues.resize(2 * pairs);
  for (int i = 0; i < pairs; ++i) {
    bank.eigenvalues[i] = evals[ch - 1 - i];          // largest, descending
    bank.filters.row(i) = evecs.col(ch - 1 - i).transpose();
    bank.eigenvalues[2 * pairs - 1 - i] = evals[i];   // smallest, ascending at the tail
    bank.filters.row(2 * pairs - 1 - i) = evecs.col(i).transpose();
  }

  // Eigenvectors are sign-ambiguous; make the largest entry positive.
  for (int r = 0; r < bank.filters.rows(); ++r) {
    int idx;
    bank.filters.row(r).cwiseAbs().maxCoeff(&idx);
    if (bank.filters(r, idx) < 0.0) bank.filters.row(r) *= -1.0;
  }
  return bank;
}

SampleBlock apply_csp(const SpatialFilterBank& bank, const SampleBlock& block) {
  if (block.channels() != bank.filters.cols())
    throw std::invalid_argument("apply_csp: channel count does not match filter width");
  return SampleBlock{bank.filters * block.data, block.rate};
}

}  // namespace bfb
