#include "bfb/enet.hpp"

#include "bfb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace bfb {

std::string factor_label(int j, bool reference) {
  std::string name = kFactorNames.at(static_cast<size_t>(j));
  if (reference) {
    const auto pos = name.find("_baseline");
    if (pos != std::string::npos) name = name.substr(0, pos) + "_reference";
  }
  return name;
}

int group_block(BiasKind kind) {
  for (int k = 0; k < 3; ++k)
    if (kGroupOrder[static_cast<size_t>(k)] == kind) return k;
  throw std::invalid_argument("group_block: unknown group");
}

DesignMatrix build_interactions(const std::vector<FactorRow>& rows, bool references) {
  if (rows.empty()) throw std::invalid_argument("build_interactions: no rows");
  const int n = static_cast<int>(rows.size());
  const int p = 1 + 3 * kFactorCount;

  DesignMatrix d;
  d.X = Matrix::Zero(n, p);
  d.subject.resize(rows.size());
  d.column_names.reserve(p);
  d.column_names.push_back("intercept");
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < kFactorCount; ++j)
      d.column_names.push_back(std::string(bias_name(kGroupOrder[static_cast<size_t>(k)])) +
                               ":" + factor_label(j, references));

  for (int i = 0; i < n; ++i) {
    const FactorRow& row = rows[static_cast<size_t>(i)];
    for (double v : row.factors)
      if (!std::isfinite(v)) throw std::invalid_argument("build_interactions: non-finite factor");
    const int k = group_block(row.group);
    d.X(i, 0) = 1.0;
    for (int j = 0; j < kFactorCount; ++j)
      d.X(i, 1 + 9 * k + j) = row.factors[static_cast<size_t>(j)];
    d.subject[static_cast<size_t>(i)] = row.subject;
  }
  return d;
}

MinMaxBounds fit_minmax(const Matrix& X, const std::vector<int>& train_rows) {
  if (train_rows.empty()) throw std::invalid_argument("fit_minmax: no training rows");
  const int p = static_cast<int>(X.cols());
  MinMaxBounds b;
  b.lo = Vector::Constant(p, std::numeric_limits<double>::infinity());
  b.hi = Vector::Constant(p, -std::numeric_limits<double>::infinity());
  for (int r : train_rows) {
    b.lo = b.lo.cwiseMin(X.row(r).transpose());
    b.hi = b.hi.cwiseMax(X.row(r).transpose());
  }
  return b;
}

Matrix apply_minmax(const Matrix& X, const MinMaxBounds& bounds) {
  Matrix out = X;
  for (int j = 1; j < X.cols(); ++j) {
    const double span = bounds.hi[j] - bounds.lo[j];
    if (span > 0.0)
      out.col(j) = (X.col(j).array() - bounds.lo[j]) / span;
    else
      out.col(j).setZero();  // degenerate training column
  }
  return out;
}

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

double enet_objective(const Matrix& X, const Vector& y, const Vector& beta, double alpha,
                      double lambda) {
  const double sse = (y - X * beta).squaredNorm();
  double l1 = 0.0, l2 = 0.0;
  for (int j = 1; j < beta.size(); ++j) {
    l1 += std::abs(beta[j]);
    l2 += beta[j] * beta[j];
  }
  return sse + lambda * (0.5 * (1.0 - alpha) * l2 + alpha * l1);
}

namespace {

// Core cyclic coordinate descent on the normal-equation system G = X^T X,
// q = X^T y; column 0 is the unpenalized intercept. Full sweeps establish
// the active set, refinement sweeps iterate only the nonzero coefficients
// until they settle, which reaches the same fixpoint far faster on sparse
// solutions. Returns the sweep count.
template <typename OnSweep>
int cd_gram(const Matrix& G, const Vector& q, double alpha, double lambda, Vector& beta,
            double tol, int max_sweeps, OnSweep&& on_sweep) {
  const int p = static_cast<int>(G.cols());
  Vector u = G * beta;
  const double l1_term = lambda * alpha / 2.0;
  const double l2_term = lambda * (1.0 - alpha) / 2.0;

  const auto update_coord = [&](int j) {
    const double gjj = G(j, j);
    if (gjj <= 0.0) return 0.0;
    const double old = beta[j];
    const double z = q[j] - u[j] + gjj * old;
    const double updated =
        j == 0 ? z / gjj  // intercept, unpenalized
               : soft_threshold(z, l1_term) / (gjj + l2_term);
    if (updated == old) return 0.0;
    u += G.col(j) * (updated - old);
    beta[j] = updated;
    return std::abs(updated - old);
  };

  int sweep = 0;
  while (sweep < max_sweeps) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) max_change = std::max(max_change, update_coord(j));
    ++sweep;
    on_sweep(beta);
    if (max_change < tol) break;

    while (sweep < max_sweeps) {
      double change = update_coord(0);
      for (int j = 1; j < p; ++j)
        if (beta[j] != 0.0) change = std::max(change, update_coord(j));
      ++sweep;
      on_sweep(beta);
      if (change < tol) break;
    }
  }
  return sweep;
}

}  // namespace

EnetFit coordinate_descent(const Matrix& X, const Vector& y, double alpha, double lambda,
                           const Vector* warm_start, const CdOptions& opts) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("coordinate_descent: alpha in [0,1]");
  if (!(lambda >= 0.0)) throw std::invalid_argument("coordinate_descent: lambda >= 0");
  if (!X.allFinite() || !y.allFinite()) throw std::runtime_error("coordinate_descent: non-finite input");
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n) throw std::invalid_argument("coordinate_descent: size mismatch");

  EnetFit fit;
  fit.alpha = alpha;
  fit.lambda = lambda;
  Vector beta = warm_start && warm_start->size() == p ? *warm_start : Vector::Zero(p);

  const Matrix gram = X.transpose() * X;
  const Vector q = X.transpose() * y;
  if (opts.record_objective) {
    fit.sweep_objectives.push_back(enet_objective(X, y, beta, alpha, lambda));
    fit.sweeps = cd_gram(gram, q, alpha, lambda, beta, opts.tol, opts.max_sweeps,
                         [&](const Vector& b) {
                           fit.sweep_objectives.push_back(enet_objective(X, y, b, alpha, lambda));
                         });
  } else {
    fit.sweeps =
        cd_gram(gram, q, alpha, lambda, beta, opts.tol, opts.max_sweeps, [](const Vector&) {});
  }
  fit.beta = std::move(beta);
  return fit;
}

std::vector<double> lambda_path(const Matrix& X, const Vector& y, double alpha, int count) {
  if (count < 2) throw std::invalid_argument("lambda_path: count >= 2");
  const double ybar = y.mean();
  double zmax = 0.0;
  for (int j = 1; j < X.cols(); ++j)
    zmax = std::max(zmax, std::abs(X.col(j).dot(y - Vector::Constant(y.size(), ybar))));
  double lmax = 2.0 * zmax / std::max(alpha, 0.001);
  if (!(lmax > 0.0)) lmax = 1e-12;

  std::vector<double> path(static_cast<size_t>(count));
  const double ratio = 1e-4;
  for (int i = 0; i < count; ++i)
    path[static_cast<size_t>(i)] = lmax * std::pow(ratio, static_cast<double>(i) / (count - 1));
  return path;
}

namespace {

std::vector<int> unique_subjects(const std::vector<int>& subject) {
  std::set<int> s(subject.begin(), subject.end());
  return std::vector<int>(s.begin(), s.end());
}

struct FoldData {
  std::vector<int> train_rows, test_rows;
  Matrix x_train, x_test;
  Vector y_train, y_test;
  Matrix gram;  // x_train^T x_train, shared by every refit on this fold
};

FoldData make_fold(const Matrix& X, const Vector& y, const std::vector<int>& subject,
                   int held_out) {
  FoldData f;
  for (int i = 0; i < static_cast<int>(subject.size()); ++i)
    (subject[static_cast<size_t>(i)] == held_out ? f.test_rows : f.train_rows).push_back(i);
  const MinMaxBounds bounds = fit_minmax(X, f.train_rows);
  Matrix normalized = apply_minmax(X, bounds);
  f.x_train.resize(static_cast<int>(f.train_rows.size()), X.cols());
  f.y_train.resize(static_cast<int>(f.train_rows.size()));
  for (size_t r = 0; r < f.train_rows.size(); ++r) {
    f.x_train.row(static_cast<int>(r)) = normalized.row(f.train_rows[r]);
    f.y_train[static_cast<int>(r)] = y[f.train_rows[r]];
  }
  f.x_test.resize(static_cast<int>(f.test_rows.size()), X.cols());
  f.y_test.resize(static_cast<int>(f.test_rows.size()));
  for (size_t r = 0; r < f.test_rows.size(); ++r) {
    f.x_test.row(static_cast<int>(r)) = normalized.row(f.test_rows[r]);
    f.y_test[static_cast<int>(r)] = y[f.test_rows[r]];
  }
  f.gram = f.x_train.transpose() * f.x_train;
  return f;
}

Vector fold_fit(const FoldData& f, const Vector& y_train, double alpha, double lambda,
                Vector warm = {}) {
  Vector beta = warm.size() == f.gram.cols() ? std::move(warm) : Vector::Zero(f.gram.cols());
  const Vector q = f.x_train.transpose() * y_train;
  cd_gram(f.gram, q, alpha, lambda, beta, 1e-9, 100000, [](const Vector&) {});
  return beta;
}

// Grid-search fits only rank hyperparameters, so they run at a looser
// tolerance; reported fits keep the 1e-9 contract.
constexpr double kSearchTol = 1e-7;
constexpr int kSearchMaxSweeps = 300;

std::vector<double> alpha_grid(const EnetCvOptions& opts) {
  if (!opts.alphas.empty()) return opts.alphas;
  if (opts.alpha_count < 1) throw std::invalid_argument("alpha grid: need >= 1 values");
  std::vector<double> alphas(static_cast<size_t>(opts.alpha_count));
  if (opts.alpha_count == 1) {
    alphas[0] = 1.0;
    return alphas;
  }
  for (int i = 0; i < opts.alpha_count; ++i)
    alphas[static_cast<size_t>(i)] = static_cast<double>(i) / (opts.alpha_count - 1);
  return alphas;
}

struct HyperChoice {
  double alpha{1.0}, lambda{0.0}, rmse{std::numeric_limits<double>::infinity()};
};

// LOSO grid search over (alpha, lambda) on the given rows; ties prefer the
// sparser model: larger lambda, then smaller alpha.
HyperChoice select_hypers(const Matrix& X, const Vector& y, const std::vector<int>& subject,
                          const EnetCvOptions& opts) {
  const std::vector<int> subjects = unique_subjects(subject);
  if (subjects.size() < 2) throw std::invalid_argument("select_hypers: need >= 2 subjects");
  const std::vector<double> alphas = alpha_grid(opts);

  std::vector<FoldData> folds;
  folds.reserve(subjects.size());
  for (int s : subjects) folds.push_back(make_fold(X, y, subject, s));

  // Shared lambda sequence computed on the normalized full training design,
  // matching the per-fold scale the fits run on.
  std::vector<int> all_rows(static_cast<size_t>(X.rows()));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const Matrix x_norm = apply_minmax(X, fit_minmax(X, all_rows));

  HyperChoice best;
  for (double alpha : alphas) {
    const std::vector<double> path = lambda_path(x_norm, y, alpha, opts.lambda_count);
    // Pooled squared error per lambda across folds.
    std::vector<double> sq(path.size(), 0.0);
    for (const FoldData& f : folds) {
      Vector warm = Vector::Zero(X.cols());
      const Vector q = f.x_train.transpose() * f.y_train;
      for (size_t li = 0; li < path.size(); ++li) {
        cd_gram(f.gram, q, alpha, path[li], warm, kSearchTol, kSearchMaxSweeps,
                [](const Vector&) {});
        sq[li] += (f.y_test - f.x_test * warm).squaredNorm();
      }
    }
    for (size_t li = 0; li < path.size(); ++li) {
      const double rmse = std::sqrt(sq[li] / static_cast<double>(y.size()));
      const bool better =
          rmse < best.rmse - 1e-12 ||
          (std::abs(rmse - best.rmse) <= 1e-12 &&
           (path[li] > best.lambda + 1e-15 ||
            (std::abs(path[li] - best.lambda) <= 1e-15 && alpha < best.alpha)));
      if (better) best = HyperChoice{alpha, path[li], rmse};
    }
  }
  return best;
}

}  // namespace

CvReport nested_loso_cv(const DesignMatrix& design, const Vector& y, const EnetCvOptions& opts) {
  const Matrix& X = design.X;
  if (y.size() != X.rows()) throw std::invalid_argument("nested_loso_cv: size mismatch");
  const std::vector<int> subjects = unique_subjects(design.subject);
  if (subjects.size() < 3) throw std::invalid_argument("nested_loso_cv: need >= 3 subjects");

  CvReport report;
  report.folds = static_cast<int>(subjects.size());
  report.predictions = Vector::Zero(y.size());

  // Outer loop: nested evaluation with inner LOSO hyperparameter search.
  for (int held_out : subjects) {
    std::vector<int> train_rows;
    std::vector<int> inner_subject;
    for (int i = 0; i < static_cast<int>(design.subject.size()); ++i)
      if (design.subject[static_cast<size_t>(i)] != held_out) {
        train_rows.push_back(i);
        inner_subject.push_back(design.subject[static_cast<size_t>(i)]);
      }
    Matrix x_inner(static_cast<int>(train_rows.size()), X.cols());
    Vector y_inner(static_cast<int>(train_rows.size()));
    for (size_t r = 0; r < train_rows.size(); ++r) {
      x_inner.row(static_cast<int>(r)) = X.row(train_rows[r]);
      y_inner[static_cast<int>(r)] = y[train_rows[r]];
    }
    const HyperChoice inner = select_hypers(x_inner, y_inner, inner_subject, opts);

    const FoldData fold = make_fold(X, y, design.subject, held_out);
    const Vector beta = fold_fit(fold, fold.y_train, inner.alpha, inner.lambda);
    const Vector pred = fold.x_test * beta;
    for (size_t r = 0; r < fold.test_rows.size(); ++r)
      report.predictions[fold.test_rows[r]] = pred[static_cast<int>(r)];
  }

  const double sse = (y - report.predictions).squaredNorm();
  report.rmse = std::sqrt(sse / static_cast<double>(y.size()));
  const double sst = (y.array() - y.mean()).square().sum();
  const double r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  const double n = static_cast<double>(y.size());
  const double p_pred = static_cast<double>(X.cols() - 1);
  report.adjusted_r2 =
      n - p_pred - 1.0 > 0.0 ? 1.0 - (1.0 - r2) * (n - 1.0) / (n - p_pred - 1.0) : r2;

  // Hyperparameters for the reported model: LOSO search on the whole data,
  // then a whole-dataset refit; coefficient spread from LOSO fits at the
  // selected hyperparameters.
  const HyperChoice chosen = select_hypers(X, y, design.subject, opts);
  report.alpha = chosen.alpha;
  report.lambda = chosen.lambda;

  std::vector<int> all_rows(static_cast<size_t>(X.rows()));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const MinMaxBounds bounds = fit_minmax(X, all_rows);
  const Matrix x_norm = apply_minmax(X, bounds);
  report.coef = coordinate_descent(x_norm, y, chosen.alpha, chosen.lambda).beta;

  Matrix fold_coefs(X.cols(), static_cast<int>(subjects.size()));
  for (size_t s = 0; s < subjects.size(); ++s) {
    const FoldData fold = make_fold(X, y, design.subject, subjects[s]);
    fold_coefs.col(static_cast<int>(s)) = fold_fit(fold, fold.y_train, chosen.alpha, chosen.lambda);
  }
  report.coef_mean = fold_coefs.rowwise().mean();
  report.coef_sd.resize(X.cols());
  for (int j = 0; j < X.cols(); ++j) {
    const double m = report.coef_mean[j];
    report.coef_sd[j] =
        std::sqrt((fold_coefs.row(j).array() - m).square().sum() / subjects.size());
  }
  return report;
}

PermutationReport permutation_test(const DesignMatrix& design, const Vector& y, double alpha,
                                   double lambda, PermScheme scheme, int n_perm,
                                   std::uint64_t seed, int jobs) {
  if (n_perm < 1) throw std::invalid_argument("permutation_test: n_perm >= 1");
  const Matrix& X = design.X;
  const std::vector<int> subjects = unique_subjects(design.subject);

  // Fold normalization depends on X only, so folds are shared across
  // permutations.
  std::vector<FoldData> folds;
  folds.reserve(subjects.size());
  for (int s : subjects) folds.push_back(make_fold(X, y, design.subject, s));

  const auto shuffle_values = [](Vector& values, Rng& rng) {
    for (int i = static_cast<int>(values.size()) - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(values[i], values[pick(rng)]);
    }
  };

  // One full LOSO pass at the fixed hyperparameters. `rng` non-null applies
  // the permutation scheme to the outcomes before fitting.
  const auto loso_pass = [&](Rng* rng, Matrix* coef_out) {
    Vector global = y;
    if (rng && scheme == PermScheme::ShuffleTrainAndTest) shuffle_values(global, *rng);
    double sq = 0.0;
    int count = 0;
    for (size_t fi = 0; fi < folds.size(); ++fi) {
      const FoldData& f = folds[fi];
      Vector yt(f.y_train.size());
      for (size_t r = 0; r < f.train_rows.size(); ++r)
        yt[static_cast<int>(r)] = global[f.train_rows[r]];
      if (rng && scheme == PermScheme::ShuffleTrainOnly) shuffle_values(yt, *rng);
      const Vector beta = fold_fit(f, yt, alpha, lambda);
      if (coef_out) coef_out->col(static_cast<int>(fi)) = beta;
      for (size_t r = 0; r < f.test_rows.size(); ++r) {
        const double pred = f.x_test.row(static_cast<int>(r)).dot(beta);
        const double truth = scheme == PermScheme::ShuffleTrainOnly
                                 ? y[f.test_rows[r]]
                                 : global[f.test_rows[r]];
        sq += (truth - pred) * (truth - pred);
        ++count;
      }
    }
    return std::sqrt(sq / count);
  };

  PermutationReport report;
  report.scheme = scheme;
  report.n_perm = n_perm;

  Matrix obs_coefs(X.cols(), static_cast<int>(folds.size()));
  report.observed_rmse = loso_pass(nullptr, &obs_coefs);
  report.coef_observed = obs_coefs.rowwise().mean();

  report.null_rmse.resize(static_cast<size_t>(n_perm));
  Matrix null_coefs(X.cols(), n_perm);
  parallel_for(static_cast<size_t>(n_perm), jobs, [&](size_t t) {
    Rng rng = make_rng(seed, {0x7065726du /* perm */, static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(scheme)});
    Matrix coefs(X.cols(), static_cast<int>(folds.size()));
    report.null_rmse[t] = loso_pass(&rng, &coefs);
    null_coefs.col(static_cast<int>(t)) = coefs.rowwise().mean();
  });

  int at_or_below = 0;
  for (double v : report.null_rmse)
    if (v <= report.observed_rmse) ++at_or_below;
  report.p_model = (1.0 + at_or_below) / (1.0 + n_perm);

  report.coef_p.resize(X.cols());
  for (int j = 0; j < X.cols(); ++j) {
    int exceed = 0;
    for (int t = 0; t < n_perm; ++t)
      if (std::abs(null_coefs(j, t)) >= std::abs(report.coef_observed[j])) ++exceed;
    report.coef_p[j] = (1.0 + exceed) / (1.0 + n_perm);
  }
  return report;
}

}  // namespace bfb
