#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bfb/enet.hpp"

#include <Eigen/QR>

#include <cmath>

using namespace bfb;

namespace {

// Orthonormal penalized design: column 0 (the unpenalized intercept slot)
// is all-zero so both active columns see the plain soft-threshold update.
void orthonormal_design(Matrix& x, Vector& y) {
  x = Matrix::Zero(2, 3);
  x(0, 1) = 1.0;
  x(1, 2) = 1.0;
  y = Vector(2);
  y << 3.0, 0.5;
}

Matrix random_design(int n, int p, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, p);
  x.col(0).setOnes();
  for (int i = 0; i < n; ++i)
    for (int j = 1; j < p; ++j) x(i, j) = normal(rng);
  return x;
}

bool kkt_holds(const Matrix& x, const Vector& y, const EnetFit& fit, double tol) {
  const Vector residual = y - x * fit.beta;
  for (int j = 1; j < x.cols(); ++j) {
    const double grad = 2.0 * x.col(j).dot(residual);
    if (fit.beta[j] != 0.0) {
      const double cond = grad - fit.lambda * (1.0 - fit.alpha) * fit.beta[j];
      if (std::abs(std::abs(cond) - fit.lambda * fit.alpha) > tol) return false;
      if (cond * fit.beta[j] < 0.0) return false;
    } else {
      if (std::abs(grad) > fit.lambda * fit.alpha + tol) return false;
    }
  }
  // unpenalized intercept: plain stationarity
  return std::abs(x.col(0).dot(residual)) < tol;
}

// Subject-run rows with per-session jitter on the state factors, mirroring
// the measured-baseline structure (keeps the interaction blocks full rank).
std::vector<FactorRow> planted_rows(int subjects_per_group, int runs, Rng& rng) {
  std::vector<FactorRow> rows;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.05);
  int id = 0;
  for (const BiasKind group : kGroupOrder) {
    for (int s = 0; s < subjects_per_group; ++s, ++id) {
      FactorRow base;
      base.subject = id;
      base.group = group;
      for (double& f : base.factors) f = uniform(rng);
      for (int r = 0; r < runs; ++r) {
        FactorRow row = base;
        if (r >= runs / 2)
          for (int j = 6; j < kFactorCount; ++j)
            row.factors[static_cast<size_t>(j)] =
                clamp01(base.factors[static_cast<size_t>(j)] + jitter(rng));
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace

TEST_CASE("soft-threshold closed form on an orthonormal design") {
  Matrix x;
  Vector y;
  orthonormal_design(x, y);
  const EnetFit fit = coordinate_descent(x, y, 1.0, 1.0);
  CHECK(std::abs(fit.beta[1] - 2.5) < 1e-12);
  CHECK(fit.beta[2] == 0.0);
}

TEST_CASE("ridge closed form on an orthonormal design") {
  Matrix x;
  Vector y;
  orthonormal_design(x, y);
  const EnetFit fit = coordinate_descent(x, y, 0.0, 2.0);
  CHECK(std::abs(fit.beta[1] - 1.5) < 1e-10);
  CHECK(std::abs(fit.beta[2] - 0.25) < 1e-10);
}

TEST_CASE("lambda zero reduces to ordinary least squares") {
  Rng rng = make_rng(41);
  const Matrix x = random_design(50, 6, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector y(50);
  for (int i = 0; i < 50; ++i) y[i] = normal(rng);
  const Vector ols = x.colPivHouseholderQr().solve(y);
  const EnetFit fit = coordinate_descent(x, y, 0.7, 0.0);
  CHECK((fit.beta - ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("input validation") {
  Matrix x = Matrix::Ones(3, 2);
  Vector y = Vector::Ones(3);
  CHECK_THROWS_AS(coordinate_descent(x, y, -0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(coordinate_descent(x, y, 0.5, -1.0), std::invalid_argument);
  y[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(coordinate_descent(x, y, 0.5, 1.0), std::runtime_error);
}

TEST_CASE("lambda_max zeroes every penalized coefficient") {
  Rng rng = make_rng(42);
  const Matrix x = random_design(60, 8, rng);
  std::normal_distribution<double> normal(0.0, 2.0);
  Vector y(60);
  for (int i = 0; i < 60; ++i) y[i] = 10.0 + normal(rng);

  for (double alpha : {1.0, 0.5}) {
    const std::vector<double> path = lambda_path(x, y, alpha, 100);
    CHECK(path.size() == 100);
    for (size_t i = 1; i < path.size(); ++i) CHECK(path[i] < path[i - 1]);
    const EnetFit fit = coordinate_descent(x, y, alpha, path.front());
    for (int j = 1; j < x.cols(); ++j) CHECK(fit.beta[j] == 0.0);
    CHECK(std::abs(fit.beta[0] - y.mean()) < 1e-8);
  }
}

TEST_CASE("ridge path uses the alpha floor") {
  Rng rng = make_rng(43);
  const Matrix x = random_design(40, 4, rng);
  Vector y = x.col(1) * 2.0 + Vector::Ones(40);
  const std::vector<double> lasso = lambda_path(x, y, 1.0, 10);
  const std::vector<double> ridge = lambda_path(x, y, 0.0, 10);
  CHECK(std::abs(ridge.front() - lasso.front() / 0.001) < 1e-6 * ridge.front());
}

TEST_CASE("KKT conditions hold along the path") {
  Rng rng = make_rng(44);
  const Matrix x = random_design(60, 10, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector y(60);
  for (int i = 0; i < 60; ++i)
    y[i] = 3.0 + 2.0 * x(i, 1) - 1.5 * x(i, 4) + normal(rng);

  for (double alpha : {1.0, 0.7, 0.3}) {
    const std::vector<double> path = lambda_path(x, y, alpha, 25);
    Vector warm = Vector::Zero(10);
    for (double lambda : path) {
      const EnetFit fit = coordinate_descent(x, y, alpha, lambda, &warm);
      warm = fit.beta;
      CHECK(kkt_holds(x, y, fit, 1e-6));
    }
  }
}

TEST_CASE("objective is non-increasing across sweeps") {
  Rng rng = make_rng(45);
  const Matrix x = random_design(50, 8, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector y(50);
  for (int i = 0; i < 50; ++i) y[i] = 1.0 + x(i, 2) * 4.0 + normal(rng);

  CdOptions opts;
  opts.record_objective = true;
  const EnetFit fit = coordinate_descent(x, y, 0.5, 3.0, nullptr, opts);
  REQUIRE(fit.sweep_objectives.size() > 1);
  for (size_t i = 1; i < fit.sweep_objectives.size(); ++i)
    CHECK(fit.sweep_objectives[i] <=
          fit.sweep_objectives[i - 1] + 1e-9 * std::max(1.0, fit.sweep_objectives[i - 1]));
}

TEST_CASE("warm starts land on the cold-start solution") {
  Rng rng = make_rng(46);
  const Matrix x = random_design(50, 8, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector y(50);
  for (int i = 0; i < 50; ++i) y[i] = 2.0 * x(i, 3) + normal(rng);

  const std::vector<double> path = lambda_path(x, y, 0.8, 30);
  Vector warm = Vector::Zero(8);
  for (double lambda : path) {
    const EnetFit warm_fit = coordinate_descent(x, y, 0.8, lambda, &warm);
    warm = warm_fit.beta;
    const EnetFit cold_fit = coordinate_descent(x, y, 0.8, lambda);
    CHECK((warm_fit.beta - cold_fit.beta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("min-max normalization") {
  Matrix x(3, 2);
  x << 1, 2, 1, 4, 1, 6;
  const MinMaxBounds bounds = fit_minmax(x, {0, 1, 2});
  const Matrix norm = apply_minmax(x, bounds);
  CHECK(norm(0, 1) == 0.0);
  CHECK(norm(1, 1) == 0.5);
  CHECK(norm(2, 1) == 1.0);
  CHECK(norm.col(0).isOnes());  // intercept untouched

  // training bounds from a subset; outside rows may exit [0,1]
  const MinMaxBounds sub = fit_minmax(x, {0, 1});
  const Matrix norm2 = apply_minmax(x, sub);
  CHECK(norm2(2, 1) == doctest::Approx(2.0));

  Matrix constant(3, 2);
  constant << 1, 7, 1, 7, 1, 7;
  const Matrix norm3 = apply_minmax(constant, fit_minmax(constant, {0, 1, 2}));
  CHECK(norm3.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("interaction design layout") {
  std::vector<FactorRow> rows;
  FactorRow row;
  row.subject = 7;
  row.group = BiasKind::Negative;
  for (int j = 0; j < kFactorCount; ++j) row.factors[static_cast<size_t>(j)] = 0.1 * (j + 1);
  rows.push_back(row);
  const DesignMatrix d = build_interactions(rows);
  CHECK(d.X.rows() == 1);
  CHECK(d.X.cols() == 28);
  CHECK(d.X(0, 0) == 1.0);
  for (int j = 0; j < 9; ++j) CHECK(d.X(0, 1 + j) == doctest::Approx(0.1 * (j + 1)));
  for (int c = 10; c < 28; ++c) CHECK(d.X(0, c) == 0.0);
  CHECK(d.column_names[1] == "negative:anxiety");
  CHECK(d.column_names[10] == "positive:anxiety");
  CHECK(d.column_names[27] == "none:nasa_baseline");

  // reference naming swaps only the state factors
  const DesignMatrix ref = build_interactions(rows, true);
  CHECK(ref.column_names[7] == "negative:calib_reference");
  CHECK(ref.column_names[1] == "negative:anxiety");
}

TEST_CASE("one bias block per row, thirty subjects give 360 x 28") {
  Rng rng = make_rng(47);
  const std::vector<FactorRow> rows = planted_rows(10, 12, rng);
  const DesignMatrix d = build_interactions(rows);
  CHECK(d.X.rows() == 360);
  CHECK(d.X.cols() == 28);
  for (int i = 0; i < d.X.rows(); ++i) {
    int nonzero_blocks = 0;
    for (int k = 0; k < 3; ++k)
      if (d.X.row(i).segment(1 + 9 * k, 9).cwiseAbs().sum() > 0.0) ++nonzero_blocks;
    CHECK(nonzero_blocks == 1);
  }
}

TEST_CASE("nested LOSO recovers a small planted model") {
  Rng rng = make_rng(48);
  std::vector<FactorRow> rows = planted_rows(8, 6, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  Vector y(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    double mean = 40.0;
    if (rows[i].group == BiasKind::Negative) mean += 20.0 * rows[i].factors[0];
    if (rows[i].group == BiasKind::None) mean -= 18.0 * rows[i].factors[8];
    y[static_cast<int>(i)] = mean + noise(rng);
  }
  const DesignMatrix d = build_interactions(rows);
  EnetCvOptions opts;
  opts.alpha_count = 5;
  opts.lambda_count = 40;
  const CvReport report = nested_loso_cv(d, y, opts);
  CHECK(report.rmse <= 2.0);
  CHECK(report.coef[1] > 0.0);    // negative x anxiety
  CHECK(report.coef[27] < 0.0);   // none x nasa
  CHECK(report.folds == 24);

  // deterministic: identical inputs give identical reports
  const CvReport again = nested_loso_cv(d, y, opts);
  CHECK(report.alpha == again.alpha);
  CHECK(report.lambda == again.lambda);
  CHECK((report.coef - again.coef).cwiseAbs().maxCoeff() == 0.0);
  CHECK(report.rmse == again.rmse);
}

TEST_CASE("pure noise yields no explanatory power") {
  double r2_sum = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(100 + static_cast<unsigned>(seed));
    std::vector<FactorRow> rows = planted_rows(3, 4, rng);
    std::normal_distribution<double> noise(0.0, 5.0);
    Vector y(static_cast<int>(rows.size()));
    for (int i = 0; i < y.size(); ++i) y[i] = 50.0 + noise(rng);
    const DesignMatrix d = build_interactions(rows);
    EnetCvOptions opts;
    opts.alpha_count = 3;
    opts.lambda_count = 25;
    r2_sum += nested_loso_cv(d, y, opts).adjusted_r2;
  }
  CHECK(r2_sum / 10.0 <= 0.1);
}

TEST_CASE("permutation test flags planted structure under both schemes") {
  Rng rng = make_rng(49);
  std::vector<FactorRow> rows = planted_rows(4, 6, rng);
  std::normal_distribution<double> noise(0.0, 2.0);
  Vector y(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    double mean = 50.0;
    if (rows[i].group == BiasKind::Negative) mean += 25.0 * rows[i].factors[0];
    y[static_cast<int>(i)] = mean + noise(rng);
  }
  const DesignMatrix d = build_interactions(rows);
  EnetCvOptions opts;
  opts.alpha_count = 3;
  opts.lambda_count = 25;
  const CvReport cv = nested_loso_cv(d, y, opts);

  const PermutationReport both = permutation_test(d, y, cv.alpha, cv.lambda,
                                                  PermScheme::ShuffleTrainAndTest, 99, 7, 1);
  const PermutationReport train_only =
      permutation_test(d, y, cv.alpha, cv.lambda, PermScheme::ShuffleTrainOnly, 99, 7, 1);
  CHECK(both.p_model < 0.05);
  CHECK(train_only.p_model < 0.05);
  CHECK(static_cast<int>(both.null_rmse.size()) == 99);
  for (double p : {both.p_model, train_only.p_model}) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }
  // planted coefficient should look significant, a far-away one should not
  CHECK(both.coef_p[1] < 0.05);
  CHECK(both.coef_p[15] > 0.05);
}

TEST_CASE("permutation results are reproducible and job-count independent") {
  Rng rng = make_rng(50);
  std::vector<FactorRow> rows = planted_rows(3, 4, rng);
  std::normal_distribution<double> noise(0.0, 3.0);
  Vector y(static_cast<int>(rows.size()));
  for (int i = 0; i < y.size(); ++i) y[i] = 50.0 + noise(rng);
  const DesignMatrix d = build_interactions(rows);

  const PermutationReport a =
      permutation_test(d, y, 0.5, 1.0, PermScheme::ShuffleTrainAndTest, 50, 11, 1);
  const PermutationReport b =
      permutation_test(d, y, 0.5, 1.0, PermScheme::ShuffleTrainAndTest, 50, 11, 4);
  CHECK(a.p_model == b.p_model);
  for (size_t i = 0; i < a.null_rmse.size(); ++i) CHECK(a.null_rmse[i] == b.null_rmse[i]);
}
