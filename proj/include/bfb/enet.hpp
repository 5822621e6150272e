#pragma once

#include "bfb/bias.hpp"
#include "bfb/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace bfb {

// Canonical factor order for the interaction design.
constexpr int kFactorCount = 9;
constexpr std::array<const char*, kFactorCount> kFactorNames{
    "anxiety",      "extroversion",           "tough_mindedness",
    "independence", "self_control",           "competition_enjoyment",
    "calib_baseline", "flow_baseline",        "nasa_baseline"};

// The progress model replaces per-session baselines with session-1 references.
std::string factor_label(int j, bool reference);

// Bias-group block order inside the design: negative, positive, none.
constexpr std::array<BiasKind, 3> kGroupOrder{BiasKind::Negative, BiasKind::Positive,
                                              BiasKind::None};
int group_block(BiasKind kind);

// One observation: a subject-run (performance) or a subject (progress).
struct FactorRow {
  int subject{0};
  BiasKind group{BiasKind::None};
  std::array<double, kFactorCount> factors{};
};

// Intercept column of ones plus 27 interaction columns r_k * s_j; each row
// has exactly one nonzero bias block.
struct DesignMatrix {
  Matrix X;  // n x 28, column 0 is the intercept
  std::vector<int> subject;
  std::vector<std::string> column_names;
};

DesignMatrix build_interactions(const std::vector<FactorRow>& rows, bool references = false);

// Min-max bounds fitted on training rows only; non-intercept columns map to
// [0,1] on the training rows, test rows may exit that range. Degenerate
// columns map to zero.
struct MinMaxBounds {
  Vector lo, hi;
};

MinMaxBounds fit_minmax(const Matrix& X, const std::vector<int>& train_rows);
Matrix apply_minmax(const Matrix& X, const MinMaxBounds& bounds);

// Elastic net on the objective ||y - X b||^2 + lambda[(1-alpha)/2 ||b||^2
// + alpha ||b||_1], no sample-size scaling; column 0 is unpenalized.
struct EnetFit {
  Vector beta;
  double alpha{1.0};
  double lambda{0.0};
  int sweeps{0};
  std::vector<double> sweep_objectives;  // filled when requested
};

struct CdOptions {
  double tol{1e-9};
  int max_sweeps{100000};
  bool record_objective{false};
};

EnetFit coordinate_descent(const Matrix& X, const Vector& y, double alpha, double lambda,
                           const Vector* warm_start = nullptr, const CdOptions& opts = {});

double enet_objective(const Matrix& X, const Vector& y, const Vector& beta, double alpha,
                      double lambda);

// Log-spaced path from lambda_max (the smallest lambda zeroing every
// penalized coefficient, with the ridge floor alpha -> max(alpha, 0.001))
// down to 1e-4 * lambda_max.
std::vector<double> lambda_path(const Matrix& X, const Vector& y, double alpha, int count = 100);

struct EnetCvOptions {
  int alpha_count{11};     // evenly spaced on [0,1]
  int lambda_count{100};
  std::vector<double> alphas;  // overrides alpha_count when non-empty
};

struct CvReport {
  double alpha{0.0};
  double lambda{0.0};
  double rmse{0.0};          // pooled nested out-of-fold RMSE
  double adjusted_r2{0.0};
  Vector coef;               // whole-data refit at (alpha, lambda)
  Vector coef_mean, coef_sd; // across leave-one-subject-out fits at (alpha, lambda)
  Vector predictions;        // pooled outer predictions, row order
  int folds{0};
};

// Nested LOSO: the outer loop scores one held-out subject per fold; the
// inner loop re-runs LOSO on the remaining subjects to pick (alpha, lambda)
// by inner RMSE (ties: larger lambda, then smaller alpha). Normalization
// bounds are refit on each training fold.
CvReport nested_loso_cv(const DesignMatrix& design, const Vector& y,
                        const EnetCvOptions& opts = {});

enum class PermScheme { ShuffleTrainAndTest, ShuffleTrainOnly };

struct PermutationReport {
  PermScheme scheme{PermScheme::ShuffleTrainAndTest};
  int n_perm{0};
  double observed_rmse{0.0};
  std::vector<double> null_rmse;
  double p_model{1.0};
  Vector coef_observed;   // mean across LOSO folds at fixed hyperparameters
  Vector coef_p;          // empirical two-sided p per coefficient
};

// LOSO error at fixed hyperparameters versus label-shuffled null models;
// hyperparameters and factors stay fixed, only outcomes are shuffled.
PermutationReport permutation_test(const DesignMatrix& design, const Vector& y, double alpha,
                                   double lambda, PermScheme scheme, int n_perm,
                                   std::uint64_t seed, int jobs = 1);

}  // namespace bfb
