#include "bfb/decode.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bfb {

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

void check_labels(const Matrix& features, const std::vector<MiClass>& labels) {
  if (static_cast<size_t>(features.rows()) != labels.size() || labels.empty())
    throw std::invalid_argument("train: features/labels mismatch");
  bool has_left = false, has_right = false;
  for (MiClass c : labels) (c == MiClass::Left ? has_left : has_right) = true;
  if (!has_left || !has_right) throw std::invalid_argument("train: need both classes");
}

// Dual coordinate descent for the L1-hinge SVM on bias-augmented features.
// Deterministic: zero init, cyclic order, tolerance 1e-8.
Vector svm_dual_cd(const Matrix& x_aug, const std::vector<double>& y, double cost) {
  const int n = static_cast<int>(x_aug.rows());
  const int dim = static_cast<int>(x_aug.cols());
  Vector w = Vector::Zero(dim);
  Vector alpha = Vector::Zero(n);
  Vector qd(n);
  for (int i = 0; i < n; ++i) qd[i] = x_aug.row(i).squaredNorm();

  constexpr double kTol = 1e-8;
  constexpr int kMaxPasses = 2000;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    double max_violation = 0.0;
    for (int i = 0; i < n; ++i) {
      if (qd[i] <= 0.0) continue;
      const double g = y[i] * x_aug.row(i).dot(w) - 1.0;
      double pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      else if (alpha[i] >= cost) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg != 0.0) {
        const double old = alpha[i];
        alpha[i] = std::clamp(old - g / qd[i], 0.0, cost);
        if (alpha[i] != old) w += (alpha[i] - old) * y[i] * x_aug.row(i).transpose();
      }
    }
    if (max_violation < kTol) break;
  }
  return w;
}

// Platt sigmoid fit by Newton iteration on the calibration cross-entropy,
// with the usual regularized targets so separable data stays finite.
void fit_sigmoid(const std::vector<double>& decisions, const std::vector<double>& y,
                 double& a, double& b) {
  const int n = static_cast<int>(decisions.size());
  int n_pos = 0;
  for (double v : y)
    if (v > 0.0) ++n_pos;
  const int n_neg = n - n_pos;
  const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
  const double t_neg = 1.0 / (n_neg + 2.0);

  a = 1.0;
  b = 0.0;
  for (int iter = 0; iter < 100; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 1e-12, hab = 0.0, hbb = 1e-12;
    for (int i = 0; i < n; ++i) {
      const double t = y[i] > 0.0 ? t_pos : t_neg;
      const double p = sigmoid(a * decisions[i] + b);
      const double r = p - t;
      ga += r * decisions[i];
      gb += r;
      const double w = std::max(p * (1.0 - p), 1e-12);
      haa += w * decisions[i] * decisions[i];
      hab += w * decisions[i];
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    const double da = (hbb * ga - hab * gb) / det;
    const double db = (haa * gb - hab * ga) / det;
    a -= da;
    b -= db;
    if (std::abs(da) + std::abs(db) < 1e-12) break;
  }
}

// Deterministic stratified fold ids (round-robin within each class).
std::vector<int> stratified_folds(const std::vector<MiClass>& labels, int k) {
  std::vector<int> fold(labels.size());
  int c_left = 0, c_right = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    int& counter = labels[i] == MiClass::Left ? c_left : c_right;
    fold[i] = counter % k;
    ++counter;
  }
  return fold;
}

}  // namespace

ProbabilisticLinearModel train_classifier(const Matrix& features,
                                          const std::vector<MiClass>& labels,
                                          double cost) {
  check_labels(features, labels);
  if (!(cost > 0.0)) throw std::invalid_argument("train_classifier: cost must be positive");

  const int n = static_cast<int>(features.rows());
  const int dim = static_cast<int>(features.cols());
  Matrix x_aug(n, dim + 1);
  x_aug.leftCols(dim) = features;
  x_aug.col(dim).setOnes();
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) y[i] = labels[i] == MiClass::Right ? 1.0 : -1.0;

  const Vector w = svm_dual_cd(x_aug, y, cost);

  // Out-of-fold decision values for calibration. Folds that lose a class
  // (tiny inputs) fall back to in-sample decisions.
  constexpr int kFolds = 5;
  const std::vector<int> fold = stratified_folds(labels, kFolds);
  std::vector<double> oof(n);
  bool fold_ok = true;
  for (int f = 0; f < kFolds && fold_ok; ++f) {
    std::vector<int> train_idx;
    for (int i = 0; i < n; ++i)
      if (fold[i] != f) train_idx.push_back(i);
    bool has_left = false, has_right = false;
    for (int i : train_idx) (labels[i] == MiClass::Left ? has_left : has_right) = true;
    if (train_idx.empty() || !has_left || !has_right) {
      fold_ok = false;
      break;
    }
    Matrix xt(static_cast<int>(train_idx.size()), dim + 1);
    std::vector<double> yt(train_idx.size());
    for (size_t r = 0; r < train_idx.size(); ++r) {
      xt.row(static_cast<int>(r)) = x_aug.row(train_idx[r]);
      yt[r] = y[train_idx[r]];
    }
    const Vector wf = svm_dual_cd(xt, yt, cost);
    for (int i = 0; i < n; ++i)
      if (fold[i] == f) oof[i] = x_aug.row(i).dot(wf);
  }
  if (!fold_ok)
    for (int i = 0; i < n; ++i) oof[i] = x_aug.row(i).dot(w);

  ProbabilisticLinearModel model;
  model.weights = w.head(dim);
  model.offset = w[dim];
  model.cost = cost;
  fit_sigmoid(oof, y, model.calib_a, model.calib_b);
  model.trained = true;
  return model;
}

ProbabilisticLinearModel train_logistic(const Matrix& features,
                                        const std::vector<MiClass>& labels,
                                        double ridge) {
  check_labels(features, labels);
  const int n = static_cast<int>(features.rows());
  const int dim = static_cast<int>(features.cols());
  Matrix x_aug(n, dim + 1);
  x_aug.leftCols(dim) = features;
  x_aug.col(dim).setOnes();
  Vector t(n);
  for (int i = 0; i < n; ++i) t[i] = labels[i] == MiClass::Right ? 1.0 : 0.0;

  Vector w = Vector::Zero(dim + 1);
  for (int iter = 0; iter < 200; ++iter) {
    const Vector p = (x_aug * w).unaryExpr([](double v) { return sigmoid(v); });
    const Vector grad = x_aug.transpose() * (p - t) + ridge * w;
    Matrix h = ridge * Matrix::Identity(dim + 1, dim + 1);
    for (int i = 0; i < n; ++i) {
      const double wi = std::max(p[i] * (1.0 - p[i]), 1e-10);
      h += wi * x_aug.row(i).transpose() * x_aug.row(i);
    }
    const Vector step = h.ldlt().solve(grad);
    w -= step;
    if (step.cwiseAbs().maxCoeff() < 1e-10) break;
  }

  ProbabilisticLinearModel model;
  model.weights = w.head(dim);
  model.offset = w[dim];
  model.calib_a = 1.0;
  model.calib_b = 0.0;
  model.cost = ridge;
  model.trained = true;
  return model;
}

double decision_value(const ProbabilisticLinearModel& model, const Vector& f) {
  if (!model.trained) throw std::runtime_error("classify: model not trained");
  if (f.size() != model.weights.size())
    throw std::invalid_argument("classify: feature size mismatch");
  return model.weights.dot(f) + model.offset;
}

double classify(const ProbabilisticLinearModel& model, const Vector& f) {
  // strictly inside (0,1) even where the sigmoid saturates in double
  const double p = sigmoid(model.calib_a * decision_value(model, f) + model.calib_b);
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

RecenterState update_recenter(const std::vector<double>& previous_run_outputs, int source_run) {
  if (previous_run_outputs.empty())
    throw std::invalid_argument("update_recenter: empty output list");
  double sum = 0.0;
  for (double x : previous_run_outputs) {
    if (!(x >= 0.0 && x <= 1.0))
      throw std::invalid_argument("update_recenter: outputs must be in [0,1]");
    sum += x;
  }
  const double mean = sum / previous_run_outputs.size();
  RecenterState state;
  state.c = std::clamp(mean - 0.5, -0.5, 0.5);
  state.source_run = source_run;
  return state;
}

double recenter(double x, const RecenterState& state) { return clamp01(x - state.c); }

}  // namespace bfb
