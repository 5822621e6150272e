#pragma once

#include "bfb/types.hpp"

#include <vector>

namespace bfb {

// Linear classifier with sigmoid probability calibration. The classifier
// output x = sigmoid(A*d + B) for decision value d = w.f + offset lives in
// (0,1); Right maps toward 1, Left toward 0.
struct ProbabilisticLinearModel {
  Vector weights;
  double offset{0.0};
  double calib_a{1.0};
  double calib_b{0.0};
  double cost{1.0};
  bool trained{false};
};

// Soft-margin linear SVM (hinge loss, L2 penalty) trained by deterministic
// dual coordinate descent; probability calibration is a Platt-style sigmoid
// fit on out-of-fold decision values from an internal 5-fold split.
ProbabilisticLinearModel train_classifier(const Matrix& features,
                                          const std::vector<MiClass>& labels,
                                          double cost = 1.0);

// Plain ridge-regularized logistic regression behind the same interface;
// its calibration is the identity (A=1, B=0) since the decision value is
// already a log-odds. Serves as an independent reference for tests.
ProbabilisticLinearModel train_logistic(const Matrix& features,
                                        const std::vector<MiClass>& labels,
                                        double ridge = 1e-8);

double decision_value(const ProbabilisticLinearModel& model, const Vector& f);
double classify(const ProbabilisticLinearModel& model, const Vector& f);

// Per-run mean re-centering. c is the deviation of the run-mean output from
// 0.5, bounded to [-0.5, 0.5]; recentered outputs are clipped back to [0,1].
struct RecenterState {
  double c{0.0};
  int source_run{-1};
};

RecenterState update_recenter(const std::vector<double>& previous_run_outputs,
                              int source_run = -1);
double recenter(double x, const RecenterState& state);

}  // namespace bfb
