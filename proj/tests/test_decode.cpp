#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bfb/decode.hpp"

#include <cmath>

using namespace bfb;

namespace {

// n points per class around -1 / +1 in 1-D, optionally with spread
void separable_data(int per_class, double spread, Rng& rng, Matrix& x,
                    std::vector<MiClass>& labels) {
  std::normal_distribution<double> normal(0.0, spread);
  x.resize(2 * per_class, 1);
  labels.clear();
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool right = i % 2 == 1;
    x(i, 0) = (right ? 1.0 : -1.0) + (spread > 0.0 ? normal(rng) : 0.0);
    labels.push_back(right ? MiClass::Right : MiClass::Left);
  }
}

ProbabilisticLinearModel manual_model(double w, double a, double b) {
  ProbabilisticLinearModel m;
  m.weights = Vector::Constant(1, w);
  m.offset = 0.0;
  m.calib_a = a;
  m.calib_b = b;
  m.trained = true;
  return m;
}

}  // namespace

TEST_CASE("separable data trains to perfect accuracy") {
  Rng rng = make_rng(21);
  Matrix x;
  std::vector<MiClass> labels;
  separable_data(20, 0.0, rng, x, labels);
  const ProbabilisticLinearModel model = train_classifier(x, labels, 1.0);
  for (int i = 0; i < x.rows(); ++i) {
    const double out = classify(model, x.row(i).transpose());
    if (labels[static_cast<size_t>(i)] == MiClass::Right)
      CHECK(out > 0.5);
    else
      CHECK(out < 0.5);
  }
}

TEST_CASE("sigmoid calibration arithmetic") {
  const ProbabilisticLinearModel unit = manual_model(1.0, 1.0, 0.0);
  CHECK(classify(unit, Vector::Zero(1)) == doctest::Approx(0.5));
  CHECK(classify(unit, Vector::Constant(1, 40.0)) > 0.999999);
  CHECK(classify(unit, Vector::Constant(1, -40.0)) < 1e-6);

  const ProbabilisticLinearModel flipped = manual_model(1.0, -1.5, 0.0);
  CHECK(std::abs(classify(flipped, Vector::Constant(1, 2.0)) - 1.0 / (1.0 + std::exp(3.0))) <
        1e-12);
}

TEST_CASE("outputs stay strictly inside the unit interval") {
  Rng rng = make_rng(22);
  Matrix x;
  std::vector<MiClass> labels;
  separable_data(25, 0.3, rng, x, labels);
  const ProbabilisticLinearModel model = train_classifier(x, labels, 1.0);
  for (double v : {-100.0, -1.0, 0.0, 1.0, 100.0}) {
    const double out = classify(model, Vector::Constant(1, v));
    CHECK(out > 0.0);
    CHECK(out < 1.0);
  }
}

TEST_CASE("classify is strictly increasing in the decision value") {
  Rng rng = make_rng(23);
  Matrix x;
  std::vector<MiClass> labels;
  separable_data(25, 0.4, rng, x, labels);
  const ProbabilisticLinearModel model = train_classifier(x, labels, 1.0);
  double prev = classify(model, Vector::Constant(1, -3.0));
  for (double v = -2.9; v <= 3.0; v += 0.1) {
    const double cur = classify(model, Vector::Constant(1, v));
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("shuffled labels hover at chance in cross-validation") {
  Rng rng = make_rng(24);
  std::normal_distribution<double> normal(0.0, 1.0);
  double acc_sum = 0.0;
  int reps = 0;
  for (int rep = 0; rep < 50; ++rep) {
    Matrix x(40, 6);
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 6; ++j) x(i, j) = normal(rng);
    std::vector<MiClass> labels(40);
    for (int i = 0; i < 40; ++i) labels[static_cast<size_t>(i)] =
        i % 2 == 0 ? MiClass::Left : MiClass::Right;

    // 5-fold CV accuracy with the folds laid out round-robin
    double correct = 0.0;
    for (int f = 0; f < 5; ++f) {
      std::vector<int> train, test;
      for (int i = 0; i < 40; ++i) (i % 5 == f ? test : train).push_back(i);
      Matrix xt(static_cast<int>(train.size()), 6);
      std::vector<MiClass> yt;
      for (size_t r = 0; r < train.size(); ++r) {
        xt.row(static_cast<int>(r)) = x.row(train[r]);
        yt.push_back(labels[static_cast<size_t>(train[r])]);
      }
      const ProbabilisticLinearModel model = train_classifier(xt, yt, 1.0);
      for (int i : test) {
        const bool said_right = classify(model, x.row(i).transpose()) > 0.5;
        if (said_right == (labels[static_cast<size_t>(i)] == MiClass::Right)) correct += 1.0;
      }
    }
    acc_sum += correct / 40.0;
    ++reps;
  }
  const double mean_acc = 100.0 * acc_sum / reps;
  CHECK(mean_acc > 40.0);
  CHECK(mean_acc < 60.0);
}

TEST_CASE("training is deterministic") {
  Rng rng = make_rng(25);
  Matrix x;
  std::vector<MiClass> labels;
  separable_data(30, 0.6, rng, x, labels);
  const ProbabilisticLinearModel a = train_classifier(x, labels, 1.0);
  const ProbabilisticLinearModel b = train_classifier(x, labels, 1.0);
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.offset == b.offset);
  CHECK(a.calib_a == b.calib_a);
  CHECK(a.calib_b == b.calib_b);
}

TEST_CASE("logistic reference model agrees on confident points") {
  Rng rng = make_rng(26);
  Matrix x;
  std::vector<MiClass> labels;
  separable_data(40, 0.5, rng, x, labels);
  const ProbabilisticLinearModel svm = train_classifier(x, labels, 1.0);
  const ProbabilisticLinearModel logit = train_logistic(x, labels);
  CHECK(logit.calib_a == 1.0);
  CHECK(logit.calib_b == 0.0);
  int agree = 0;
  for (int i = 0; i < x.rows(); ++i) {
    const bool s = classify(svm, x.row(i).transpose()) > 0.5;
    const bool l = classify(logit, x.row(i).transpose()) > 0.5;
    if (s == l) ++agree;
  }
  CHECK(agree >= static_cast<int>(0.9 * x.rows()));
}

TEST_CASE("training input validation") {
  Matrix x(2, 1);
  x << 1.0, 2.0;
  CHECK_THROWS_AS(train_classifier(x, {MiClass::Left, MiClass::Left}, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_classifier(x, {MiClass::Left, MiClass::Right}, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(train_classifier(x, {MiClass::Left}, 1.0), std::invalid_argument);
}

TEST_CASE("untrained model refuses to classify") {
  ProbabilisticLinearModel model;
  model.weights = Vector::Zero(1);
  CHECK_THROWS_AS(classify(model, Vector::Zero(1)), std::runtime_error);
}

TEST_CASE("recenter update arithmetic") {
  CHECK(update_recenter({0.7, 0.5, 0.6}).c == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(update_recenter({1.0, 1.0, 1.0}).c == 0.5);
  CHECK(update_recenter({0.0, 0.0}).c == -0.5);
  CHECK(update_recenter({0.3, 0.7}).c == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(update_recenter({}), std::invalid_argument);
  CHECK_THROWS_AS(update_recenter({1.2}), std::invalid_argument);
}

TEST_CASE("recentering subtracts and clips") {
  CHECK(recenter(0.8, {0.1, 0}) == doctest::Approx(0.7));
  CHECK(recenter(0.05, {0.5, 0}) == 0.0);
  CHECK(recenter(0.6, {-0.5, 0}) == 1.0);
  CHECK(recenter(0.37, {0.0, 0}) == 0.37);
}

TEST_CASE("offset is always bounded under fuzzing") {
  Rng rng = make_rng(27);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 50);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> outputs(static_cast<size_t>(len(rng)));
    for (double& v : outputs) v = uniform(rng);
    const RecenterState state = update_recenter(outputs);
    CHECK(std::abs(state.c) <= 0.5);
  }
}

TEST_CASE("recentering a run recenters its mean") {
  Rng rng = make_rng(28);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> outputs(200);
    const double shift = uniform(rng) * 0.3 - 0.15;
    for (double& v : outputs) v = clamp01(0.2 + 0.6 * uniform(rng) + shift);
    const RecenterState state = update_recenter(outputs);

    double mean = 0.0;
    int clipped = 0;
    for (double v : outputs) {
      const double r = recenter(v, state);
      mean += r;
      if (r == 0.0 || r == 1.0) ++clipped;
    }
    mean /= static_cast<double>(outputs.size());
    if (clipped * 20 < static_cast<int>(outputs.size()))  // < 5% clipped
      CHECK(std::abs(mean - 0.5) <= 0.02);
  }
}
