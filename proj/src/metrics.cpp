#include "bfb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bfb {

double average_performance(const RunRecord& run) {
  double correct = 0.0, total = 0.0;
  for (const TrialRecord& t : run.trials)
    for (const WindowSample& w : t.windows) {
      correct += w.correct ? 1.0 : 0.0;
      total += 1.0;
    }
  if (total == 0.0) throw std::invalid_argument("average_performance: empty run");
  return 100.0 * correct / total;
}

double peak_performance(const RunRecord& run) {
  if (run.trials.empty()) throw std::invalid_argument("peak_performance: empty run");
  size_t ticks = 0;
  for (const TrialRecord& t : run.trials) ticks = std::max(ticks, t.windows.size());
  if (ticks == 0) throw std::invalid_argument("peak_performance: empty run");

  double best = 0.0;
  for (size_t k = 0; k < ticks; ++k) {
    double correct = 0.0, total = 0.0;
    for (const TrialRecord& t : run.trials)
      if (k < t.windows.size()) {
        correct += t.windows[k].correct ? 1.0 : 0.0;
        total += 1.0;
      }
    if (total > 0.0) best = std::max(best, correct / total);
  }
  return 100.0 * best;
}

double calibration_performance(const SessionRecord& session, std::uint64_t fold_seed,
                               double svm_cost, int folds) {
  const size_t n_trials = session.calib_features.size();
  if (n_trials == 0 || session.calib_labels.size() != n_trials)
    throw std::invalid_argument("calibration_performance: missing calibration data");
  if (folds < 2 || static_cast<size_t>(folds) > n_trials)
    throw std::invalid_argument("calibration_performance: bad fold count");

  // Stratified fold assignment with a fixed seed: shuffle within class,
  // then deal round-robin.
  std::vector<int> fold_of(n_trials, -1);
  Rng rng = make_rng(fold_seed, {0xf01d5ull});
  for (MiClass cls : {MiClass::Left, MiClass::Right}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < n_trials; ++i)
      if (session.calib_labels[i] == cls) idx.push_back(i);
    for (size_t i = idx.size(); i > 1; --i) {
      std::uniform_int_distribution<size_t> pick(0, i - 1);
      std::swap(idx[i - 1], idx[pick(rng)]);
    }
    for (size_t i = 0; i < idx.size(); ++i) fold_of[idx[i]] = static_cast<int>(i % folds);
  }

  const int ticks = static_cast<int>(session.calib_features[0].rows());
  double fold_acc_sum = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<size_t> train, test;
    for (size_t i = 0; i < n_trials; ++i) (fold_of[i] == f ? test : train).push_back(i);
    if (test.empty() || train.empty())
      throw std::invalid_argument("calibration_performance: degenerate fold");

    Matrix x(static_cast<int>(train.size()) * ticks, 6);
    std::vector<MiClass> y(train.size() * static_cast<size_t>(ticks));
    for (size_t r = 0; r < train.size(); ++r) {
      x.middleRows(static_cast<int>(r) * ticks, ticks) = session.calib_features[train[r]];
      for (int k = 0; k < ticks; ++k)
        y[r * static_cast<size_t>(ticks) + static_cast<size_t>(k)] =
            session.calib_labels[train[r]];
    }
    const ProbabilisticLinearModel model = train_classifier(x, y, svm_cost);

    int correct_trials = 0;
    for (size_t i : test) {
      int right_votes = 0;
      for (int k = 0; k < ticks; ++k) {
        const Vector feat = session.calib_features[i].row(k).transpose();
        if (classify(model, feat) > 0.5) ++right_votes;
      }
      // Majority vote; an exact tie counts as incorrect.
      const int left_votes = ticks - right_votes;
      const bool said_right = right_votes > left_votes;
      const bool said_left = left_votes > right_votes;
      const bool ok = session.calib_labels[i] == MiClass::Right ? said_right : said_left;
      if (ok) ++correct_trials;
    }
    fold_acc_sum += static_cast<double>(correct_trials) / static_cast<double>(test.size());
  }
  return 100.0 * fold_acc_sum / folds;
}

double learning_rate(const std::vector<double>& per_run_percent) {
  const size_t n = per_run_percent.size();
  if (n < 2) throw std::invalid_argument("learning_rate: need >= 2 runs");
  double xm = (n + 1) / 2.0;  // run indices 1..n
  double ym = 0.0;
  for (double v : per_run_percent) ym += v;
  ym /= n;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = (i + 1.0) - xm;
    sxy += dx * (per_run_percent[i] - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double progress(double session1, double session2) { return session2 - session1; }

std::vector<bool> median_split(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("median_split: need >= 2 values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::vector<bool> high(values.size());
  for (size_t i = 0; i < values.size(); ++i) high[i] = values[i] > median;
  return high;
}

}  // namespace bfb
