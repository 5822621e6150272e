#pragma once

#include "bfb/sim.hpp"

#include <vector>

namespace bfb {

// Percent of correct windows over all trials of a run. Correctness is
// evaluated on recentered (pre-bias) outputs when the run was recorded.
double average_performance(const RunRecord& run);

// Max over within-trial tick offsets of the across-trial accuracy.
double peak_performance(const RunRecord& run);

// Stratified 5-fold CV over the concatenated calibration trials; band and
// CSP stay fixed from the session, the classifier is retrained per fold and
// trials are scored by majority vote over their windows.
double calibration_performance(const SessionRecord& session, std::uint64_t fold_seed,
                               double svm_cost = 1.0, int folds = 5);

// OLS slope of per-run performance against run index (percent per run).
double learning_rate(const std::vector<double>& per_run_percent);

// Session 2 minus session 1.
double progress(double session1, double session2);

// Strictly above the median -> high (true); at or below -> low.
std::vector<bool> median_split(const std::vector<double>& values);

}  // namespace bfb
