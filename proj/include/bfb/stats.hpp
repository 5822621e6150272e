#pragma once

#include "bfb/types.hpp"

#include <vector>

namespace bfb {

struct TestResult {
  double statistic{0.0};
  double df1{0.0};
  double df2{0.0};
  double p{1.0};
  char effect{'F'};  // 'r' or 'F'
};

// Two-sided tail probabilities via the regularized incomplete beta.
double student_t_p_two_sided(double t, double df);
double f_tail(double f, double df1, double df2);

// Pearson r with the t-transform p-value.
TestResult pearson(const Vector& x, const Vector& y);

TestResult oneway_anova(const std::vector<std::vector<double>>& groups);

// Nested-model F-test: reduced design's column space must lie inside the
// full design's. Factorial effects are built by comparing designs with and
// without the block of interest.
TestResult lm_ftest(const Vector& y, const Matrix& full, const Matrix& reduced);

struct FdrResult {
  std::vector<double> adjusted;
  std::vector<bool> reject;
};

// Benjamini-Hochberg step-up adjustment, capped at 1.
FdrResult fdr_bh(const std::vector<double>& pvalues, double q = 0.05);

}  // namespace bfb
