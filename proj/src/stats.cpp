#include "bfb/stats.hpp"

#include "bfb/bias.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bfb {

double student_t_p_two_sided(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_p_two_sided: df must be positive");
  const double p = beta_cdf(df / (df + t * t), df / 2.0, 0.5);
  return std::min(1.0, std::max(p, 1e-300));
}

double f_tail(double f, double df1, double df2) {
  if (!(df1 > 0.0 && df2 > 0.0)) throw std::invalid_argument("f_tail: dfs must be positive");
  if (f <= 0.0) return 1.0;
  return std::min(1.0, std::max(beta_cdf(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0), 1e-300));
}

TestResult pearson(const Vector& x, const Vector& y) {
  const int n = static_cast<int>(x.size());
  if (y.size() != n || n < 3) throw std::invalid_argument("pearson: need equal lengths >= 3");
  const double mx = x.mean(), my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  const double syy = (y.array() - my).square().sum();
  if (sxx <= 0.0 || syy <= 0.0) throw std::invalid_argument("pearson: constant input");
  const double sxy = ((x.array() - mx) * (y.array() - my)).sum();
  double r = sxy / std::sqrt(sxx * syy);
  r = std::clamp(r, -1.0, 1.0);

  TestResult res;
  res.statistic = r;
  res.df1 = 1.0;
  res.df2 = n - 2.0;
  res.effect = 'r';
  if (std::abs(r) >= 1.0) {
    res.p = 1e-300;
  } else {
    const double t = r * std::sqrt((n - 2.0) / (1.0 - r * r));
    res.p = student_t_p_two_sided(t, n - 2.0);
  }
  return res;
}

TestResult oneway_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("oneway_anova: need >= 2 groups");
  int n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw std::invalid_argument("oneway_anova: each group needs >= 2 values");
    n += static_cast<int>(g.size());
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= n;

  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
    ssb += g.size() * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }

  TestResult res;
  res.df1 = static_cast<double>(groups.size()) - 1.0;
  res.df2 = static_cast<double>(n - groups.size());
  res.effect = 'F';
  if (ssw <= 0.0) {
    res.statistic = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    res.p = ssb > 0.0 ? 1e-300 : 1.0;
    return res;
  }
  res.statistic = (ssb / res.df1) / (ssw / res.df2);
  res.p = f_tail(res.statistic, res.df1, res.df2);
  return res;
}

namespace {

double sse_of_fit(const Vector& y, const Matrix& design) {
  const Vector beta = design.colPivHouseholderQr().solve(y);
  return (y - design * beta).squaredNorm();
}

}  // namespace

TestResult lm_ftest(const Vector& y, const Matrix& full, const Matrix& reduced) {
  const int n = static_cast<int>(y.size());
  if (full.rows() != n || reduced.rows() != n)
    throw std::invalid_argument("lm_ftest: design row mismatch");

  Eigen::ColPivHouseholderQR<Matrix> full_qr(full);
  const int rank_full = static_cast<int>(full_qr.rank());
  if (rank_full < full.cols()) throw std::invalid_argument("lm_ftest: full design is rank deficient");

  // Containment check: residual of projecting reduced columns onto full.
  const Matrix proj = full * full_qr.solve(reduced);
  if ((proj - reduced).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, reduced.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("lm_ftest: reduced design not nested in full design");

  const int rank_reduced = static_cast<int>(Eigen::ColPivHouseholderQR<Matrix>(reduced).rank());
  const double sse_full = (y - full * full_qr.solve(y)).squaredNorm();
  const double sse_reduced = sse_of_fit(y, reduced);

  TestResult res;
  res.df1 = rank_full - rank_reduced;
  res.df2 = n - rank_full;
  res.effect = 'F';
  if (res.df1 <= 0.0) {
    res.statistic = 0.0;
    res.p = 1.0;
    return res;
  }
  if (res.df2 <= 0.0) throw std::invalid_argument("lm_ftest: no residual degrees of freedom");
  if (sse_full <= 1e-300) {
    res.statistic = sse_reduced > sse_full ? std::numeric_limits<double>::infinity() : 0.0;
    res.p = sse_reduced > sse_full ? 1e-300 : 1.0;
    return res;
  }
  res.statistic = std::max(0.0, (sse_reduced - sse_full) / res.df1) / (sse_full / res.df2);
  res.p = f_tail(res.statistic, res.df1, res.df2);
  return res;
}

FdrResult fdr_bh(const std::vector<double>& pvalues, double q) {
  const size_t m = pvalues.size();
  FdrResult out;
  out.adjusted.resize(m);
  out.reject.assign(m, false);
  if (m == 0) return out;
  for (double p : pvalues)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("fdr_bh: p-values must be in [0,1]");

  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return pvalues[a] < pvalues[b]; });

  // Step-up: running minimum of m*p_(j)/j from the largest rank down.
  double running = 1.0;
  for (size_t i = m; i-- > 0;) {
    const double scaled = pvalues[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
    running = std::min(running, std::min(scaled, 1.0));
    out.adjusted[order[i]] = running;
  }
  for (size_t i = 0; i < m; ++i) out.reject[i] = out.adjusted[i] <= q;
  return out;
}

}  // namespace bfb
