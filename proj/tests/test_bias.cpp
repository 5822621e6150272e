#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bfb/bias.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace bfb;

TEST_CASE("uniform shapes give the identity") {
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    CHECK(std::abs(beta_cdf(x, 1.0, 1.0) - x) < 1e-12);
  }
}

TEST_CASE("endpoints are exact") {
  for (const auto [a, b] : {std::pair{1.33, 0.67}, {0.67, 1.33}, {2.5, 0.4}}) {
    CHECK(beta_cdf(0.0, a, b) == 0.0);
    CHECK(beta_cdf(1.0, a, b) == 1.0);
  }
}

TEST_CASE("matches the quadrature oracle") {
  CHECK(std::abs(beta_cdf(0.5, 1.33, 0.67) - oracle::beta_cdf(0.5, 1.33, 0.67)) < 1e-8);
  for (const auto [a, b] : {std::pair{1.33, 0.67}, {0.67, 1.33}, {1.0, 1.0}, {2.5, 0.4}}) {
    for (int i = 0; i <= 100; ++i) {
      const double x = i / 100.0;
      CHECK(std::abs(beta_cdf(x, a, b) - oracle::beta_cdf(x, a, b)) < 1e-9);
    }
  }
}

TEST_CASE("shape and domain errors") {
  CHECK_THROWS_AS(beta_cdf(0.5, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(beta_cdf(0.5, 1.0, -2.0), std::invalid_argument);
  CHECK_THROWS_AS(beta_cdf(1.5, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(beta_cdf(-0.1, 1.0, 1.0), std::domain_error);
}

TEST_CASE("bias spec shapes") {
  const BiasSpec pos{BiasKind::Positive, 0.33};
  CHECK(pos.shape_a() == doctest::Approx(0.67));
  CHECK(pos.shape_b() == doctest::Approx(1.33));
  const BiasSpec neg{BiasKind::Negative, 0.33};
  CHECK(neg.shape_a() == doctest::Approx(1.33));
  CHECK(neg.shape_b() == doctest::Approx(0.67));
  const BiasSpec none{BiasKind::None, 0.33};
  CHECK(none.shape_a() == 1.0);
  CHECK(none.shape_b() == 1.0);
}

TEST_CASE("no bias is the identity") { CHECK(apply_bias({BiasKind::None, 0.33}, 0.37) == 0.37); }

TEST_CASE("positive bias only flatters") {
  const BiasSpec pos{BiasKind::Positive, 0.33};
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    const double fx = apply_bias(pos, x);
    CHECK(fx >= x);
    if (i != 0 && i != 1000) CHECK(fx > x);
  }
}

TEST_CASE("positive and negative curves are mutually symmetric") {
  const BiasSpec pos{BiasKind::Positive, 0.33};
  const BiasSpec neg{BiasKind::Negative, 0.33};
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    CHECK(std::abs(apply_bias(pos, x) + apply_bias(neg, 1.0 - x) - 1.0) < 1e-9);
  }
}

TEST_CASE("each curve is individually asymmetric") {
  const BiasSpec pos{BiasKind::Positive, 0.33};
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    worst = std::max(worst, std::abs(apply_bias(pos, x) + apply_bias(pos, 1.0 - x) - 1.0));
  }
  CHECK(worst > 0.01);
}

TEST_CASE("bias maps are strictly monotone") {
  for (const BiasKind kind : {BiasKind::Positive, BiasKind::Negative}) {
    const BiasSpec spec{kind, 0.33};
    double prev = apply_bias(spec, 0.0);
    for (int i = 1; i <= 1000; ++i) {
      const double cur = apply_bias(spec, i / 1000.0);
      CHECK(cur > prev);
      prev = cur;
    }
  }
}

TEST_CASE("endpoints stay attainable") {
  for (const BiasKind kind : {BiasKind::Positive, BiasKind::Negative, BiasKind::None}) {
    const BiasSpec spec{kind, 0.33};
    CHECK(apply_bias(spec, 0.0) == 0.0);
    CHECK(apply_bias(spec, 1.0) == 1.0);
  }
}

TEST_CASE("k = 0 collapses every kind to the identity") {
  for (const BiasKind kind : {BiasKind::Positive, BiasKind::Negative, BiasKind::None}) {
    const BiasSpec spec{kind, 0.0};
    for (int i = 0; i <= 100; ++i) {
      const double x = i / 100.0;
      CHECK(std::abs(apply_bias(spec, x) - x) < 1e-12);
    }
  }
}
