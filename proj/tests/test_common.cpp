#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spl/common.hpp"

using namespace spl;

TEST_CASE("normal quantile matches reference values") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(normal_quantile(0.841344746068543) == doctest::Approx(1.0).epsilon(1e-9));
  for (double p : {0.01, 0.2, 0.6, 0.99})
    CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)).epsilon(1e-12));
  CHECK_THROWS_AS(normal_quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normal_quantile(1.0), std::invalid_argument);
}

TEST_CASE("pessimistic adjustment arithmetic at alpha 0.05") {
  const double r = 1.0 - normal_quantile(0.975) * 0.25;
  CHECK(r == doctest::Approx(0.510009).epsilon(5e-7));
}

TEST_CASE("seed_stream is deterministic and tag-sensitive") {
  CHECK(seed_stream(42, 1) == seed_stream(42, 1));
  CHECK(seed_stream(42, 1) != seed_stream(42, 2));
  CHECK(seed_stream(42, 1) != seed_stream(43, 1));
}

TEST_CASE("mean and standard error") {
  CHECK(mean_of({1.0, 3.0}) == doctest::Approx(2.0));
  CHECK(stderr_of({1.0, 3.0}) == doctest::Approx(1.0));
  CHECK(stderr_of({5.0}) == 0.0);
  CHECK_THROWS(mean_of({}));
}

TEST_CASE("spearman rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // ties get average ranks: x = {1,1,2}, y = {5,5,9} stays a perfect match
  CHECK(spearman({1, 1, 2}, {5, 5, 9}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3}, {7, 7, 7}) == 0.0);
  CHECK_THROWS(spearman({1}, {2}));
}

TEST_CASE("draws are reproducible under the same generator state") {
  Rng a(9), b(9);
  for (int i = 0; i < 5; ++i) {
    CHECK(draw_uniform(a) == draw_uniform(b));
    CHECK(draw_normal(a, 1.0, 2.0) == draw_normal(b, 1.0, 2.0));
    CHECK(draw_index(a, 7) == draw_index(b, 7));
  }
}
