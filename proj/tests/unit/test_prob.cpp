#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "nll/error.hpp"
#include "nll/prob.hpp"
#include "oracles.hpp"

using namespace nll;

TEST_SUITE("prob") {
  TEST_CASE("softmax closed forms") {
    const ProbVector half = softmax(Logits({0.0, 0.0}));
    CHECK(half[0] == 0.5);
    CHECK(half[1] == 0.5);

    const ProbVector third = softmax(Logits({1000.0, 1000.0, 1000.0}));
    for (double v : third.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const ProbVector q = softmax(Logits({0.0, std::log(3.0)}));
    CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-15));
  }

  TEST_CASE("non-finite or too short inputs are rejected") {
    const double inf = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(Logits({0.0, inf}), InvalidInput);
    CHECK_THROWS_AS(Logits({nan, 0.0}), InvalidInput);
    CHECK_THROWS_AS(Logits({1.0}), InvalidInput);
    const std::vector<double> bad{0.0, nan};
    CHECK_THROWS_AS(softmax(std::span<const double>(bad)), InvalidInput);
  }

  TEST_CASE("ProbVector validation") {
    CHECK_NOTHROW(ProbVector({0.25, 0.75}));
    CHECK_THROWS_AS(ProbVector({0.5, 0.6}), InvalidInput);
    CHECK_THROWS_AS(ProbVector({-0.1, 1.1}), InvalidInput);
    CHECK(ProbVector({0.2, 0.3, 0.5}).mass_excluding(2) == doctest::Approx(0.5));
  }

  TEST_CASE("softmax sums to one and is shift invariant") {
    RandomStream rng(21);
    for (int t = 0; t < 2000; ++t) {
      const std::size_t c = 2 + rng.below(99);
      // Dyadic logits and integer shifts keep x + a exact, so the
      // max-subtracted exponentials are identical bit for bit.
      std::vector<double> x(c), shifted(c);
      const double a = static_cast<double>(static_cast<std::int64_t>(rng.below(2001)) - 1000);
      for (std::size_t i = 0; i < c; ++i) {
        x[i] = std::ldexp(static_cast<double>(rng.below(1 << 12)) - 2048.0, -8);
        shifted[i] = x[i] + a;
      }
      const ProbVector p = softmax(Logits(x));
      const ProbVector ps = softmax(Logits(shifted));
      double sum = 0.0;
      for (std::size_t i = 0; i < c; ++i) {
        sum += p[i];
        REQUIRE(p[i] == ps[i]);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      CHECK(argmax(p.values()) == argmax(x));
    }
  }

  TEST_CASE("argmax takes the lowest index on ties") {
    const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
    CHECK(argmax(v) == 1);
    CHECK(argmax(softmax(Logits({2.0, 2.0})).values()) == 0);
  }

  TEST_CASE("clamp keeps probabilities away from 0 and 1") {
    CHECK(clamp_prob(0.0) == kProbFloor);
    CHECK(clamp_prob(1.0) == 1.0 - kProbFloor);
    CHECK(clamp_prob(0.3) == 0.3);
  }

  TEST_CASE("sample_complementary forced cases") {
    RandomStream rng(1);
    const auto two = sample_complementary(ClassLabel{0}, 2, 1, rng);
    REQUIRE(two.size() == 1);
    CHECK(two.labels()[0] == ClassLabel{1});

    const auto full = sample_complementary(ClassLabel{3}, 10, 9, rng);
    std::vector<std::size_t> got;
    for (auto l : full) got.push_back(l.index);
    CHECK(got == std::vector<std::size_t>{0, 1, 2, 4, 5, 6, 7, 8, 9});
  }

  TEST_CASE("sample_complementary rejects bad multiplicities") {
    RandomStream rng(1);
    CHECK_THROWS_AS(sample_complementary(ClassLabel{0}, 10, 10, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_complementary(ClassLabel{0}, 10, 0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_complementary(ClassLabel{0}, 100, 110, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_complementary(ClassLabel{10}, 10, 1, rng), std::invalid_argument);
  }

  TEST_CASE("sample_complementary frequencies are uniform") {
    RandomStream rng(5);
    const std::size_t n = 100000;
    std::vector<std::size_t> counts(10, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[sample_complementary(ClassLabel{5}, 10, 1, rng).labels()[0].index];
    CHECK(counts[5] == 0);
    for (std::size_t k = 0; k < 10; ++k) {
      if (k != 5) CHECK(oracle::within_3se(counts[k], n, 1.0 / 9.0));
    }
  }

  TEST_CASE("sample_complementary never returns the given label") {
    RandomStream rng(8);
    for (std::size_t c : {2u, 10u, 100u}) {
      for (int i = 0; i < 100000; ++i) {
        const ClassLabel given{rng.below(c)};
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(c - 1, 5));
        const auto set = sample_complementary(given, c, k, rng);
        REQUIRE(set.size() == k);
        REQUIRE_FALSE(set.contains(given));
      }
    }
  }

  TEST_CASE("sampling is reproducible from the seed") {
    RandomStream a(77), b(77);
    for (int i = 0; i < 1000; ++i) {
      const auto x = sample_complementary(ClassLabel{2}, 10, 3, a);
      const auto y = sample_complementary(ClassLabel{2}, 10, 3, b);
      REQUIRE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
  }

  TEST_CASE("ComplementaryLabelSet validation") {
    CHECK_THROWS_AS(ComplementaryLabelSet({ClassLabel{1}}, ClassLabel{1}, 4), std::invalid_argument);
    CHECK_THROWS_AS(ComplementaryLabelSet({ClassLabel{2}, ClassLabel{2}}, ClassLabel{1}, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(ComplementaryLabelSet({}, ClassLabel{1}, 4), std::invalid_argument);
    CHECK_THROWS_AS(ComplementaryLabelSet({ClassLabel{4}}, ClassLabel{1}, 4), std::invalid_argument);
    const ComplementaryLabelSet s({ClassLabel{3}, ClassLabel{0}}, ClassLabel{1}, 4);
    CHECK(s.labels()[0] == ClassLabel{0});
    CHECK(s.contains(ClassLabel{3}));
  }
}
