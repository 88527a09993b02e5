#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "nll/rng.hpp"
#include "oracles.hpp"

using nll::RandomStream;

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same sequence") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("split is positional and leaves the parent untouched") {
    RandomStream parent(7);
    const RandomStream early = parent.split(5);
    for (int i = 0; i < 10; ++i) parent.next_u64();
    RandomStream late = parent.split(5);
    RandomStream e = early;
    CHECK(parent.counter() == 10);
    for (int i = 0; i < 100; ++i) CHECK(e.next_u64() == late.next_u64());
  }

  TEST_CASE("different tags give different streams") {
    RandomStream root(1);
    std::set<std::uint64_t> firsts;
    for (std::uint64_t tag = 0; tag < 1000; ++tag) firsts.insert(root.split(tag).next_u64());
    CHECK(firsts.size() == 1000);
  }

  TEST_CASE("uniform lies in [0, 1) with the right mean") {
    RandomStream r(3);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
  }

  TEST_CASE("below is uniform over its range") {
    RandomStream r(9);
    const std::size_t n = 70000;
    std::vector<std::size_t> counts(7, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[r.below(7)];
    for (auto c : counts) CHECK(nll::oracle::within_3se(c, n, 1.0 / 7.0));
    CHECK_THROWS_AS(r.below(0), std::invalid_argument);
  }

  TEST_CASE("bernoulli frequency and clamping") {
    RandomStream r(11);
    const std::size_t n = 100000;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += r.bernoulli(0.3);
    CHECK(nll::oracle::within_3se(hits, n, 0.3));
    CHECK_FALSE(r.bernoulli(-1.0));
    CHECK(r.bernoulli(2.0));
  }

  TEST_CASE("normal has zero mean and unit variance") {
    RandomStream r(13);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 3.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
  }
}
