#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <vector>

#include "nll/noise.hpp"
#include "oracles.hpp"

using namespace nll;

namespace {

// n samples with label i mod c and a single feature equal to the id.
Dataset cyclic(std::size_t c, std::size_t n) {
  Dataset d{c, 1, {}};
  for (std::size_t i = 0; i < n; ++i) {
    d.samples.push_back({i, {static_cast<double>(i)}, ClassLabel{i % c}, ClassLabel{i % c}});
  }
  return d;
}

void check_consistent(const Dataset& source, const NoisyDataset& noisy) {
  REQUIRE(noisy.data.size() == source.size());
  REQUIRE(noisy.clean_mask.size() == source.size());
  std::size_t flip = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto& s = noisy.data.samples[i];
    REQUIRE(s.features == source.samples[i].features);
    REQUIRE(s.true_label == source.samples[i].true_label);
    REQUIRE(noisy.clean_mask[i] == (s.given_label == s.true_label));
    if (!noisy.clean_mask[i]) {
      REQUIRE(flip < noisy.flip_log.size());
      REQUIRE(noisy.flip_log[flip].sample_id == s.id);
      REQUIRE(noisy.flip_log[flip].true_label == s.true_label);
      REQUIRE(noisy.flip_log[flip].given_label == s.given_label);
      ++flip;
    }
  }
  REQUIRE(flip == noisy.flip_log.size());
}

}  // namespace

TEST_SUITE("noise") {
  TEST_CASE("rate zero is the identity") {
    const Dataset d = cyclic(5, 1000);
    const NoisyDataset n = inject_symmetric(d, 0.0, RandomStream(1));
    CHECK(n.flip_log.empty());
    CHECK(n.realized_rate() == 0.0);
    check_consistent(d, n);
  }

  TEST_CASE("two classes at rate one are inverted") {
    const Dataset d = cyclic(2, 100);
    const NoisyDataset n = inject_symmetric(d, 1.0, RandomStream(2));
    for (const auto& s : n.data.samples) REQUIRE(s.given_label.index == 1 - s.true_label.index);
    CHECK(n.realized_rate() == 1.0);
  }

  TEST_CASE("symmetric frequencies") {
    const std::size_t c = 10, n = 100000;
    const Dataset d = cyclic(c, n);
    const NoisyDataset noisy = inject_symmetric(d, 0.4, RandomStream(3));
    check_consistent(d, noisy);
    CHECK(oracle::within_3se(noisy.flip_log.size(), n, 0.4));
    std::vector<std::size_t> dest(c, 0);
    std::size_t from0 = 0;
    for (const auto& f : noisy.flip_log) {
      if (f.true_label.index != 0) continue;
      ++from0;
      ++dest[f.given_label.index];
    }
    CHECK(dest[0] == 0);
    for (std::size_t k = 1; k < c; ++k) CHECK(oracle::within_3se(dest[k], from0, 1.0 / 9.0));
  }

  TEST_CASE("asymmetric map") {
    const Dataset d = cyclic(10, 50000);
    const ClassMap map = cifar10_asymmetric_map();
    CHECK(map == ClassMap{{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}});
    const NoisyDataset n = inject_asymmetric_map(d, 0.3, map, RandomStream(4));
    check_consistent(d, n);
    std::size_t mapped = 0, flips = 0;
    for (const auto& s : n.data.samples) {
      const auto it = map.find(s.true_label.index);
      if (it == map.end()) {
        REQUIRE(s.given_label == s.true_label);
        continue;
      }
      ++mapped;
      if (s.given_label != s.true_label) {
        ++flips;
        REQUIRE(s.given_label.index == it->second);
      }
    }
    CHECK(oracle::within_3se(flips, mapped, 0.3));
  }

  TEST_CASE("asymmetric map validation") {
    const Dataset d = cyclic(4, 8);
    CHECK_THROWS_AS(inject_asymmetric_map(d, 0.5, ClassMap{{1, 1}}, RandomStream(1)), std::invalid_argument);
    CHECK_THROWS_AS(inject_asymmetric_map(d, 0.5, ClassMap{{1, 4}}, RandomStream(1)), std::invalid_argument);
    CHECK_THROWS_AS(inject_symmetric(d, 1.5, RandomStream(1)), std::invalid_argument);
    NoiseSpec empty{NoiseKind::asymmetric_map, 0.2, {}, {}};
    CHECK_THROWS_AS(empty.validate(4), std::invalid_argument);
  }

  TEST_CASE("circular groups") {
    const Dataset d = cyclic(6, 6000);
    const ClassGroups groups{{0, 1, 2}, {3}, {4, 5}};
    const NoisyDataset n = inject_circular(d, 1.0, groups, RandomStream(5));
    check_consistent(d, n);
    const std::vector<std::size_t> next{1, 2, 0, 3, 5, 4};
    for (const auto& s : n.data.samples) REQUIRE(s.given_label.index == next[s.true_label.index]);
    // Singleton groups never change.
    for (const auto& f : n.flip_log) REQUIRE(f.true_label.index != 3);
  }

  TEST_CASE("groups must partition the classes") {
    const Dataset d = cyclic(4, 8);
    CHECK_THROWS_AS(inject_circular(d, 0.5, ClassGroups{{0, 1}, {2}}, RandomStream(1)), std::invalid_argument);
    CHECK_THROWS_AS(inject_circular(d, 0.5, ClassGroups{{0, 1}, {1, 2, 3}}, RandomStream(1)), std::invalid_argument);
    CHECK_THROWS_AS(inject_circular(d, 0.5, ClassGroups{{0, 1, 2, 3}, {}}, RandomStream(1)), std::invalid_argument);
    CHECK_THROWS_AS(inject_circular(d, 0.5, ClassGroups{{0, 1, 2, 3, 4}}, RandomStream(1)), std::invalid_argument);
  }

  TEST_CASE("noise is deterministic and independent of sample order") {
    const Dataset d = cyclic(7, 2000);
    const NoisyDataset a = inject_symmetric(d, 0.5, RandomStream(6));
    const NoisyDataset b = inject_symmetric(d, 0.5, RandomStream(6));
    CHECK(a.clean_mask == b.clean_mask);
    Dataset reversed = d;
    std::reverse(reversed.samples.begin(), reversed.samples.end());
    const NoisyDataset r = inject_symmetric(reversed, 0.5, RandomStream(6));
    for (std::size_t i = 0; i < d.size(); ++i) {
      REQUIRE(r.data.samples[d.size() - 1 - i].given_label == a.data.samples[i].given_label);
    }
    CHECK(inject_symmetric(d, 0.5, RandomStream(7)).clean_mask != a.clean_mask);
  }

  TEST_CASE("inject_noise dispatches on the noise kind") {
    const Dataset d = cyclic(4, 400);
    const NoiseSpec spec{NoiseKind::circular_groups, 1.0, {}, {{0, 1, 2, 3}}};
    const NoisyDataset n = inject_noise(d, spec, RandomStream(8));
    CHECK(n.data.samples[3].given_label == ClassLabel{0});
    CHECK(without_noise(d).flip_log.empty());
  }

  TEST_CASE("class map and group parsing") {
    CHECK(parse_class_map("0:1, 1:0") == ClassMap{{0, 1}, {1, 0}});
    CHECK_THROWS_AS(parse_class_map("0-1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_class_map("0:1,0:2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_class_map("a:1"), std::invalid_argument);
    std::istringstream groups("# animals\n0 1, 2\n\n3\n");
    CHECK(read_class_groups(groups) == ClassGroups{{0, 1, 2}, {3}});
  }

  TEST_CASE("flip log CSV") {
    std::ostringstream os;
    write_flip_log_csv(os, {{4, ClassLabel{1}, ClassLabel{3}}});
    CHECK(os.str() == "sample_id,true,given\n4,1,3\n");
    std::ostringstream empty;
    write_flip_log_csv(empty, {});
    CHECK(empty.str() == "sample_id,true,given\n");
  }
}
