#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nll/datasets.hpp"
#include "nll/rng.hpp"

namespace nll {

enum class NoiseKind { symmetric, asymmetric_map, circular_groups };

using ClassMap = std::map<std::size_t, std::size_t>;
using ClassGroups = std::vector<std::vector<std::size_t>>;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  ClassMap map;        // asymmetric_map only
  ClassGroups groups;  // circular_groups only

  // Throws std::invalid_argument on a rate outside [0, 1], a missing or
  // self-mapping table, or groups that do not partition {0..c-1}.
  void validate(std::size_t num_classes) const;
};

struct FlipRecord {
  std::uint64_t sample_id = 0;
  ClassLabel true_label;
  ClassLabel given_label;
};

struct NoisyDataset {
  Dataset data;
  std::vector<bool> clean_mask;     // given == true, per sample
  std::vector<FlipRecord> flip_log;  // one entry per changed label, in sample order

  double realized_rate() const;
};

// Noise is applied to each sample's true label. Every sample draws from its
// own stream rng.split(sample id), so results do not depend on sample order.
// Features are copied unchanged.

// With probability eta, relabel uniformly among the c - 1 other classes.
NoisyDataset inject_symmetric(const Dataset& dataset, double eta, RandomStream rng);

// With probability eta, a sample whose class is a key of `map` takes the
// mapped label. Throws std::invalid_argument if any entry maps a class to
// itself or falls outside the class range.
NoisyDataset inject_asymmetric_map(const Dataset& dataset, double eta, const ClassMap& map,
                                   RandomStream rng);

// With probability eta, advance one position circularly within the class's
// group. Throws std::invalid_argument unless groups partition the labels.
NoisyDataset inject_circular(const Dataset& dataset, double eta, const ClassGroups& groups,
                             RandomStream rng);

NoisyDataset inject_noise(const Dataset& dataset, const NoiseSpec& spec, RandomStream rng);

// Wraps an uncorrupted dataset (given labels kept as they are).
NoisyDataset without_noise(const Dataset& dataset);

// TRUCK->AUTOMOBILE, BIRD->AIRPLANE, DEER->HORSE, CAT<->DOG in CIFAR-10 indices.
ClassMap cifar10_asymmetric_map();

// Parses "src:dst,src:dst,...".
ClassMap parse_class_map(const std::string& text);

// Group table: one group per line, class indices separated by whitespace or
// commas; blank lines and '#' comments ignored.
ClassGroups read_class_groups(std::istream& is);
ClassGroups load_class_groups(const std::filesystem::path& path);

// CSV with header sample_id,true,given; one row per flip.
void write_flip_log_csv(std::ostream& os, const std::vector<FlipRecord>& log);

}  // namespace nll
