#include "nll/noise.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "nll/error.hpp"

namespace nll {

namespace {

void check_rate(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("noise rate must be in [0, 1]");
}

void check_map(const ClassMap& map, std::size_t c) {
  for (const auto& [src, dst] : map) {
    if (src >= c || dst >= c) {
      throw std::invalid_argument("noise map entry " + std::to_string(src) + ":" +
                                  std::to_string(dst) + " outside the class range");
    }
    if (src == dst) {
      throw std::invalid_argument("noise map sends class " + std::to_string(src) + " to itself");
    }
  }
}

void check_groups(const ClassGroups& groups, std::size_t c) {
  std::vector<int> seen(c, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw std::invalid_argument("noise groups contain an empty group");
    for (std::size_t k : g) {
      if (k >= c) throw std::invalid_argument("noise group class " + std::to_string(k) + " out of range");
      if (seen[k]++) throw std::invalid_argument("noise groups list class " + std::to_string(k) + " twice");
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (!seen[k]) throw std::invalid_argument("noise groups miss class " + std::to_string(k));
  }
}

// Applies `relabel(true_label, sample_stream)` to every sample drawn for
// flipping and assembles the mask and log.
template <typename Relabel>
NoisyDataset apply(const Dataset& dataset, double eta, RandomStream rng, Relabel relabel) {
  dataset.validate();
  NoisyDataset out{dataset, {}, {}};
  out.clean_mask.reserve(dataset.size());
  for (auto& s : out.data.samples) {
    RandomStream sample_rng = rng.split(s.id);
    s.given_label = s.true_label;
    if (sample_rng.bernoulli(eta)) s.given_label = relabel(s.true_label, sample_rng);
    const bool clean = s.given_label == s.true_label;
    out.clean_mask.push_back(clean);
    if (!clean) out.flip_log.push_back({s.id, s.true_label, s.given_label});
  }
  return out;
}

}  // namespace

void NoiseSpec::validate(std::size_t num_classes) const {
  check_rate(rate);
  switch (kind) {
    case NoiseKind::symmetric:
      break;
    case NoiseKind::asymmetric_map:
      if (map.empty()) throw std::invalid_argument("asymmetric noise requires a class map");
      check_map(map, num_classes);
      break;
    case NoiseKind::circular_groups:
      check_groups(groups, num_classes);
      break;
  }
}

double NoisyDataset::realized_rate() const {
  if (clean_mask.empty()) return 0.0;
  return static_cast<double>(flip_log.size()) / static_cast<double>(clean_mask.size());
}

NoisyDataset inject_symmetric(const Dataset& dataset, double eta, RandomStream rng) {
  check_rate(eta);
  const std::size_t c = dataset.num_classes;
  return apply(dataset, eta, rng, [c](ClassLabel truth, RandomStream& s) {
    const std::size_t r = s.below(c - 1);
    return ClassLabel{r < truth.index ? r : r + 1};
  });
}

NoisyDataset inject_asymmetric_map(const Dataset& dataset, double eta, const ClassMap& map,
                                   RandomStream rng) {
  check_rate(eta);
  check_map(map, dataset.num_classes);
  return apply(dataset, eta, rng, [&map](ClassLabel truth, RandomStream&) {
    const auto it = map.find(truth.index);
    return it == map.end() ? truth : ClassLabel{it->second};
  });
}

NoisyDataset inject_circular(const Dataset& dataset, double eta, const ClassGroups& groups,
                             RandomStream rng) {
  check_rate(eta);
  check_groups(groups, dataset.num_classes);
  std::vector<std::size_t> next(dataset.num_classes);
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.size(); ++i) next[g[i]] = g[(i + 1) % g.size()];
  }
  return apply(dataset, eta, rng, [&next](ClassLabel truth, RandomStream&) {
    return ClassLabel{next[truth.index]};
  });
}

NoisyDataset inject_noise(const Dataset& dataset, const NoiseSpec& spec, RandomStream rng) {
  spec.validate(dataset.num_classes);
  switch (spec.kind) {
    case NoiseKind::symmetric:
      return inject_symmetric(dataset, spec.rate, rng);
    case NoiseKind::asymmetric_map:
      return inject_asymmetric_map(dataset, spec.rate, spec.map, rng);
    case NoiseKind::circular_groups:
      return inject_circular(dataset, spec.rate, spec.groups, rng);
  }
  throw std::logic_error("unknown noise kind");
}

NoisyDataset without_noise(const Dataset& dataset) {
  dataset.validate();
  NoisyDataset out{dataset, {}, {}};
  for (const auto& s : dataset.samples) {
    const bool clean = s.given_label == s.true_label;
    out.clean_mask.push_back(clean);
    if (!clean) out.flip_log.push_back({s.id, s.true_label, s.given_label});
  }
  return out;
}

ClassMap cifar10_asymmetric_map() {
  // 0 airplane, 1 automobile, 2 bird, 3 cat, 4 deer, 5 dog, 6 frog, 7 horse,
  // 8 ship, 9 truck
  return {{9, 1}, {2, 0}, {4, 7}, {3, 5}, {5, 3}};
}

namespace {

std::size_t parse_index(std::string_view text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw std::invalid_argument("not a class index: '" + std::string(text) + "'");
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

ClassMap parse_class_map(const std::string& text) {
  ClassMap map;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto entry = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (entry.empty()) continue;
    const auto colon = entry.find(':');
    if (colon == std::string_view::npos) {
      throw std::invalid_argument("class map entry '" + std::string(entry) + "' lacks ':'");
    }
    const auto src = parse_index(trim(entry.substr(0, colon)));
    const auto dst = parse_index(trim(entry.substr(colon + 1)));
    if (!map.emplace(src, dst).second) {
      throw std::invalid_argument("class map lists source " + std::to_string(src) + " twice");
    }
  }
  return map;
}

ClassGroups read_class_groups(std::istream& is) {
  ClassGroups groups;
  std::string line;
  while (std::getline(is, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<std::size_t> group;
    std::string token;
    while (fields >> token) group.push_back(parse_index(token));
    if (!group.empty()) groups.push_back(std::move(group));
  }
  return groups;
}

ClassGroups load_class_groups(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open class group file: " + path.string());
  return read_class_groups(is);
}

void write_flip_log_csv(std::ostream& os, const std::vector<FlipRecord>& log) {
  os << "sample_id,true,given\n";
  for (const auto& f : log) {
    os << f.sample_id << ',' << f.true_label.index << ',' << f.given_label.index << '\n';
  }
}

}  // namespace nll
