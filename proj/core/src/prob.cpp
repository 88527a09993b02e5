#include "nll/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "nll/error.hpp"

namespace nll {

double clamp_prob(double p) noexcept {
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

void check_label(ClassLabel label, std::size_t num_classes) {
  if (label.index >= num_classes) {
    throw std::invalid_argument("class label " + std::to_string(label.index) +
                                " out of range for " + std::to_string(num_classes) +
                                " classes");
  }
}

Logits::Logits(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw InvalidInput("logits need at least 2 classes");
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidInput("logits contain a non-finite value");
  }
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw InvalidInput("probability vector needs at least 2 classes");
  double sum = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("probability entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("probability vector does not sum to 1");
}

ProbVector ProbVector::uniform(std::size_t num_classes) {
  return ProbVector(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

double ProbVector::mass_excluding(std::size_t excluded) const noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (i != excluded) sum += values_[i];
  }
  return sum;
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw InvalidInput("softmax needs at least 2 classes");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInput("softmax input contains a non-finite value");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbVector(std::move(out));
}

ProbVector softmax(const Logits& logits) { return softmax(logits.values()); }

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty span");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ComplementaryLabelSet::ComplementaryLabelSet(std::vector<ClassLabel> labels, ClassLabel given,
                                             std::size_t num_classes)
    : labels_(std::move(labels)) {
  check_label(given, num_classes);
  if (labels_.empty() || labels_.size() > num_classes - 1) {
    throw std::invalid_argument("complementary label count must be in [1, c-1]");
  }
  std::sort(labels_.begin(), labels_.end());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    check_label(labels_[i], num_classes);
    if (labels_[i] == given) {
      throw std::invalid_argument("complementary labels must exclude the given label");
    }
    if (i > 0 && labels_[i] == labels_[i - 1]) {
      throw std::invalid_argument("complementary labels must be distinct");
    }
  }
}

bool ComplementaryLabelSet::contains(ClassLabel label) const noexcept {
  return std::binary_search(labels_.begin(), labels_.end(), label);
}

ComplementaryLabelSet sample_complementary(ClassLabel given, std::size_t num_classes,
                                           std::size_t k, RandomStream& rng) {
  check_label(given, num_classes);
  if (k < 1 || k > num_classes - 1) {
    throw std::invalid_argument("complementary multiplicity k=" + std::to_string(k) +
                                " must be in [1, " + std::to_string(num_classes - 1) + "]");
  }
  const std::size_t pool_size = num_classes - 1;
  auto pool_label = [&](std::size_t j) {
    return ClassLabel{j < given.index ? j : j + 1};
  };
  if (k == 1) {
    // Same draw as the first step of the partial shuffle below.
    return ComplementaryLabelSet({pool_label(rng.below(pool_size))}, given, num_classes);
  }
  std::vector<std::size_t> pool(pool_size);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<ClassLabel> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(pool_size - i);
    std::swap(pool[i], pool[j]);
    picked.push_back(pool_label(pool[i]));
  }
  return ComplementaryLabelSet(std::move(picked), given, num_classes);
}

}  // namespace nll
