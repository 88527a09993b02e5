#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nll/rng.hpp"

namespace nll {

// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-12;

double clamp_prob(double p) noexcept;

// Class index in [0, c). Range is checked against c where c is known.
struct ClassLabel {
  std::size_t index = 0;

  friend bool operator==(ClassLabel, ClassLabel) = default;
  friend auto operator<=>(ClassLabel, ClassLabel) = default;
};

// Throws std::invalid_argument unless label.index < num_classes.
void check_label(ClassLabel label, std::size_t num_classes);

// Raw network scores over c >= 2 classes; all entries finite.
class Logits {
 public:
  explicit Logits(std::vector<double> values);
  explicit Logits(std::span<const double> values)
      : Logits(std::vector<double>(values.begin(), values.end())) {}

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

// Nonnegative entries summing to 1 within 1e-9.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> values);

  static ProbVector uniform(std::size_t num_classes);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  // Sum of all entries except `excluded`, accumulated directly rather than as
  // 1 - p[excluded] so that it stays accurate when p[excluded] is near 1.
  double mass_excluding(std::size_t excluded) const noexcept;

 private:
  std::vector<double> values_;
};

// Max-subtracted softmax. Throws InvalidInput on non-finite entries (already
// guaranteed by Logits, but kept for span callers).
ProbVector softmax(const Logits& logits);
ProbVector softmax(std::span<const double> logits);

// Index of the largest entry; lowest index wins ties. Requires a nonempty span.
std::size_t argmax(std::span<const double> values);

// Distinct complementary labels for one sample, sorted ascending.
class ComplementaryLabelSet {
 public:
  // Throws std::invalid_argument if labels contain `given`, repeat, fall
  // outside [0, c), or if the count is not in [1, c - 1].
  ComplementaryLabelSet(std::vector<ClassLabel> labels, ClassLabel given,
                        std::size_t num_classes);

  std::span<const ClassLabel> labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool contains(ClassLabel label) const noexcept;

  auto begin() const noexcept { return labels_.begin(); }
  auto end() const noexcept { return labels_.end(); }

 private:
  std::vector<ClassLabel> labels_;
};

// k distinct labels drawn uniformly without replacement from
// {0..c-1} \ {given}. Throws std::invalid_argument unless 1 <= k <= c - 1.
ComplementaryLabelSet sample_complementary(ClassLabel given, std::size_t num_classes,
                                           std::size_t k, RandomStream& rng);

}  // namespace nll
