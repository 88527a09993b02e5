#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nll/matrix.hpp"
#include "nll/prob.hpp"
#include "nll/rng.hpp"

namespace nll {

struct LabeledSample {
  std::uint64_t id = 0;
  std::vector<double> features;
  ClassLabel given_label;
  ClassLabel true_label;  // hidden from trainers, visible to evaluation
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<LabeledSample> samples;

  std::size_t size() const noexcept { return samples.size(); }

  // Throws InvalidInput on inconsistent feature lengths or out-of-range labels.
  void validate() const;
};

// What a trainer is allowed to see: ids, features and given labels. True
// labels do not exist on this type.
class TrainingView {
 public:
  explicit TrainingView(const Dataset& dataset);

  const RowMatrix& features() const noexcept { return features_; }
  std::span<const ClassLabel> given_labels() const noexcept { return given_; }
  std::span<const std::uint64_t> ids() const noexcept { return ids_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return ids_.size(); }

  // Same samples with replaced given labels (used for pseudo-label targets).
  TrainingView with_labels(std::vector<ClassLabel> labels) const;

 private:
  TrainingView() = default;
  RowMatrix features_;
  std::vector<ClassLabel> given_;
  std::vector<std::uint64_t> ids_;
  std::size_t num_classes_ = 0;
};

struct BlobSplit {
  Dataset train;
  Dataset test;
};

// Isotropic unit-variance Gaussian clusters, one per class, with class
// means at pairwise distance >= separation. Class of sample i is i mod c.
// Features are standardized with statistics of the training part; the test
// part (ids continuing after the training ids) is drawn from the same
// clusters. Throws std::invalid_argument on c < 2, n_train < c, dim == 0 or a
// negative/non-finite separation.
BlobSplit gen_blobs_split(std::size_t num_classes, std::size_t n_train, std::size_t n_test,
                          std::size_t dim, double separation, RandomStream rng);

Dataset gen_blobs(std::size_t num_classes, std::size_t n, std::size_t dim, double separation,
                  RandomStream rng);

// CIFAR-10 binary batches: 3073-byte records of one label byte followed by
// 1024 red, 1024 green and 1024 blue bytes of a 32x32 image.
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 1024;

struct CifarData {
  Dataset data;
  std::array<double, 3> channel_means{};
};

// Pixels are scaled to [0, 1] and the per-channel mean is subtracted. The
// means are computed over all records read unless supplied (e.g. training
// means applied to the test batch). Throws FormatError on a length that is not
// a multiple of 3073 bytes or a label byte above 9.
CifarData read_cifar10_bin(std::span<const std::filesystem::path> paths,
                           std::optional<std::array<double, 3>> channel_means = std::nullopt);

// CSV interchange: header `id,true_label,given_label,f0,...,f{d-1}`, LF line
// endings, values printed with 17 significant digits.
void write_dataset_csv(std::ostream& os, const Dataset& dataset);
void save_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);

// num_classes defaults to 1 + the largest label present. Throws FormatError on
// malformed rows.
Dataset read_dataset_csv(std::istream& is, std::optional<std::size_t> num_classes = std::nullopt);
Dataset load_dataset_csv(const std::filesystem::path& path,
                         std::optional<std::size_t> num_classes = std::nullopt);

}  // namespace nll
