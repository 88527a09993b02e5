#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nll/datasets.hpp"
#include "nll/matrix.hpp"
#include "nll/model.hpp"
#include "nll/noise.hpp"

namespace nll {

// Per-sample filtering view: confidence at the given label and the largest
// confidence over the other classes.
struct FilterRecord {
  std::uint64_t sample_id = 0;
  double p_given = 0.0;
  double p_comp_max = 0.0;
  bool is_actually_clean = false;
};

// Softmax each row of `logits` and pair it with the given label and truth.
std::vector<FilterRecord> make_filter_records(const RowMatrix& logits,
                                              std::span<const ClassLabel> given,
                                              std::span<const std::uint64_t> ids,
                                              const std::vector<bool>& clean_mask);

std::vector<FilterRecord> make_filter_records(const MlpParams& params, const NoisyDataset& data);

enum class PositiveClass { clean, noisy };

// Generic step AP: rank by score descending (ties by ascending id) and average
// the precision at each positive. Throws UndefinedMetric unless both positives
// and negatives are present.
double average_precision_scores(std::span<const double> scores, const std::vector<bool>& positive,
                                std::span<const std::uint64_t> ids);

// Clean-positive ranks by p_given descending, noisy-positive by p_given
// ascending.
double average_precision(std::span<const FilterRecord> records, PositiveClass positive);

struct ApResult {
  double ap_clean_positive = 0.0;
  double ap_noisy_positive = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_noisy = 0;
};

ApResult evaluate_filtering(std::span<const FilterRecord> records);

// 2-D counts over (p_comp_max, p_given) in [0,1]^2, split by ground truth.
// Cell (given_bin, comp_bin) lives at index given_bin * bins + comp_bin.
struct DistributionHistogram {
  std::size_t bins = 0;
  std::vector<std::size_t> clean;
  std::vector<std::size_t> noisy;

  std::size_t total() const;
  std::size_t count(bool clean_split, std::size_t given_bin, std::size_t comp_bin) const;
};

std::size_t histogram_bin(double value, std::size_t bins);

// Throws std::invalid_argument when bins < 2.
DistributionHistogram export_distribution_histogram(std::span<const FilterRecord> records,
                                                    std::size_t bins);

// Header split,comp_lo,comp_hi,given_lo,given_hi,count; clean rows first.
void write_histogram_csv(std::ostream& os, const DistributionHistogram& hist);

// Fraction of samples whose argmax(p) equals the true label. Throws
// std::invalid_argument on an empty set.
double accuracy(const MlpParams& params, const Dataset& labeled);
double accuracy(const RowMatrix& logits, std::span<const ClassLabel> truth);

// Training progress for one epoch, reported by every trainer.
struct EpochStats {
  std::size_t epoch = 0;
  std::string stage;  // e.g. "jnpl", "nl", "selnl", "selpl", "pl", "pseudo"
  double loss_nl = 0.0;  // mean per-sample negative-term loss
  double loss_pl = 0.0;  // mean per-sample positive-term loss
  std::size_t n_nl_terms = 0;
  std::size_t n_pl_terms = 0;
  std::size_t n_plplus_accepted = 0;
};

struct MetricRecord {
  std::size_t epoch = 0;
  std::string method;
  std::string stage;
  double loss_nl = 0.0;
  double loss_pl = 0.0;
  std::size_t n_plplus_accepted = 0;
  std::optional<double> train_acc_clean;
  std::optional<double> train_acc_noisy;
  std::optional<double> test_acc;
  std::optional<double> ap_clean;
  std::optional<double> ap_noisy;
  std::size_t n_nl_terms = 0;
  std::size_t n_pl_terms = 0;
};

// One JSON object, no trailing newline. Undefined metrics serialize as null.
std::string to_ndjson(const MetricRecord& record);

// Holds the ground truth trainers never see and turns (stats, params) into
// metric records.
class MetricsTracker {
 public:
  MetricsTracker(const NoisyDataset& train, const Dataset* test, std::string method);

  MetricRecord record(const EpochStats& stats, const MlpParams& params) const;

 private:
  const NoisyDataset& train_;
  const Dataset* test_;
  std::string method_;
  RowMatrix train_features_;
  RowMatrix test_features_;
};

}  // namespace nll
