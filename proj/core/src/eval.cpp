#include "nll/eval.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "nll/error.hpp"
#include "nll/prob.hpp"

namespace nll {

namespace {

RowMatrix features_of(const Dataset& ds) {
  RowMatrix m(ds.size(), ds.feature_dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::copy(ds.samples[i].features.begin(), ds.samples[i].features.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace

std::vector<FilterRecord> make_filter_records(const RowMatrix& logits,
                                              std::span<const ClassLabel> given,
                                              std::span<const std::uint64_t> ids,
                                              const std::vector<bool>& clean_mask) {
  if (given.size() != logits.rows || ids.size() != logits.rows || clean_mask.size() != logits.rows) {
    throw InvalidInput("make_filter_records: length mismatch");
  }
  std::vector<FilterRecord> out;
  out.reserve(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const ProbVector p = softmax(logits.row(i));
    const std::size_t y = given[i].index;
    check_label(given[i], p.size());
    double comp_max = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k != y) comp_max = std::max(comp_max, p[k]);
    }
    out.push_back({ids[i], p[y], comp_max, clean_mask[i]});
  }
  return out;
}

std::vector<FilterRecord> make_filter_records(const MlpParams& params, const NoisyDataset& data) {
  const TrainingView view(data.data);
  return make_filter_records(predict_logits(params, view.features()), view.given_labels(),
                             view.ids(), data.clean_mask);
}

double average_precision_scores(std::span<const double> scores, const std::vector<bool>& positive,
                                std::span<const std::uint64_t> ids) {
  if (scores.size() != positive.size() || scores.size() != ids.size()) {
    throw InvalidInput("average_precision: length mismatch");
  }
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == 0 || n_pos == positive.size()) {
    throw UndefinedMetric("average precision needs both positive and negative samples");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positive[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

double average_precision(std::span<const FilterRecord> records, PositiveClass positive) {
  std::vector<double> scores;
  std::vector<bool> is_pos;
  std::vector<std::uint64_t> ids;
  scores.reserve(records.size());
  for (const auto& r : records) {
    const bool clean_pos = positive == PositiveClass::clean;
    scores.push_back(clean_pos ? r.p_given : -r.p_given);
    is_pos.push_back(clean_pos ? r.is_actually_clean : !r.is_actually_clean);
    ids.push_back(r.sample_id);
  }
  return average_precision_scores(scores, is_pos, ids);
}

ApResult evaluate_filtering(std::span<const FilterRecord> records) {
  ApResult out;
  for (const auto& r : records) (r.is_actually_clean ? out.n_clean : out.n_noisy)++;
  out.ap_clean_positive = average_precision(records, PositiveClass::clean);
  out.ap_noisy_positive = average_precision(records, PositiveClass::noisy);
  return out;
}

std::size_t DistributionHistogram::total() const {
  return std::accumulate(clean.begin(), clean.end(), std::size_t{0}) +
         std::accumulate(noisy.begin(), noisy.end(), std::size_t{0});
}

std::size_t DistributionHistogram::count(bool clean_split, std::size_t given_bin,
                                         std::size_t comp_bin) const {
  return (clean_split ? clean : noisy).at(given_bin * bins + comp_bin);
}

std::size_t histogram_bin(double value, std::size_t bins) {
  const double v = std::clamp(value, 0.0, 1.0);
  return std::min(static_cast<std::size_t>(v * static_cast<double>(bins)), bins - 1);
}

DistributionHistogram export_distribution_histogram(std::span<const FilterRecord> records,
                                                    std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  DistributionHistogram h{bins, std::vector<std::size_t>(bins * bins, 0),
                          std::vector<std::size_t>(bins * bins, 0)};
  for (const auto& r : records) {
    const std::size_t cell = histogram_bin(r.p_given, bins) * bins + histogram_bin(r.p_comp_max, bins);
    (r.is_actually_clean ? h.clean : h.noisy)[cell]++;
  }
  return h;
}

void write_histogram_csv(std::ostream& os, const DistributionHistogram& hist) {
  os << "split,comp_lo,comp_hi,given_lo,given_hi,count\n";
  const double width = 1.0 / static_cast<double>(hist.bins);
  for (const bool clean : {true, false}) {
    for (std::size_t g = 0; g < hist.bins; ++g) {
      for (std::size_t c = 0; c < hist.bins; ++c) {
        os << (clean ? "clean" : "noisy") << ',' << c * width << ',' << (c + 1) * width << ','
           << g * width << ',' << (g + 1) * width << ',' << hist.count(clean, g, c) << '\n';
      }
    }
  }
}

double accuracy(const RowMatrix& logits, std::span<const ClassLabel> truth) {
  if (logits.rows == 0) throw std::invalid_argument("accuracy of an empty set");
  if (truth.size() != logits.rows) throw InvalidInput("accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const ProbVector p = softmax(logits.row(i));
    if (argmax(p.values()) == truth[i].index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows);
}

double accuracy(const MlpParams& params, const Dataset& labeled) {
  if (labeled.size() == 0) throw std::invalid_argument("accuracy of an empty set");
  std::vector<ClassLabel> truth;
  truth.reserve(labeled.size());
  for (const auto& s : labeled.samples) truth.push_back(s.true_label);
  return accuracy(predict_logits(params, features_of(labeled)), truth);
}

std::string to_ndjson(const MetricRecord& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["method"] = r.method;
  j["loss_nl"] = r.loss_nl;
  j["loss_pl"] = r.loss_pl;
  j["n_plplus_accepted"] = r.n_plplus_accepted;
  j["train_acc_clean"] = opt(r.train_acc_clean);
  j["train_acc_noisy"] = opt(r.train_acc_noisy);
  j["test_acc"] = opt(r.test_acc);
  j["ap_clean"] = opt(r.ap_clean);
  j["ap_noisy"] = opt(r.ap_noisy);
  j["stage"] = r.stage;
  j["n_nl_terms"] = r.n_nl_terms;
  j["n_pl_terms"] = r.n_pl_terms;
  return j.dump();
}

MetricsTracker::MetricsTracker(const NoisyDataset& train, const Dataset* test, std::string method)
    : train_(train), test_(test), method_(std::move(method)), train_features_(features_of(train.data)) {
  if (test_ && test_->size() > 0) test_features_ = features_of(*test_);
}

MetricRecord MetricsTracker::record(const EpochStats& stats, const MlpParams& params) const {
  MetricRecord r;
  r.epoch = stats.epoch;
  r.method = method_;
  r.stage = stats.stage;
  r.loss_nl = stats.loss_nl;
  r.loss_pl = stats.loss_pl;
  r.n_plplus_accepted = stats.n_plplus_accepted;
  r.n_nl_terms = stats.n_nl_terms;
  r.n_pl_terms = stats.n_pl_terms;

  const RowMatrix logits = predict_logits(params, train_features_);
  std::size_t n_clean = 0, n_noisy = 0, ok_clean = 0, ok_noisy = 0;
  std::vector<ClassLabel> given;
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < train_.data.size(); ++i) {
    const auto& s = train_.data.samples[i];
    given.push_back(s.given_label);
    ids.push_back(s.id);
    const bool hit = argmax(softmax(logits.row(i)).values()) == s.true_label.index;
    if (train_.clean_mask[i]) {
      ++n_clean;
      ok_clean += hit;
    } else {
      ++n_noisy;
      ok_noisy += hit;
    }
  }
  if (n_clean) r.train_acc_clean = static_cast<double>(ok_clean) / static_cast<double>(n_clean);
  if (n_noisy) r.train_acc_noisy = static_cast<double>(ok_noisy) / static_cast<double>(n_noisy);
  if (n_clean && n_noisy) {
    const auto records = make_filter_records(logits, given, ids, train_.clean_mask);
    const auto ap = evaluate_filtering(records);
    r.ap_clean = ap.ap_clean_positive;
    r.ap_noisy = ap.ap_noisy_positive;
  }
  if (test_ && test_->size() > 0) {
    std::vector<ClassLabel> truth;
    for (const auto& s : test_->samples) truth.push_back(s.true_label);
    r.test_acc = accuracy(predict_logits(params, test_features_), truth);
  }
  return r;
}

}  // namespace nll
