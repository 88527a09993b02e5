#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "nll/datasets.hpp"
#include "nll/eval.hpp"
#include "nll/losses.hpp"
#include "nll/model.hpp"

namespace nll {

enum class Method {
  jnpl,         // NL+ and PL+ jointly, single stage
  nlplus,       // NL+ only (JNPL without the positive term)
  nlnl,         // NL -> SelNL -> SelPL
  pl_baseline,  // plain cross-entropy on the given labels
};

std::string_view to_string(Method method);
// Accepts jnpl, nlplus, nlnl, pl, pl_baseline. Throws std::invalid_argument.
Method parse_method(std::string_view text);

struct NlnlStages {
  std::size_t nl = 100;
  std::size_t selnl = 50;
  std::size_t selpl = 50;
};

struct TrainRunConfig {
  Method method = Method::jnpl;
  std::size_t epochs = 200;  // single-stage methods
  NlnlStages stages;         // nlnl only
  std::size_t batch_size = 128;
  LrSchedule schedule{1e-2, 10.0, {160}};
  std::size_t k_complementary = 1;
  JnplConfig jnpl;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double selpl_threshold = 0.5;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t seed = 17;

  void validate() const;
  std::size_t total_epochs() const;

  // 200 epochs, decay at 160.
  static TrainRunConfig desk();
  // 1000 epochs, decay at 800.
  static TrainRunConfig full();
};

struct FilterVerdict {
  std::uint64_t sample_id = 0;
  bool is_clean_predicted = false;
  double clean_score = 0.0;  // p at the given label
  ProbVector pseudo_target;
};

using EpochObserver = std::function<void(const EpochStats&, const MlpParams&)>;

struct TrainResult {
  MlpParams params;
  std::vector<EpochStats> epochs;
  std::vector<FilterVerdict> verdicts;
};

// All trainers: weights from RandomStream(seed).split(kInit); each epoch
// shuffles its active rows with split(kShuffle).split(epoch); step s draws
// from split(kStep).split(s). Non-finite logits, losses or parameters throw
// NumericError naming the epoch and step.

// Every sample contributes an NL+ term every epoch; PL+ applies to the
// accepted candidates of each mini-batch.
TrainResult train_jnpl(const TrainingView& data, const TrainRunConfig& cfg,
                       const EpochObserver& observer = {});

// NL+ alone, sharing the complementary-label streams of train_jnpl.
TrainResult train_nlplus(const TrainingView& data, const TrainRunConfig& cfg,
                         const EpochObserver& observer = {});

// Stage 1 NL on all samples; stage 2 NL on samples with p_given > 1/c; stage 3
// PL on samples with p_given > selpl_threshold. Membership is re-evaluated at
// every epoch start.
TrainResult train_nlnl(const TrainingView& data, const TrainRunConfig& cfg,
                       const EpochObserver& observer = {});

TrainResult train_pl_baseline(const TrainingView& data, const TrainRunConfig& cfg,
                              const EpochObserver& observer = {});

// Dispatch on cfg.method.
TrainResult train(const TrainingView& data, const TrainRunConfig& cfg,
                  const EpochObserver& observer = {});

// Clean iff every probability off the given label is strictly below 1/c.
std::vector<FilterVerdict> filter_verdicts(const MlpParams& params, const TrainingView& data);

enum class PseudoTargets { hard, soft };

struct PseudoLabelConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  LrSchedule schedule{0.1, 10.0, {40, 60}};
  PseudoTargets targets = PseudoTargets::hard;
  double confidence_gate = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t seed = 17;

  void validate() const;

  // 100 epochs, decays at 40 and 60.
  static PseudoLabelConfig desk();
  // 480 epochs, decays at 192 and 288.
  static PseudoLabelConfig full();
};

// Fresh model: predicted-clean samples train on their given labels; the
// rest on their pseudo-target when its max exceeds the gate, else excluded.
// Throws NumericError when no sample is predicted clean.
TrainResult pseudo_label_train(const TrainingView& data, std::span<const FilterVerdict> verdicts,
                               const PseudoLabelConfig& cfg, const EpochObserver& observer = {});

// Header sample_id,given,true,clean_score,is_clean_predicted,pseudo_label,p_comp_max;
// `true` is left empty when truth is not supplied. p_comp_max is the largest
// probability off the given label.
void write_verdicts_csv(std::ostream& os, std::span<const FilterVerdict> verdicts,
                        std::span<const ClassLabel> given,
                        std::optional<std::span<const ClassLabel>> truth = std::nullopt);

}  // namespace nll
