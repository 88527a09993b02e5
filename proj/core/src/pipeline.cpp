#include "nll/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nll/error.hpp"

namespace nll {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::jnpl: return "jnpl";
    case Method::nlplus: return "nlplus";
    case Method::nlnl: return "nlnl";
    case Method::pl_baseline: return "pl_baseline";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "jnpl") return Method::jnpl;
  if (text == "nlplus") return Method::nlplus;
  if (text == "nlnl") return Method::nlnl;
  if (text == "pl" || text == "pl_baseline") return Method::pl_baseline;
  throw std::invalid_argument("unknown method '" + std::string(text) +
                              "' (expected jnpl, nlplus, nlnl or pl)");
}

namespace {

void validate_common(std::size_t batch_size, const LrSchedule& schedule, double momentum,
                     double weight_decay, const std::vector<std::size_t>& hidden) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  schedule.validate();
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (hidden.empty()) throw std::invalid_argument("network needs at least one hidden layer");
  for (std::size_t w : hidden) {
    if (w == 0) throw std::invalid_argument("hidden widths must be positive");
  }
}

MlpSpec spec_for(const TrainingView& data, const std::vector<std::size_t>& hidden) {
  MlpSpec spec;
  spec.layer_widths.push_back(data.features().cols);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(data.num_classes());
  spec.validate();
  return spec;
}

struct EpochAccumulator {
  double nl_sum = 0.0;
  double pl_sum = 0.0;
  std::size_t nl_terms = 0;
  std::size_t pl_terms = 0;
  std::size_t accepted = 0;
};

// d loss / d logits for one mini-batch, already scaled for the batch mean.
// `rows` index into the training view.
using Objective = std::function<RowMatrix(const std::vector<Logits>& logits,
                                          std::span<const std::size_t> rows, RandomStream step_rng,
                                          EpochAccumulator& acc)>;

class Trainer {
 public:
  Trainer(const TrainingView& data, const MlpSpec& spec, RandomStream root, std::size_t batch_size,
          LrSchedule schedule, double momentum, double weight_decay)
      : data_(data),
        root_(root),
        batch_size_(batch_size),
        schedule_(std::move(schedule)),
        params_(init_params(spec, root.split(stream_tag::kInit))),
        opt_(OptimizerState::for_params(params_, momentum, weight_decay)) {}

  void run_epoch(std::size_t epoch, std::vector<std::size_t> active, const std::string& stage,
                 const Objective& objective, const EpochObserver& observer,
                 std::vector<EpochStats>& log) {
    RandomStream shuffle_rng = root_.split(stream_tag::kShuffle).split(epoch);
    for (std::size_t i = active.size(); i > 1; --i) {
      std::swap(active[i - 1], active[shuffle_rng.below(i)]);
    }
    const double lr = schedule_.lr_at(epoch);
    const std::size_t dim = data_.features().cols;
    EpochAccumulator acc;
    for (std::size_t start = 0; start < active.size(); start += batch_size_) {
      const std::size_t end = std::min(active.size(), start + batch_size_);
      const std::span<const std::size_t> rows(active.data() + start, end - start);
      RowMatrix batch(rows.size(), dim);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = data_.features().row(rows[i]);
        std::copy(src.begin(), src.end(), batch.row(i).begin());
      }
      auto fwd = forward(params_, batch);
      std::vector<Logits> logits;
      logits.reserve(rows.size());
      try {
        for (std::size_t i = 0; i < rows.size(); ++i) logits.emplace_back(fwd.logits.row(i));
      } catch (const InvalidInput&) {
        fail(epoch, "non-finite logits");
      }
      const RandomStream step_rng = root_.split(stream_tag::kStep).split(step_);
      const RowMatrix grad = objective(logits, rows, step_rng, acc);
      if (!std::isfinite(acc.nl_sum) || !std::isfinite(acc.pl_sum)) fail(epoch, "non-finite loss");
      const auto param_grads = backward(params_, fwd.cache, grad);
      sgd_step(params_, param_grads, opt_, lr);
      for (double v : params_.values) {
        if (!std::isfinite(v)) fail(epoch, "non-finite parameters");
      }
      ++step_;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.stage = stage;
    stats.loss_nl = acc.nl_terms ? acc.nl_sum / static_cast<double>(acc.nl_terms) : 0.0;
    stats.loss_pl = acc.pl_terms ? acc.pl_sum / static_cast<double>(acc.pl_terms) : 0.0;
    stats.n_nl_terms = acc.nl_terms;
    stats.n_pl_terms = acc.pl_terms;
    stats.n_plplus_accepted = acc.accepted;
    log.push_back(stats);
    if (observer) observer(stats, params_);
  }

  // p at the given label for every training row under the current model.
  std::vector<double> given_confidence() const {
    const RowMatrix logits = predict_logits(params_, data_.features());
    std::vector<double> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = softmax(logits.row(i))[data_.given_labels()[i].index];
    }
    return out;
  }

  const MlpParams& params() const { return params_; }

 private:
  [[noreturn]] void fail(std::size_t epoch, const char* what) const {
    throw NumericError(std::string(what) + " at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step_));
  }

  const TrainingView& data_;
  RandomStream root_;
  std::size_t batch_size_;
  LrSchedule schedule_;
  MlpParams params_;
  OptimizerState opt_;
  std::size_t step_ = 0;
};

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

void put_row(RowMatrix& m, std::size_t i, const std::vector<double>& values, double scale) {
  auto row = m.row(i);
  for (std::size_t j = 0; j < values.size(); ++j) row[j] = values[j] * scale;
}

Objective negative_objective(const TrainingView& data, std::size_t k, bool weighted) {
  return [&data, k, weighted](const std::vector<Logits>& logits, std::span<const std::size_t> rows,
                              RandomStream step_rng, EpochAccumulator& acc) {
    const std::size_t c = data.num_classes();
    RandomStream comp_rng = step_rng.split(stream_tag::kComplementary);
    std::vector<ClassLabel> given;
    given.reserve(rows.size());
    for (std::size_t r : rows) given.push_back(data.given_labels()[r]);
    const auto ybars = sample_batch_complementary(given, c, k, comp_rng);
    const double inv_batch = 1.0 / static_cast<double>(rows.size());
    RowMatrix grad(rows.size(), c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const LossEval l = weighted ? nlplus_loss(logits[i], ybars[i]) : nl_loss(logits[i], ybars[i]);
      acc.nl_sum += l.value;
      put_row(grad, i, l.grad, inv_batch);
    }
    acc.nl_terms += rows.size();
    return grad;
  };
}

// Cross-entropy against a per-row hard label, or a soft target where one is set.
Objective positive_objective(std::span<const ClassLabel> labels,
                             const std::vector<std::optional<ProbVector>>* soft = nullptr) {
  return [labels, soft](const std::vector<Logits>& logits, std::span<const std::size_t> rows,
                        RandomStream, EpochAccumulator& acc) {
    const std::size_t c = logits.front().size();
    const double inv_batch = 1.0 / static_cast<double>(rows.size());
    RowMatrix grad(rows.size(), c);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      const LossEval l = (soft && (*soft)[r]) ? soft_pl_loss(logits[i], *(*soft)[r])
                                              : pl_loss(logits[i], labels[r]);
      acc.pl_sum += l.value;
      put_row(grad, i, l.grad, inv_batch);
    }
    acc.pl_terms += rows.size();
    return grad;
  };
}

Objective jnpl_objective(const TrainingView& data, std::size_t k, const JnplConfig& cfg) {
  return [&data, k, cfg](const std::vector<Logits>& logits, std::span<const std::size_t> rows,
                         RandomStream step_rng, EpochAccumulator& acc) {
    std::vector<ClassLabel> given;
    given.reserve(rows.size());
    for (std::size_t r : rows) given.push_back(data.given_labels()[r]);
    const JnplBatchResult res = jnpl_loss(logits, given, k, cfg, step_rng);
    const std::size_t n_accepted = res.selection.accepted.size();
    acc.nl_sum += res.nl_term * static_cast<double>(rows.size());
    acc.nl_terms += rows.size();
    const std::size_t pl_denom = cfg.pl_norm == PlPlusNorm::batch ? rows.size() : n_accepted;
    acc.pl_sum += res.pl_term * static_cast<double>(pl_denom);
    acc.pl_terms += n_accepted;
    acc.accepted += n_accepted;
    RowMatrix grad(rows.size(), data.num_classes());
    for (std::size_t i = 0; i < rows.size(); ++i) put_row(grad, i, res.grads[i], 1.0);
    return grad;
  };
}

Trainer make_trainer(const TrainingView& data, const TrainRunConfig& cfg) {
  return Trainer(data, spec_for(data, cfg.hidden), RandomStream(cfg.seed), cfg.batch_size,
                 cfg.schedule, cfg.momentum, cfg.weight_decay);
}

TrainResult single_stage(const TrainingView& data, const TrainRunConfig& cfg, const std::string& stage,
                         const Objective& objective, const EpochObserver& observer) {
  cfg.validate();
  Trainer trainer = make_trainer(data, cfg);
  TrainResult result;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    trainer.run_epoch(e, all_rows(data.size()), stage, objective, observer, result.epochs);
  }
  result.params = trainer.params();
  result.verdicts = filter_verdicts(result.params, data);
  return result;
}

}  // namespace

void TrainRunConfig::validate() const {
  validate_common(batch_size, schedule, momentum, weight_decay, hidden);
  jnpl.validate();
  if (k_complementary < 1) throw std::invalid_argument("k_complementary must be >= 1");
  if (!(selpl_threshold >= 0.0 && selpl_threshold <= 1.0)) {
    throw std::invalid_argument("selpl_threshold must be in [0, 1]");
  }
}

std::size_t TrainRunConfig::total_epochs() const {
  return method == Method::nlnl ? stages.nl + stages.selnl + stages.selpl : epochs;
}

TrainRunConfig TrainRunConfig::desk() { return TrainRunConfig{}; }

TrainRunConfig TrainRunConfig::full() {
  TrainRunConfig cfg;
  cfg.epochs = 1000;
  cfg.schedule = LrSchedule{1e-2, 10.0, {800}};
  cfg.stages = NlnlStages{500, 250, 250};
  return cfg;
}

TrainResult train_jnpl(const TrainingView& data, const TrainRunConfig& cfg,
                       const EpochObserver& observer) {
  return single_stage(data, cfg, "jnpl", jnpl_objective(data, cfg.k_complementary, cfg.jnpl),
                      observer);
}

TrainResult train_nlplus(const TrainingView& data, const TrainRunConfig& cfg,
                         const EpochObserver& observer) {
  return single_stage(data, cfg, "nlplus", negative_objective(data, cfg.k_complementary, true),
                      observer);
}

TrainResult train_pl_baseline(const TrainingView& data, const TrainRunConfig& cfg,
                              const EpochObserver& observer) {
  return single_stage(data, cfg, "pl", positive_objective(data.given_labels()), observer);
}

TrainResult train_nlnl(const TrainingView& data, const TrainRunConfig& cfg,
                       const EpochObserver& observer) {
  cfg.validate();
  Trainer trainer = make_trainer(data, cfg);
  TrainResult result;
  const auto nl = negative_objective(data, cfg.k_complementary, false);
  const auto pl = positive_objective(data.given_labels());
  const double uniform = 1.0 / static_cast<double>(data.num_classes());

  auto gated_rows = [&](double threshold) {
    const auto conf = trainer.given_confidence();
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      if (conf[i] > threshold) rows.push_back(i);
    }
    return rows;
  };

  std::size_t epoch = 0;
  for (std::size_t e = 0; e < cfg.stages.nl; ++e, ++epoch) {
    trainer.run_epoch(epoch, all_rows(data.size()), "nl", nl, observer, result.epochs);
  }
  for (std::size_t e = 0; e < cfg.stages.selnl; ++e, ++epoch) {
    trainer.run_epoch(epoch, gated_rows(uniform), "selnl", nl, observer, result.epochs);
  }
  for (std::size_t e = 0; e < cfg.stages.selpl; ++e, ++epoch) {
    trainer.run_epoch(epoch, gated_rows(cfg.selpl_threshold), "selpl", pl, observer, result.epochs);
  }
  result.params = trainer.params();
  result.verdicts = filter_verdicts(result.params, data);
  return result;
}

TrainResult train(const TrainingView& data, const TrainRunConfig& cfg, const EpochObserver& observer) {
  switch (cfg.method) {
    case Method::jnpl: return train_jnpl(data, cfg, observer);
    case Method::nlplus: return train_nlplus(data, cfg, observer);
    case Method::nlnl: return train_nlnl(data, cfg, observer);
    case Method::pl_baseline: return train_pl_baseline(data, cfg, observer);
  }
  throw std::logic_error("unknown training method");
}

std::vector<FilterVerdict> filter_verdicts(const MlpParams& params, const TrainingView& data) {
  const RowMatrix logits = predict_logits(params, data.features());
  const double bound = 1.0 / static_cast<double>(data.num_classes());
  std::vector<FilterVerdict> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    ProbVector p = softmax(logits.row(i));
    const std::size_t y = data.given_labels()[i].index;
    bool clean = true;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k != y && !(p[k] < bound)) clean = false;
    }
    const double score = p[y];
    out.push_back({data.ids()[i], clean, score, std::move(p)});
  }
  return out;
}

void PseudoLabelConfig::validate() const {
  validate_common(batch_size, schedule, momentum, weight_decay, hidden);
  if (!(confidence_gate >= 0.0 && confidence_gate <= 1.0)) {
    throw std::invalid_argument("pseudo-label confidence gate must be in [0, 1]");
  }
}

PseudoLabelConfig PseudoLabelConfig::desk() { return PseudoLabelConfig{}; }

PseudoLabelConfig PseudoLabelConfig::full() {
  PseudoLabelConfig cfg;
  cfg.epochs = 480;
  cfg.schedule = LrSchedule{0.1, 10.0, {192, 288}};
  return cfg;
}

TrainResult pseudo_label_train(const TrainingView& data, std::span<const FilterVerdict> verdicts,
                               const PseudoLabelConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  if (verdicts.size() != data.size()) {
    throw std::invalid_argument("pseudo_label_train: verdicts do not cover the dataset");
  }
  std::vector<ClassLabel> targets(data.given_labels().begin(), data.given_labels().end());
  std::vector<std::optional<ProbVector>> soft(data.size());
  std::vector<std::size_t> rows;
  std::size_t n_clean = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& v = verdicts[i];
    if (v.sample_id != data.ids()[i]) {
      throw std::invalid_argument("pseudo_label_train: verdict order does not match the dataset");
    }
    if (v.pseudo_target.size() != data.num_classes()) {
      throw std::invalid_argument("pseudo_label_train: pseudo-target has the wrong class count");
    }
    if (v.is_clean_predicted) {
      ++n_clean;
      rows.push_back(i);
      continue;
    }
    const std::size_t top = argmax(v.pseudo_target.values());
    if (!(v.pseudo_target[top] > cfg.confidence_gate)) continue;
    targets[i] = ClassLabel{top};
    if (cfg.targets == PseudoTargets::soft) soft[i] = v.pseudo_target;
    rows.push_back(i);
  }
  if (n_clean == 0) {
    throw NumericError("pseudo_label_train: no sample was predicted clean; nothing to anchor on");
  }

  Trainer trainer(data, spec_for(data, cfg.hidden), RandomStream(cfg.seed).split(stream_tag::kPseudo),
                  cfg.batch_size, cfg.schedule, cfg.momentum, cfg.weight_decay);
  const auto objective = positive_objective(targets, &soft);
  TrainResult result;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    trainer.run_epoch(e, rows, "pseudo", objective, observer, result.epochs);
  }
  result.params = trainer.params();
  result.verdicts = filter_verdicts(result.params, data);
  return result;
}

void write_verdicts_csv(std::ostream& os, std::span<const FilterVerdict> verdicts,
                        std::span<const ClassLabel> given,
                        std::optional<std::span<const ClassLabel>> truth) {
  if (given.size() != verdicts.size() || (truth && truth->size() != verdicts.size())) {
    throw InvalidInput("write_verdicts_csv: length mismatch");
  }
  os << "sample_id,given,true,clean_score,is_clean_predicted,pseudo_label,p_comp_max\n";
  char buf[64];
  char comp[64];
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const auto& v = verdicts[i];
    std::snprintf(buf, sizeof buf, "%.17g", v.clean_score);
    double comp_max = 0.0;
    for (std::size_t k = 0; k < v.pseudo_target.size(); ++k) {
      if (k != given[i].index) comp_max = std::max(comp_max, v.pseudo_target[k]);
    }
    std::snprintf(comp, sizeof comp, "%.17g", comp_max);
    os << v.sample_id << ',' << given[i].index << ',';
    if (truth) os << (*truth)[i].index;
    os << ',' << buf << ',' << (v.is_clean_predicted ? 1 : 0) << ','
       << argmax(v.pseudo_target.values()) << ',' << comp << '\n';
  }
}

}  // namespace nll
