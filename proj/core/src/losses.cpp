#include "nll/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nll/error.hpp"

namespace nll {

void JnplConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("jnpl lambda must be a finite value >= 0");
  }
  if (n_exponent < 0) throw std::invalid_argument("jnpl n_exponent must be >= 0");
}

LossEval pl_loss(const Logits& logits, ClassLabel y) {
  check_label(y, logits.size());
  const ProbVector p = softmax(logits);
  LossEval out;
  out.value = -std::log(clamp_prob(p[y.index]));
  out.grad.assign(p.values().begin(), p.values().end());
  out.grad[y.index] = -p.mass_excluding(y.index);
  return out;
}

LossEval soft_pl_loss(const Logits& logits, const ProbVector& target) {
  if (target.size() != logits.size()) throw InvalidInput("soft target size mismatch");
  const ProbVector p = softmax(logits);
  LossEval out;
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.value -= target[i] * std::log(clamp_prob(p[i]));
    out.grad[i] = p[i] - target[i];
  }
  return out;
}

namespace {

// Shared body of NL and NL+. With `weighted`, each label's term is scaled by
// its own detached (1 - p_ybar).
LossEval negative_loss(const Logits& logits, const ComplementaryLabelSet& ybar, bool weighted) {
  const std::size_t c = logits.size();
  for (ClassLabel l : ybar) check_label(l, c);
  const ProbVector p = softmax(logits);
  const double inv_k = 1.0 / static_cast<double>(ybar.size());

  LossEval out;
  out.grad.assign(c, 0.0);
  for (ClassLabel l : ybar) {
    const std::size_t j = l.index;
    const double p_bar = p[j];
    const double rest = p.mass_excluding(j);  // 1 - p_bar
    if (rest < kProbFloor) out.saturated = true;
    const double neg_log = -std::log(clamp_prob(rest));
    const double factor = weighted ? rest : 1.0;
    out.value += inv_k * factor * neg_log;

    out.grad[j] += inv_k * factor * p_bar;
    if (rest > 0.0) {
      // weighted: -(1 - p_bar) * p_bar / (1 - p_bar) * p_i = -p_bar * p_i
      const double scale = weighted ? p_bar : p_bar / rest;
      for (std::size_t i = 0; i < c; ++i) {
        if (i != j) out.grad[i] -= inv_k * scale * p[i];
      }
    } else {
      // All other classes underflowed; spread the mass evenly to keep the
      // gradient zero-sum.
      const double share = inv_k * factor * p_bar / static_cast<double>(c - 1);
      for (std::size_t i = 0; i < c; ++i) {
        if (i != j) out.grad[i] -= share;
      }
    }
  }
  return out;
}

}  // namespace

LossEval nl_loss(const Logits& logits, const ComplementaryLabelSet& ybar) {
  return negative_loss(logits, ybar, false);
}

LossEval nlplus_loss(const Logits& logits, const ComplementaryLabelSet& ybar) {
  return negative_loss(logits, ybar, true);
}

double plplus_weight(double p_hat, int n_exponent) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) {
    throw std::invalid_argument("plplus_weight: p_hat must be in [0, 1]");
  }
  if (n_exponent < 0) throw std::invalid_argument("plplus_weight: n_exponent must be >= 0");
  double weight = 1.0;
  double power = p_hat;  // p^(2^n)
  for (int n = 0; n <= n_exponent; ++n) {
    weight *= 1.0 + power;
    power *= power;
  }
  return weight;
}

LossEval plplus_loss(const Logits& logits, ClassLabel target, const JnplConfig& cfg) {
  check_label(target, logits.size());
  const ProbVector p = softmax(logits);
  const double p_hat = p[target.index];
  const double weight = plplus_weight(p_hat, cfg.n_exponent);
  LossEval out;
  out.value = -weight * std::log(clamp_prob(p_hat));
  out.grad.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.grad[i] = weight * p[i];
  out.grad[target.index] = -weight * p.mass_excluding(target.index);
  return out;
}

bool is_plplus_candidate(const ProbVector& probs) {
  const std::size_t c = probs.size();
  const std::size_t top = argmax(probs.values());
  const double bound = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < c; ++i) {
    if (i != top && !(probs[i] < bound)) return false;
  }
  return true;
}

std::vector<PlPlusCandidate> select_plplus(std::span<const IdentifiedProbs> probs,
                                           RandomStream& rng) {
  std::vector<PlPlusCandidate> accepted;
  for (const auto& item : probs) {
    if (!is_plplus_candidate(item.probs)) continue;
    const std::size_t top = argmax(item.probs.values());
    const double p_hat = item.probs[top];
    if (rng.bernoulli(p_hat)) {
      accepted.push_back({item.sample_id, ClassLabel{top}, p_hat});
    }
  }
  return accepted;
}

std::vector<ComplementaryLabelSet> sample_batch_complementary(
    std::span<const ClassLabel> given, std::size_t num_classes, std::size_t k,
    RandomStream& rng) {
  std::vector<ComplementaryLabelSet> out;
  out.reserve(given.size());
  for (ClassLabel y : given) out.push_back(sample_complementary(y, num_classes, k, rng));
  return out;
}

JnplBatchResult jnpl_loss(std::span<const Logits> batch_logits,
                          std::span<const ClassLabel> given_labels, std::size_t k_complementary,
                          const JnplConfig& cfg, RandomStream rng) {
  cfg.validate();
  if (batch_logits.empty()) throw std::invalid_argument("jnpl_loss: empty batch");
  if (batch_logits.size() != given_labels.size()) {
    throw InvalidInput("jnpl_loss: logits and labels differ in length");
  }
  const std::size_t batch = batch_logits.size();
  const std::size_t c = batch_logits.front().size();
  for (const auto& l : batch_logits) {
    if (l.size() != c) throw InvalidInput("jnpl_loss: inconsistent class count in batch");
  }

  RandomStream comp_rng = rng.split(stream_tag::kComplementary);
  RandomStream select_rng = rng.split(stream_tag::kSelect);
  const auto ybars = sample_batch_complementary(given_labels, c, k_complementary, comp_rng);

  JnplBatchResult out;
  out.grads.resize(batch);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  std::vector<IdentifiedProbs> probs;
  probs.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    LossEval nl = nlplus_loss(batch_logits[i], ybars[i]);
    out.nl_term += nl.value;
    for (double& g : nl.grad) g *= inv_batch;
    out.grads[i] = std::move(nl.grad);
    probs.push_back({i, softmax(batch_logits[i])});
  }
  out.nl_term *= inv_batch;

  for (const auto& item : probs) {
    if (is_plplus_candidate(item.probs)) ++out.selection.n_candidates;
  }
  out.selection.accepted = select_plplus(probs, select_rng);

  const auto& accepted = out.selection.accepted;
  if (!accepted.empty()) {
    const double denom = cfg.pl_norm == PlPlusNorm::batch ? static_cast<double>(batch)
                                                          : static_cast<double>(accepted.size());
    const double inv_denom = 1.0 / denom;
    for (const auto& cand : accepted) {
      const std::size_t i = static_cast<std::size_t>(cand.sample_id);
      const LossEval pl = plplus_loss(batch_logits[i], cand.target, cfg);
      out.pl_term += pl.value;
      if (cfg.lambda != 0.0) {
        for (std::size_t j = 0; j < c; ++j) {
          out.grads[i][j] += cfg.lambda * inv_denom * pl.grad[j];
        }
      }
    }
    out.pl_term *= inv_denom;
  }
  out.total = out.nl_term + cfg.lambda * out.pl_term;
  return out;
}

}  // namespace nll
