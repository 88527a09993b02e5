#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nll/prob.hpp"
#include "nll/rng.hpp"

namespace nll {

// Loss value (nats) with its gradient with respect to the logits.
struct LossEval {
  double value = 0.0;
  std::vector<double> grad;
  // Set when a complementary label's probability hit the clamp ceiling.
  bool saturated = false;
};

// Denominator of the PL+ sum inside a mini-batch.
enum class PlPlusNorm {
  batch,     // divide by the batch size
  accepted,  // divide by the number of accepted samples
};

struct JnplConfig {
  double lambda = 0.01;  // weight of the positive term
  int n_exponent = 3;    // highest power-of-two index in the PL+ weight product
  // With `accepted`, a batch with a handful of accepted samples gives each of
  // them up to B times the per-sample weight of the NL+ term. On small
  // tabular tasks at high noise that self-reinforces the early argmax and the
  // model collapses to one class.
  PlPlusNorm pl_norm = PlPlusNorm::batch;

  // Throws std::invalid_argument on negative lambda or exponent.
  void validate() const;
};

struct PlPlusCandidate {
  std::uint64_t sample_id = 0;
  ClassLabel target;
  double acceptance_prob = 0.0;
};

// Cross-entropy against y: -log p_y, grad = p - onehot(y).
LossEval pl_loss(const Logits& logits, ClassLabel y);

// Cross-entropy against a soft target distribution: -sum q_i log p_i,
// grad = p - q. Used by soft pseudo-labeling.
LossEval soft_pl_loss(const Logits& logits, const ProbVector& target);

// Negative learning: mean over the complementary labels of -log(1 - p_ybar).
// For one label, grad_ybar = p_ybar and grad_i = -p_ybar / (1 - p_ybar) * p_i.
LossEval nl_loss(const Logits& logits, const ComplementaryLabelSet& ybar);

// NL scaled per label by the detached factor (1 - p_ybar). For one label,
// grad_ybar = (1 - p_ybar) p_ybar and grad_i = -p_ybar p_i.
LossEval nlplus_loss(const Logits& logits, const ComplementaryLabelSet& ybar);

// prod_{n=0}^{N} (1 + p^(2^n)); equals (1 - p^(2^(N+1))) / (1 - p) for p < 1.
double plplus_weight(double p_hat, int n_exponent);

// Cross-entropy on `target` scaled by the detached plplus_weight(p_target).
// grad_target = -(1 - p^(2^(N+1))), grad_i = weight * p_i.
LossEval plplus_loss(const Logits& logits, ClassLabel target, const JnplConfig& cfg);

// The PL+ candidacy rule: with yhat = argmax p, every other entry must be
// strictly below 1/c.
bool is_plplus_candidate(const ProbVector& probs);

struct IdentifiedProbs {
  std::uint64_t sample_id = 0;
  ProbVector probs;
};

// Candidates are accepted with an independent Bernoulli(p_yhat) draw; only
// candidates consume draws, in input order. The given label is not consulted.
std::vector<PlPlusCandidate> select_plplus(std::span<const IdentifiedProbs> probs,
                                           RandomStream& rng);

struct SelectionReport {
  std::size_t n_candidates = 0;
  std::vector<PlPlusCandidate> accepted;  // sample_id is the batch position
};

struct JnplBatchResult {
  double total = 0.0;
  double nl_term = 0.0;  // mean NL+ loss over the batch
  double pl_term = 0.0;  // PL+ sum over the accepted subset / pl_norm denominator (0 if none)
  std::vector<std::vector<double>> grads;  // d total / d logits, per sample
  SelectionReport selection;
};

// Draws one complementary set per sample from `rng`, in batch order.
std::vector<ComplementaryLabelSet> sample_batch_complementary(
    std::span<const ClassLabel> given, std::size_t num_classes, std::size_t k,
    RandomStream& rng);

// Composite objective mean(NL+) + lambda * sum_{accepted}(PL+) / D, with D
// the batch size or the accepted count per cfg.pl_norm.
// Complementary labels come from rng.split(kComplementary) and selection
// draws from rng.split(kSelect), so the NL+ term sees the same labels for any
// lambda.
JnplBatchResult jnpl_loss(std::span<const Logits> batch_logits,
                          std::span<const ClassLabel> given_labels, std::size_t k_complementary,
                          const JnplConfig& cfg, RandomStream rng);

}  // namespace nll
