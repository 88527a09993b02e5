#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nll/matrix.hpp"
#include "nll/rng.hpp"

namespace nll {

enum class Activation : std::uint32_t { relu = 1 };

// Fully connected classifier: input dim, hidden widths..., num classes.
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::relu;

  // Throws std::invalid_argument unless there is at least one hidden layer,
  // all widths are positive and the output has >= 2 classes.
  void validate() const;

  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t num_classes() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }
  std::size_t num_params() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Desk-scale default: [input, 64, 64, classes].
MlpSpec default_mlp_spec(std::size_t input_dim, std::size_t num_classes);

// Offsets of one affine layer inside the flat parameter array. Weights are
// row-major [out][in], followed by the out biases.
struct LayerSlice {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

std::vector<LayerSlice> layer_slices(const MlpSpec& spec);

struct MlpParams {
  MlpSpec spec;
  std::vector<double> values;
  // Bumped on every update; forward caches remember the generation they were
  // computed at.
  std::uint64_t generation = 0;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
MlpParams init_params(const MlpSpec& spec, RandomStream rng);

struct ForwardCache {
  std::uint64_t generation = 0;
  std::size_t batch = 0;
  // activations[0] is the input; activations[l] the post-activation output of
  // layer l (the last entry holds the logits).
  std::vector<RowMatrix> activations;
};

struct ForwardResult {
  RowMatrix logits;
  ForwardCache cache;
};

// Throws InvalidInput when features.cols does not match the input width.
ForwardResult forward(const MlpParams& params, const RowMatrix& features);

// Logits only, no cache.
RowMatrix predict_logits(const MlpParams& params, const RowMatrix& features);

// Gradient of sum_i <grad_logits_i, logits_i> with respect to the flat
// parameters. Throws std::logic_error if the cache is stale and InvalidInput on
// shape mismatch.
std::vector<double> backward(const MlpParams& params, const ForwardCache& cache,
                             const RowMatrix& grad_logits);

struct OptimizerState {
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> buffer;
  std::vector<bool> decay_mask;  // true for weights, false for biases

  static OptimizerState for_params(const MlpParams& params, double momentum = 0.9,
                                   double weight_decay = 1e-4);
};

// buffer <- momentum * buffer + grad + weight_decay * param (masked);
// param <- param - lr * buffer.
void sgd_update(std::span<double> params, std::span<const double> grads,
                std::span<double> buffer, const std::vector<bool>& decay_mask, double momentum,
                double weight_decay, double lr);

void sgd_step(MlpParams& params, std::span<const double> grads, OptimizerState& state, double lr);

// Step decay: initial / decay_factor^(number of milestones <= epoch).
struct LrSchedule {
  double initial = 1e-2;
  double decay_factor = 10.0;
  std::vector<std::size_t> milestones;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

// Binary checkpoint; layout documented in README.md.
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params);
MlpParams load_checkpoint(const std::filesystem::path& path);

}  // namespace nll
