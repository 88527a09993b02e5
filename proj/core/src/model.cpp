#include "nll/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "nll/error.hpp"

namespace nll {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

ConstMapRM as_eigen(const RowMatrix& m) { return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)}; }
MapRM as_eigen(RowMatrix& m) { return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)}; }

ConstMapRM weights_of(const std::vector<double>& values, const LayerSlice& s) {
  return {values.data() + s.weight_offset, static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in)};
}

ConstMapVec bias_of(const std::vector<double>& values, const LayerSlice& s) {
  return {values.data() + s.bias_offset, static_cast<Eigen::Index>(s.out)};
}

RowMatrix run_forward(const MlpParams& params, const RowMatrix& features,
                      std::vector<RowMatrix>* activations) {
  const auto& spec = params.spec;
  spec.validate();
  if (params.values.size() != spec.num_params()) {
    throw InvalidInput("parameter array does not match the network spec");
  }
  if (features.cols != spec.input_dim()) {
    throw InvalidInput("feature dimension " + std::to_string(features.cols) +
                       " does not match network input " + std::to_string(spec.input_dim()));
  }
  const auto slices = layer_slices(spec);
  RowMatrix current = features;
  if (activations) {
    activations->clear();
    activations->push_back(current);
  }
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& s = slices[l];
    RowMatrix next(features.rows, s.out);
    auto out = as_eigen(next);
    out.noalias() = as_eigen(current) * weights_of(params.values, s).transpose();
    out.rowwise() += bias_of(params.values, s).transpose();
    if (l + 1 < slices.size()) out = out.cwiseMax(0.0);
    current = std::move(next);
    if (activations) activations->push_back(current);
  }
  return current;
}

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::array<char, sizeof(T)> bytes{};
  auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw FormatError("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

constexpr std::array<char, 8> kCheckpointMagic = {'N', 'L', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void MlpSpec::validate() const {
  if (layer_widths.size() < 3) {
    throw std::invalid_argument("MLP needs input, at least one hidden layer and an output width");
  }
  for (std::size_t w : layer_widths) {
    if (w == 0) throw std::invalid_argument("MLP layer widths must be positive");
  }
  if (num_classes() < 2) throw std::invalid_argument("MLP output must have at least 2 classes");
  if (activation != Activation::relu) throw std::invalid_argument("unsupported activation");
}

std::size_t MlpSpec::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    n += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  }
  return n;
}

MlpSpec default_mlp_spec(std::size_t input_dim, std::size_t num_classes) {
  return MlpSpec{{input_dim, 64, 64, num_classes}, Activation::relu};
}

std::vector<LayerSlice> layer_slices(const MlpSpec& spec) {
  std::vector<LayerSlice> out;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    LayerSlice s;
    s.in = spec.layer_widths[l];
    s.out = spec.layer_widths[l + 1];
    s.weight_offset = offset;
    s.bias_offset = offset + s.in * s.out;
    offset = s.bias_offset + s.out;
    out.push_back(s);
  }
  return out;
}

MlpParams init_params(const MlpSpec& spec, RandomStream rng) {
  spec.validate();
  MlpParams params{spec, std::vector<double>(spec.num_params(), 0.0), 0};
  for (const auto& s : layer_slices(spec)) {
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (std::size_t i = 0; i < s.in * s.out; ++i) {
      params.values[s.weight_offset + i] = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
  return params;
}

ForwardResult forward(const MlpParams& params, const RowMatrix& features) {
  ForwardResult result;
  result.logits = run_forward(params, features, &result.cache.activations);
  result.cache.generation = params.generation;
  result.cache.batch = features.rows;
  return result;
}

RowMatrix predict_logits(const MlpParams& params, const RowMatrix& features) {
  return run_forward(params, features, nullptr);
}

std::vector<double> backward(const MlpParams& params, const ForwardCache& cache,
                             const RowMatrix& grad_logits) {
  if (cache.generation != params.generation || cache.activations.empty()) {
    throw std::logic_error("backward: forward cache is stale for these parameters");
  }
  const auto slices = layer_slices(params.spec);
  if (cache.activations.size() != slices.size() + 1) {
    throw std::logic_error("backward: cache does not match the network depth");
  }
  if (grad_logits.rows != cache.batch || grad_logits.cols != params.spec.num_classes()) {
    throw InvalidInput("backward: grad_logits shape does not match the cached forward pass");
  }

  std::vector<double> grads(params.values.size(), 0.0);
  MatRM delta = as_eigen(grad_logits);
  for (std::size_t l = slices.size(); l-- > 0;) {
    const auto& s = slices[l];
    const auto input = as_eigen(cache.activations[l]);
    MapRM dw(grads.data() + s.weight_offset, static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
    dw.noalias() = delta.transpose() * input;
    MapVec db(grads.data() + s.bias_offset, static_cast<Eigen::Index>(s.out));
    db = delta.colwise().sum().transpose();
    if (l > 0) {
      MatRM prev = delta * weights_of(params.values, s);
      // ReLU derivative, taken as 0 at the kink.
      prev = prev.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
      delta = std::move(prev);
    }
  }
  return grads;
}

OptimizerState OptimizerState::for_params(const MlpParams& params, double momentum,
                                          double weight_decay) {
  OptimizerState state;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  state.buffer.assign(params.values.size(), 0.0);
  state.decay_mask.assign(params.values.size(), false);
  for (const auto& s : layer_slices(params.spec)) {
    std::fill_n(state.decay_mask.begin() + static_cast<std::ptrdiff_t>(s.weight_offset), s.in * s.out, true);
  }
  return state;
}

void sgd_update(std::span<double> params, std::span<const double> grads,
                std::span<double> buffer, const std::vector<bool>& decay_mask, double momentum,
                double weight_decay, double lr) {
  if (grads.size() != params.size() || buffer.size() != params.size() ||
      decay_mask.size() != params.size()) {
    throw InvalidInput("sgd_update: parameter, gradient and buffer sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (decay_mask[i]) g += weight_decay * params[i];
    buffer[i] = momentum * buffer[i] + g;
    params[i] -= lr * buffer[i];
  }
}

void sgd_step(MlpParams& params, std::span<const double> grads, OptimizerState& state, double lr) {
  sgd_update(params.values, grads, state.buffer, state.decay_mask, state.momentum,
             state.weight_decay, lr);
  ++params.generation;
}

void LrSchedule::validate() const {
  if (!(initial > 0.0) || !std::isfinite(initial)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (!(decay_factor > 0.0)) throw std::invalid_argument("lr decay factor must be positive");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("lr milestones must be strictly increasing");
    }
  }
}

double LrSchedule::lr_at(std::size_t epoch) const {
  double lr = initial;
  for (std::size_t m : milestones) {
    if (epoch >= m) lr /= decay_factor;
  }
  return lr;
}

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params) {
  params.spec.validate();
  if (params.values.size() != params.spec.num_params()) {
    throw InvalidInput("save_checkpoint: parameter count does not match spec");
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.spec.activation));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.spec.layer_widths.size()));
    for (std::size_t w : params.spec.layer_widths) put_le<std::uint64_t>(os, w);
    put_le<std::uint64_t>(os, params.values.size());
    for (double v : params.values) put_le<double>(os, v);
    if (!os) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw FormatError("not a checkpoint file: " + path.string());
  if (get_le<std::uint32_t>(is) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version");
  }
  MlpParams params;
  params.spec.activation = static_cast<Activation>(get_le<std::uint32_t>(is));
  const auto n_widths = get_le<std::uint32_t>(is);
  if (n_widths > 1024) throw FormatError("checkpoint layer count implausible");
  for (std::uint32_t i = 0; i < n_widths; ++i) {
    params.spec.layer_widths.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(is)));
  }
  try {
    params.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint spec invalid: ") + e.what());
  }
  const auto n_params = get_le<std::uint64_t>(is);
  if (n_params != params.spec.num_params()) {
    throw FormatError("checkpoint parameter count does not match its spec");
  }
  params.values.resize(n_params);
  for (auto& v : params.values) v = get_le<double>(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  return params;
}

}  // namespace nll
