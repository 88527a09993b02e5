#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nll/datasets.hpp"
#include "nll/error.hpp"
#include "nll/eval.hpp"
#include "nll/losses.hpp"
#include "nll/model.hpp"
#include "oracles.hpp"

using namespace nll;
namespace fs = std::filesystem;

namespace {

RowMatrix random_features(RandomStream& rng, std::size_t rows, std::size_t cols) {
  RowMatrix x(rows, cols);
  for (auto& v : x.data) v = rng.normal();
  return x;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nll_unit_model";
  fs::create_directories(dir);
  return dir / name;
}

// Per-sample loss and logit gradient at the given logits; detached factors
// are taken from `frozen`, the logits at the unperturbed parameters.
enum class Kind { pl, nl, nlplus, plplus };

struct Sample {
  ClassLabel y;
  ComplementaryLabelSet ybar;
};

double frozen_weight(Kind kind, const Sample& s, std::span<const double> frozen) {
  const ProbVector p = softmax(frozen);
  if (kind == Kind::nlplus) return p.mass_excluding(s.ybar.labels()[0].index);
  if (kind == Kind::plplus) return plplus_weight(p[s.y.index], 3);
  return 1.0;
}

double plain_value(Kind kind, const Sample& s, const Logits& z) {
  if (kind == Kind::pl || kind == Kind::plplus) return pl_loss(z, s.y).value;
  return nl_loss(z, s.ybar).value;
}

std::vector<double> library_grad(Kind kind, const Sample& s, const Logits& z) {
  switch (kind) {
    case Kind::pl: return pl_loss(z, s.y).grad;
    case Kind::nl: return nl_loss(z, s.ybar).grad;
    case Kind::nlplus: return nlplus_loss(z, s.ybar).grad;
    case Kind::plplus: return plplus_loss(z, s.y, JnplConfig{}).grad;
  }
  return {};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("spec validation and parameter count") {
    CHECK(default_mlp_spec(8, 4).layer_widths == std::vector<std::size_t>{8, 64, 64, 4});
    CHECK(default_mlp_spec(8, 4).num_params() == 8 * 64 + 64 + 64 * 64 + 64 + 64 * 4 + 4);
    CHECK_THROWS_AS((MlpSpec{{3, 2}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((MlpSpec{{3, 0, 2}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((MlpSpec{{3, 4, 1}}.validate()), std::invalid_argument);
    const auto slices = layer_slices(MlpSpec{{3, 4, 2}});
    REQUIRE(slices.size() == 2);
    CHECK(slices[0].bias_offset == 12);
    CHECK(slices[1].weight_offset == 16);
    CHECK(slices[1].bias_offset == 24);
  }

  TEST_CASE("initialization range and zero biases") {
    const MlpSpec spec{{10, 20, 5}};
    const MlpParams p = init_params(spec, RandomStream(3));
    const auto slices = layer_slices(spec);
    for (const auto& s : slices) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
      for (std::size_t i = 0; i < s.in * s.out; ++i) REQUIRE(std::abs(p.values[s.weight_offset + i]) <= bound);
      for (std::size_t i = 0; i < s.out; ++i) REQUIRE(p.values[s.bias_offset + i] == 0.0);
    }
    CHECK(init_params(spec, RandomStream(3)).values == p.values);
    CHECK(init_params(spec, RandomStream(4)).values != p.values);
  }

  TEST_CASE("all-zero parameters give the uniform distribution") {
    MlpParams p{MlpSpec{{4, 6, 5}}, {}};
    p.values.assign(p.spec.num_params(), 0.0);
    RandomStream rng(1);
    const RowMatrix logits = predict_logits(p, random_features(rng, 7, 4));
    for (std::size_t i = 0; i < logits.rows; ++i) {
      const ProbVector q = softmax(logits.row(i));
      for (double v : q.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    }
  }

  TEST_CASE("last-layer weight gradient is the outer product of hidden activations and logit gradients") {
    const MlpSpec spec{{3, 4, 2}};
    const MlpParams p = init_params(spec, RandomStream(2));
    RandomStream rng(5);
    const RowMatrix x = random_features(rng, 1, 3);
    const ForwardResult f = forward(p, x);
    RowMatrix g(1, 2);
    g(0, 0) = 0.3;
    g(0, 1) = -0.7;
    const auto grad = backward(p, f.cache, g);
    const auto last = layer_slices(spec)[1];
    const RowMatrix& h = f.cache.activations[1];
    for (std::size_t o = 0; o < 2; ++o) {
      for (std::size_t i = 0; i < 4; ++i) CHECK(grad[last.weight_offset + o * 4 + i] == doctest::Approx(g(0, o) * h(0, i)));
      CHECK(grad[last.bias_offset + o] == doctest::Approx(g(0, o)));
    }
  }

  TEST_CASE("stale cache and shape errors") {
    MlpParams p = init_params(MlpSpec{{3, 4, 2}}, RandomStream(2));
    RandomStream rng(5);
    const RowMatrix x = random_features(rng, 2, 3);
    const ForwardResult f = forward(p, x);
    RowMatrix g(2, 2);
    OptimizerState st = OptimizerState::for_params(p);
    sgd_step(p, std::vector<double>(p.values.size(), 0.0), st, 0.1);
    CHECK_THROWS_AS(backward(p, f.cache, g), std::logic_error);
    const ForwardResult f2 = forward(p, x);
    CHECK_THROWS_AS(backward(p, f2.cache, RowMatrix(3, 2)), InvalidInput);
    CHECK_THROWS_AS(forward(p, RowMatrix(2, 4)), InvalidInput);
  }

  TEST_CASE("parameter gradients match finite differences for every loss") {
    const MlpSpec spec{{4, 5, 3}};  // 43 parameters
    const MlpParams base = init_params(spec, RandomStream(11));
    RandomStream rng(13);
    const RowMatrix x = random_features(rng, 6, 4);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const ClassLabel y{rng.below(3)};
      samples.push_back({y, sample_complementary(y, 3, 1, rng)});
    }
    for (Kind kind : {Kind::pl, Kind::nl, Kind::nlplus, Kind::plplus}) {
      const ForwardResult f = forward(base, x);
      std::vector<double> weights;
      RowMatrix g(x.rows, 3);
      for (std::size_t i = 0; i < x.rows; ++i) {
        weights.push_back(frozen_weight(kind, samples[i], f.logits.row(i)));
        const auto gi = library_grad(kind, samples[i], Logits(f.logits.row(i)));
        std::copy(gi.begin(), gi.end(), g.row(i).begin());
      }
      const auto analytic = backward(base, f.cache, g);
      auto objective = [&](const MlpParams& p) {
        const RowMatrix z = predict_logits(p, x);
        long double total = 0.0L;
        for (std::size_t i = 0; i < x.rows; ++i) total += weights[i] * plain_value(kind, samples[i], Logits(z.row(i)));
        return total;
      };
      oracle::Vec fd(base.values.size());
      const double h = 1e-5;
      for (std::size_t j = 0; j < base.values.size(); ++j) {
        MlpParams up = base, down = base;
        up.values[j] += h;
        down.values[j] -= h;
        fd[j] = (objective(up) - objective(down)) / (2.0L * h);
      }
      INFO("loss kind " << static_cast<int>(kind));
      CHECK(oracle::relative_error(analytic, fd) <= 1e-5);
    }
  }

  TEST_CASE("sgd update arithmetic") {
    std::vector<double> params{1.0, 1.0};
    std::vector<double> buffer{0.0, 0.0};
    const std::vector<double> grads{0.5, 0.5};
    const std::vector<bool> mask{true, false};
    sgd_update(params, grads, buffer, mask, 0.9, 1e-4, 0.1);
    CHECK(buffer[0] == doctest::Approx(0.5001).epsilon(1e-15));
    CHECK(params[0] == doctest::Approx(0.94999).epsilon(1e-15));
    CHECK(params[1] == doctest::Approx(0.95).epsilon(1e-15));
    sgd_update(params, grads, buffer, mask, 0.9, 1e-4, 0.1);
    CHECK(buffer[0] == doctest::Approx(0.9 * 0.5001 + 0.5 + 1e-4 * 0.94999).epsilon(1e-15));
    CHECK(params[0] == doctest::Approx(0.8549715001).epsilon(1e-14));
    CHECK(params[1] == doctest::Approx(0.95 - 0.1 * 0.95).epsilon(1e-15));
    std::vector<double> short_grads{0.1};
    CHECK_THROWS_AS(sgd_update(params, short_grads, buffer, mask, 0.9, 1e-4, 0.1), InvalidInput);
  }

  TEST_CASE("decay mask covers weights only") {
    const MlpParams p = init_params(MlpSpec{{3, 4, 2}}, RandomStream(1));
    const OptimizerState st = OptimizerState::for_params(p);
    std::size_t decayed = 0;
    for (bool b : st.decay_mask) decayed += b;
    CHECK(decayed == 3 * 4 + 4 * 2);
    CHECK(st.buffer == std::vector<double>(p.values.size(), 0.0));
  }

  TEST_CASE("training steps are deterministic") {
    const Dataset d = gen_blobs(3, 60, 4, 3.0, RandomStream(8));
    const TrainingView view(d);
    auto run = [&] {
      MlpParams p = init_params(MlpSpec{{4, 8, 3}}, RandomStream(9));
      OptimizerState st = OptimizerState::for_params(p);
      for (int step = 0; step < 100; ++step) {
        const ForwardResult f = forward(p, view.features());
        RowMatrix g(view.size(), 3);
        for (std::size_t i = 0; i < view.size(); ++i) {
          const auto gi = pl_loss(Logits(f.logits.row(i)), view.given_labels()[i]).grad;
          for (std::size_t j = 0; j < 3; ++j) g(i, j) = gi[j] / view.size();
        }
        sgd_step(p, backward(p, f.cache, g), st, 0.05);
      }
      return p.values;
    };
    CHECK(run() == run());
  }

  TEST_CASE("separable two-class problem is fit exactly with cross-entropy") {
    const Dataset d = gen_blobs(2, 200, 2, 10.0, RandomStream(21));
    const TrainingView view(d);
    MlpParams p = init_params(MlpSpec{{2, 16, 2}}, RandomStream(22));
    OptimizerState st = OptimizerState::for_params(p);
    int reached = -1;
    for (int step = 0; step < 500; ++step) {
      const ForwardResult f = forward(p, view.features());
      if (accuracy(f.logits, view.given_labels()) == 1.0) {
        reached = step;
        break;
      }
      RowMatrix g(view.size(), 2);
      for (std::size_t i = 0; i < view.size(); ++i) {
        const auto gi = pl_loss(Logits(f.logits.row(i)), view.given_labels()[i]).grad;
        for (std::size_t j = 0; j < 2; ++j) g(i, j) = gi[j] / view.size();
      }
      sgd_step(p, backward(p, f.cache, g), st, 0.1);
    }
    CHECK(reached >= 0);
  }

  TEST_CASE("learning-rate schedule") {
    const LrSchedule s{0.1, 10.0, {40, 60}};
    CHECK(s.lr_at(0) == 0.1);
    CHECK(s.lr_at(39) == 0.1);
    CHECK(s.lr_at(40) == doctest::Approx(0.01));
    CHECK(s.lr_at(60) == doctest::Approx(0.001));
    CHECK(LrSchedule{1e-2, 10.0, {160}}.lr_at(199) == doctest::Approx(1e-3));
    CHECK_THROWS_AS((LrSchedule{0.0, 10.0, {}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((LrSchedule{0.1, 10.0, {60, 40}}.validate()), std::invalid_argument);
  }

  TEST_CASE("checkpoint round trip is bitwise") {
    const MlpParams p = init_params(MlpSpec{{5, 7, 7, 3}}, RandomStream(4));
    const fs::path path = temp_path("roundtrip.ckpt");
    save_checkpoint(path, p);
    const MlpParams q = load_checkpoint(path);
    CHECK(q.spec == p.spec);
    CHECK(q.values == p.values);
    RandomStream rng(6);
    const RowMatrix x = random_features(rng, 4, 5);
    CHECK(predict_logits(q, x).data == predict_logits(p, x).data);
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    const MlpParams p = init_params(MlpSpec{{2, 3, 2}}, RandomStream(4));
    const fs::path good = temp_path("good.ckpt");
    save_checkpoint(good, p);
    std::ifstream in(good, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto write = [&](const std::string& name, const std::string& content) {
      const fs::path path = temp_path(name);
      std::ofstream(path, std::ios::binary) << content;
      return path;
    };
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::string bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", bad_magic)), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write("version.ckpt", bad_version)), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write("short.ckpt", bytes.substr(0, bytes.size() - 3))), FormatError);
    CHECK_THROWS_AS(load_checkpoint(write("long.ckpt", bytes + "x")), FormatError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), FormatError);
  }
}
