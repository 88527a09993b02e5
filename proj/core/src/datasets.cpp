#include "nll/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "nll/error.hpp"

namespace nll {

void Dataset::validate() const {
  if (num_classes < 2) throw InvalidInput("dataset needs at least 2 classes");
  for (const auto& s : samples) {
    if (s.features.size() != feature_dim) {
      throw InvalidInput("sample " + std::to_string(s.id) + " has " +
                         std::to_string(s.features.size()) + " features, expected " +
                         std::to_string(feature_dim));
    }
    if (s.given_label.index >= num_classes || s.true_label.index >= num_classes) {
      throw InvalidInput("sample " + std::to_string(s.id) + " has an out-of-range label");
    }
  }
}

TrainingView::TrainingView(const Dataset& dataset)
    : features_(dataset.size(), dataset.feature_dim), num_classes_(dataset.num_classes) {
  dataset.validate();
  given_.reserve(dataset.size());
  ids_.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    std::copy(s.features.begin(), s.features.end(), features_.row(i).begin());
    given_.push_back(s.given_label);
    ids_.push_back(s.id);
  }
}

TrainingView TrainingView::with_labels(std::vector<ClassLabel> labels) const {
  if (labels.size() != size()) throw InvalidInput("with_labels: label count mismatch");
  for (ClassLabel l : labels) check_label(l, num_classes_);
  TrainingView out;
  out.features_ = features_;
  out.given_ = std::move(labels);
  out.ids_ = ids_;
  out.num_classes_ = num_classes_;
  return out;
}

namespace {

// Means at sep/sqrt(2) * e_k when the classes fit on distinct axes (pairwise
// distance exactly sep); otherwise on an integer grid scaled by sep.
std::vector<std::vector<double>> blob_means(std::size_t c, std::size_t dim, double sep) {
  std::vector<std::vector<double>> means(c, std::vector<double>(dim, 0.0));
  if (c <= dim) {
    for (std::size_t k = 0; k < c; ++k) means[k][k] = sep / std::sqrt(2.0);
    return means;
  }
  std::size_t side = 1;
  while (true) {
    double cells = 1.0;
    for (std::size_t d = 0; d < dim; ++d) cells *= static_cast<double>(side);
    if (cells >= static_cast<double>(c)) break;
    ++side;
  }
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t rest = k;
    for (std::size_t d = 0; d < dim; ++d) {
      means[k][d] = sep * static_cast<double>(rest % side);
      rest /= side;
    }
  }
  return means;
}

void standardize(Dataset& ds, std::span<const double> mean, std::span<const double> scale) {
  for (auto& s : ds.samples) {
    for (std::size_t d = 0; d < s.features.size(); ++d) {
      s.features[d] = (s.features[d] - mean[d]) / scale[d];
    }
  }
}

}  // namespace

BlobSplit gen_blobs_split(std::size_t num_classes, std::size_t n_train, std::size_t n_test,
                          std::size_t dim, double separation, RandomStream rng) {
  if (num_classes < 2) throw std::invalid_argument("gen_blobs: need at least 2 classes");
  if (n_train < num_classes) throw std::invalid_argument("gen_blobs: need n >= number of classes");
  if (dim == 0) throw std::invalid_argument("gen_blobs: dimension must be positive");
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw std::invalid_argument("gen_blobs: separation must be finite and >= 0");
  }
  const auto means = blob_means(num_classes, dim, separation);
  RandomStream sample_rng = rng.split(stream_tag::kData);

  auto draw = [&](std::size_t first_id, std::size_t count) {
    Dataset ds{num_classes, dim, {}};
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t id = first_id + i;
      RandomStream s = sample_rng.split(id);
      LabeledSample sample;
      sample.id = id;
      sample.true_label = ClassLabel{i % num_classes};
      sample.given_label = sample.true_label;
      sample.features.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        sample.features[d] = means[sample.true_label.index][d] + s.normal();
      }
      ds.samples.push_back(std::move(sample));
    }
    return ds;
  };

  BlobSplit split{draw(0, n_train), draw(n_train, n_test)};

  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (const auto& s : split.train.samples) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += s.features[d];
  }
  for (double& m : mean) m /= static_cast<double>(n_train);
  for (const auto& s : split.train.samples) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double dev = s.features[d] - mean[d];
      scale[d] += dev * dev;
    }
  }
  for (double& v : scale) {
    v = std::sqrt(v / static_cast<double>(n_train));
    if (!(v > 0.0)) v = 1.0;
  }
  standardize(split.train, mean, scale);
  standardize(split.test, mean, scale);
  return split;
}

Dataset gen_blobs(std::size_t num_classes, std::size_t n, std::size_t dim, double separation,
                  RandomStream rng) {
  return gen_blobs_split(num_classes, n, 0, dim, separation, rng).train;
}

CifarData read_cifar10_bin(std::span<const std::filesystem::path> paths,
                           std::optional<std::array<double, 3>> channel_means) {
  CifarData out;
  out.data.num_classes = 10;
  out.data.feature_dim = 3 * kCifarPixels;
  std::array<double, 3> sums{};
  std::uint64_t next_id = 0;
  for (const auto& path : paths) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open CIFAR-10 file: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw FormatError(path.string() + ": length " + std::to_string(bytes.size()) +
                        " is not a multiple of " + std::to_string(kCifarRecordBytes));
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecordBytes) {
      const auto label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) {
        throw FormatError(path.string() + ": label byte " + std::to_string(label) +
                          " at record " + std::to_string(off / kCifarRecordBytes));
      }
      LabeledSample s;
      s.id = next_id++;
      s.true_label = ClassLabel{label};
      s.given_label = s.true_label;
      s.features.resize(3 * kCifarPixels);
      for (std::size_t i = 0; i < 3 * kCifarPixels; ++i) {
        const double v = static_cast<unsigned char>(bytes[off + 1 + i]) / 255.0;
        s.features[i] = v;
        sums[i / kCifarPixels] += v;
      }
      out.data.samples.push_back(std::move(s));
    }
  }
  if (channel_means) {
    out.channel_means = *channel_means;
  } else if (!out.data.samples.empty()) {
    const double count = static_cast<double>(out.data.samples.size() * kCifarPixels);
    for (std::size_t ch = 0; ch < 3; ++ch) out.channel_means[ch] = sums[ch] / count;
  }
  for (auto& s : out.data.samples) {
    for (std::size_t i = 0; i < s.features.size(); ++i) {
      s.features[i] -= out.channel_means[i / kCifarPixels];
    }
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& dataset) {
  os << "id,true_label,given_label";
  for (std::size_t d = 0; d < dataset.feature_dim; ++d) os << ",f" << d;
  os << '\n';
  char buf[64];
  for (const auto& s : dataset.samples) {
    os << s.id << ',' << s.true_label.index << ',' << s.given_label.index;
    for (double v : s.features) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_dataset_csv(os, dataset);
}

namespace {

template <typename T>
T parse_field(std::string_view field, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse '" +
                      std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset read_dataset_csv(std::istream& is, std::optional<std::size_t> num_classes) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "true_label" ||
      header[2] != "given_label") {
    throw FormatError("dataset CSV header must start with id,true_label,given_label");
  }
  Dataset ds;
  ds.feature_dim = header.size() - 3;
  for (std::size_t d = 0; d < ds.feature_dim; ++d) {
    if (header[3 + d] != "f" + std::to_string(d)) {
      throw FormatError("dataset CSV feature column " + std::to_string(d) + " misnamed");
    }
  }
  std::size_t max_label = 0;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    LabeledSample s;
    s.id = parse_field<std::uint64_t>(fields[0], line_no);
    s.true_label = ClassLabel{parse_field<std::size_t>(fields[1], line_no)};
    s.given_label = ClassLabel{parse_field<std::size_t>(fields[2], line_no)};
    s.features.reserve(ds.feature_dim);
    for (std::size_t d = 0; d < ds.feature_dim; ++d) {
      s.features.push_back(parse_field<double>(fields[3 + d], line_no));
    }
    max_label = std::max({max_label, s.true_label.index, s.given_label.index});
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = num_classes.value_or(max_label + 1);
  try {
    ds.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  return ds;
}

Dataset load_dataset_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open dataset CSV: " + path.string());
  return read_dataset_csv(is, num_classes);
}

}  // namespace nll
