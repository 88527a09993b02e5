#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace nll::cli {

namespace {

const std::vector<std::string> kKeys = {
    "out",
    "seed",
    "scale",
    "dataset.source",
    "dataset.classes",
    "dataset.n",
    "dataset.n_test",
    "dataset.dim",
    "dataset.separation",
    "dataset.seed",
    "dataset.train_csv",
    "dataset.test_csv",
    "dataset.cifar_train",
    "dataset.cifar_test",
    "noise.kind",
    "noise.rate",
    "noise.map",
    "noise.groups",
    "train.method",
    "train.epochs",
    "train.nl_epochs",
    "train.selnl_epochs",
    "train.selpl_epochs",
    "train.batch_size",
    "train.lr",
    "train.lr_decay",
    "train.milestones",
    "train.k",
    "train.lambda",
    "train.n_exponent",
    "train.pl_norm",
    "train.momentum",
    "train.weight_decay",
    "train.selpl_threshold",
    "train.hidden",
    "pseudo.enabled",
    "pseudo.epochs",
    "pseudo.batch_size",
    "pseudo.lr",
    "pseudo.lr_decay",
    "pseudo.milestones",
    "pseudo.targets",
    "pseudo.gate",
    "pseudo.momentum",
    "pseudo.weight_decay",
    "pseudo.hidden",
    "eval.bins",
};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, std::filesystem::path>) {
      out += items[i].string();
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

// Typed access to the raw map; every error names the key.
class Reader {
 public:
  Reader(const RawConfig& raw, std::filesystem::path base) : raw_(raw), base_(std::move(base)) {}

  bool has(const std::string& key) const { return raw_.count(key) > 0; }

  const std::string& require(const std::string& key) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
  }

  template <typename T>
  void integer(const std::string& key, T& out, bool required = false) const {
    if (!has(key)) {
      if (required) require(key);
      return;
    }
    const std::string& v = raw_.at(key);
    T parsed{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
      throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    out = parsed;
  }

  void real(const std::string& key, double& out, bool required = false) const {
    if (!has(key)) {
      if (required) require(key);
      return;
    }
    const std::string& v = raw_.at(key);
    double parsed = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
    out = parsed;
  }

  void boolean(const std::string& key, bool& out) const {
    if (!has(key)) return;
    const std::string& v = raw_.at(key);
    if (v == "true" || v == "1") {
      out = true;
    } else if (v == "false" || v == "0") {
      out = false;
    } else {
      throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
    }
  }

  void sizes(const std::string& key, std::vector<std::size_t>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : split_list(raw_.at(key))) {
      std::size_t v = 0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
      if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
        throw ConfigError("key '" + key + "': bad list entry '" + item + "'");
      }
      out.push_back(v);
    }
  }

  std::filesystem::path path(const std::string& value) const {
    std::filesystem::path p(value);
    if (p.is_relative()) p = base_ / p;
    return std::filesystem::absolute(p).lexically_normal();
  }

  void path(const std::string& key, std::filesystem::path& out) const {
    if (has(key) && !raw_.at(key).empty()) out = path(raw_.at(key));
  }

  void paths(const std::string& key, std::vector<std::filesystem::path>& out) const {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : split_list(raw_.at(key))) out.push_back(path(item));
  }

  template <typename E>
  E choice(const std::string& key, const std::vector<std::pair<std::string, E>>& options,
           E fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = raw_.at(key);
    std::string names;
    for (const auto& [name, value] : options) {
      if (name == v) return value;
      names += (names.empty() ? "" : ", ") + name;
    }
    throw ConfigError("key '" + key + "': '" + v + "' is not one of " + names);
  }

 private:
  const RawConfig& raw_;
  std::filesystem::path base_;
};

void require_file(const std::string& key, const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError("key '" + key + "': file not found: " + p.string());
  }
}

}  // namespace

const std::vector<std::string>& known_keys() { return kKeys; }

RawConfig parse_config(const std::string& text) {
  RawConfig out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

RawConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ExperimentConfig resolve(const RawConfig& raw_in, const Overrides& overrides,
                         const std::filesystem::path& base_dir) {
  RawConfig raw = raw_in;
  if (overrides.seed) raw["seed"] = std::to_string(*overrides.seed);
  if (overrides.method) raw["train.method"] = *overrides.method;
  if (overrides.scale) raw["scale"] = *overrides.scale;
  const Reader r(raw, base_dir);

  ExperimentConfig cfg;
  if (overrides.out) {
    cfg.out = std::filesystem::absolute(*overrides.out).lexically_normal();
  } else {
    cfg.out = r.path(r.require("out"));
  }
  r.integer("seed", cfg.seed);
  cfg.scale = r.choice<Scale>("scale", {{"desk", Scale::desk}, {"full", Scale::full}}, Scale::desk);
  cfg.train = cfg.scale == Scale::full ? TrainRunConfig::full() : TrainRunConfig::desk();
  cfg.pseudo = cfg.scale == Scale::full ? PseudoLabelConfig::full() : PseudoLabelConfig::desk();

  cfg.source = r.choice<DataSource>(
      "dataset.source",
      {{"blobs", DataSource::blobs}, {"csv", DataSource::csv}, {"cifar10", DataSource::cifar10}},
      DataSource::blobs);
  r.require("dataset.source");
  const bool blobs = cfg.source == DataSource::blobs;
  if (!blobs) cfg.classes = 0;
  r.integer("dataset.classes", cfg.classes, blobs);
  r.integer("dataset.n", cfg.n_train, blobs);
  r.integer("dataset.n_test", cfg.n_test);
  r.integer("dataset.dim", cfg.dim, blobs);
  r.real("dataset.separation", cfg.separation, blobs);
  r.integer("dataset.seed", cfg.data_seed);
  if (cfg.source == DataSource::csv) {
    r.require("dataset.train_csv");
    r.path("dataset.train_csv", cfg.train_csv);
    r.path("dataset.test_csv", cfg.test_csv);
    require_file("dataset.train_csv", cfg.train_csv);
    if (!cfg.test_csv.empty()) require_file("dataset.test_csv", cfg.test_csv);
  }
  if (cfg.source == DataSource::cifar10) {
    r.require("dataset.cifar_train");
    r.paths("dataset.cifar_train", cfg.cifar_train);
    r.paths("dataset.cifar_test", cfg.cifar_test);
    for (const auto& p : cfg.cifar_train) require_file("dataset.cifar_train", p);
    for (const auto& p : cfg.cifar_test) require_file("dataset.cifar_test", p);
  }

  enum class Kind { none, symmetric, asymmetric, circular };
  const Kind kind = r.choice<Kind>("noise.kind",
                                   {{"none", Kind::none},
                                    {"symmetric", Kind::symmetric},
                                    {"asymmetric", Kind::asymmetric},
                                    {"circular", Kind::circular}},
                                   Kind::none);
  cfg.noise_enabled = kind != Kind::none;
  if (cfg.noise_enabled) r.real("noise.rate", cfg.noise.rate, true);
  switch (kind) {
    case Kind::none:
    case Kind::symmetric: cfg.noise.kind = NoiseKind::symmetric; break;
    case Kind::asymmetric: {
      cfg.noise.kind = NoiseKind::asymmetric_map;
      cfg.noise_map_text = r.require("noise.map");
      try {
        cfg.noise.map = cfg.noise_map_text == "cifar10" ? cifar10_asymmetric_map()
                                                        : parse_class_map(cfg.noise_map_text);
      } catch (const std::exception& e) {
        throw ConfigError("key 'noise.map': " + std::string(e.what()));
      }
      break;
    }
    case Kind::circular: {
      cfg.noise.kind = NoiseKind::circular_groups;
      r.require("noise.groups");
      r.path("noise.groups", cfg.noise_groups_path);
      require_file("noise.groups", cfg.noise_groups_path);
      cfg.noise.groups = load_class_groups(cfg.noise_groups_path);
      break;
    }
  }

  auto& t = cfg.train;
  try {
    t.method = parse_method(r.has("train.method") ? raw.at("train.method") : "jnpl");
  } catch (const std::invalid_argument& e) {
    throw ConfigError("key 'train.method': " + std::string(e.what()));
  }
  r.integer("train.epochs", t.epochs);
  r.integer("train.nl_epochs", t.stages.nl);
  r.integer("train.selnl_epochs", t.stages.selnl);
  r.integer("train.selpl_epochs", t.stages.selpl);
  r.integer("train.batch_size", t.batch_size);
  r.real("train.lr", t.schedule.initial);
  r.real("train.lr_decay", t.schedule.decay_factor);
  r.sizes("train.milestones", t.schedule.milestones);
  r.integer("train.k", t.k_complementary);
  r.real("train.lambda", t.jnpl.lambda);
  r.integer("train.n_exponent", t.jnpl.n_exponent);
  t.jnpl.pl_norm = r.choice<PlPlusNorm>(
      "train.pl_norm", {{"batch", PlPlusNorm::batch}, {"accepted", PlPlusNorm::accepted}},
      t.jnpl.pl_norm);
  r.real("train.momentum", t.momentum);
  r.real("train.weight_decay", t.weight_decay);
  r.real("train.selpl_threshold", t.selpl_threshold);
  r.sizes("train.hidden", t.hidden);
  t.seed = cfg.seed;

  auto& p = cfg.pseudo;
  r.boolean("pseudo.enabled", cfg.pseudo_enabled);
  r.integer("pseudo.epochs", p.epochs);
  r.integer("pseudo.batch_size", p.batch_size);
  r.real("pseudo.lr", p.schedule.initial);
  r.real("pseudo.lr_decay", p.schedule.decay_factor);
  r.sizes("pseudo.milestones", p.schedule.milestones);
  p.targets = r.choice<PseudoTargets>(
      "pseudo.targets", {{"hard", PseudoTargets::hard}, {"soft", PseudoTargets::soft}}, p.targets);
  r.real("pseudo.gate", p.confidence_gate);
  r.real("pseudo.momentum", p.momentum);
  r.real("pseudo.weight_decay", p.weight_decay);
  r.sizes("pseudo.hidden", p.hidden);
  p.seed = cfg.seed;

  r.integer("eval.bins", cfg.eval_bins);

  try {
    t.validate();
    p.validate();
    if (cfg.eval_bins < 2) throw std::invalid_argument("eval.bins must be >= 2");
    if (t.k_complementary + 1 > cfg.classes && cfg.classes > 0) {
      throw std::invalid_argument("train.k must be at most dataset.classes - 1");
    }
    if (cfg.noise_enabled && cfg.classes > 0) cfg.noise.validate(cfg.classes);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

std::string ExperimentConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["out"] = out.string();
  kv["seed"] = std::to_string(seed);
  kv["scale"] = scale == Scale::full ? "full" : "desk";
  const char* src = source == DataSource::blobs ? "blobs" : source == DataSource::csv ? "csv" : "cifar10";
  kv["dataset.source"] = src;
  kv["dataset.classes"] = std::to_string(classes);
  kv["dataset.n"] = std::to_string(n_train);
  kv["dataset.n_test"] = std::to_string(n_test);
  kv["dataset.dim"] = std::to_string(dim);
  kv["dataset.separation"] = fmt_double(separation);
  kv["dataset.seed"] = std::to_string(data_seed);
  if (source == DataSource::csv) {
    kv["dataset.train_csv"] = train_csv.string();
    kv["dataset.test_csv"] = test_csv.string();
  }
  if (source == DataSource::cifar10) {
    kv["dataset.cifar_train"] = join(cifar_train);
    kv["dataset.cifar_test"] = join(cifar_test);
  }
  if (!noise_enabled) {
    kv["noise.kind"] = "none";
  } else {
    kv["noise.rate"] = fmt_double(noise.rate);
    switch (noise.kind) {
      case NoiseKind::symmetric: kv["noise.kind"] = "symmetric"; break;
      case NoiseKind::asymmetric_map:
        kv["noise.kind"] = "asymmetric";
        kv["noise.map"] = noise_map_text;
        break;
      case NoiseKind::circular_groups:
        kv["noise.kind"] = "circular";
        kv["noise.groups"] = noise_groups_path.string();
        break;
    }
  }
  kv["train.method"] = std::string(to_string(train.method));
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.nl_epochs"] = std::to_string(train.stages.nl);
  kv["train.selnl_epochs"] = std::to_string(train.stages.selnl);
  kv["train.selpl_epochs"] = std::to_string(train.stages.selpl);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.lr"] = fmt_double(train.schedule.initial);
  kv["train.lr_decay"] = fmt_double(train.schedule.decay_factor);
  kv["train.milestones"] = join(train.schedule.milestones);
  kv["train.k"] = std::to_string(train.k_complementary);
  kv["train.lambda"] = fmt_double(train.jnpl.lambda);
  kv["train.n_exponent"] = std::to_string(train.jnpl.n_exponent);
  kv["train.pl_norm"] = train.jnpl.pl_norm == PlPlusNorm::batch ? "batch" : "accepted";
  kv["train.momentum"] = fmt_double(train.momentum);
  kv["train.weight_decay"] = fmt_double(train.weight_decay);
  kv["train.selpl_threshold"] = fmt_double(train.selpl_threshold);
  kv["train.hidden"] = join(train.hidden);
  kv["pseudo.enabled"] = pseudo_enabled ? "true" : "false";
  kv["pseudo.epochs"] = std::to_string(pseudo.epochs);
  kv["pseudo.batch_size"] = std::to_string(pseudo.batch_size);
  kv["pseudo.lr"] = fmt_double(pseudo.schedule.initial);
  kv["pseudo.lr_decay"] = fmt_double(pseudo.schedule.decay_factor);
  kv["pseudo.milestones"] = join(pseudo.schedule.milestones);
  kv["pseudo.targets"] = pseudo.targets == PseudoTargets::soft ? "soft" : "hard";
  kv["pseudo.gate"] = fmt_double(pseudo.confidence_gate);
  kv["pseudo.momentum"] = fmt_double(pseudo.momentum);
  kv["pseudo.weight_decay"] = fmt_double(pseudo.weight_decay);
  kv["pseudo.hidden"] = join(pseudo.hidden);
  kv["eval.bins"] = std::to_string(eval_bins);

  std::string text;
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  return text;
}

}  // namespace nll::cli
