#include "commands.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "nll/error.hpp"
#include "nll/eval.hpp"

namespace nll::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void prepare_dir(const fs::path& dir, const RunOptions& opts) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opts.force) {
      throw OutputExists("output " + dir.string() + " already exists (use --force to overwrite)");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void require_input(const fs::path& p, const char* hint) {
  if (!fs::is_regular_file(p)) {
    throw ConfigError("missing input " + p.string() + " (" + hint + ")");
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void write_text(const fs::path& p, const std::string& text) {
  auto os = open_out(p);
  os << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

// The config copy and manifest that make a stage directory reproducible.
void write_manifest(const fs::path& dir, const char* command, const ExperimentConfig& cfg,
                    const std::vector<fs::path>& inputs, json extra) {
  const std::string text = cfg.canonical_text();
  write_text(dir / "config.txt", text);
  json m;
  m["tool"] = "nll";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["dataset_seed"] = cfg.data_seed;
  m["config"] = text;
  json in = json::object();
  for (const auto& p : inputs) {
    if (fs::exists(p)) in[p.parent_path().filename().string() + "/" + p.filename().string()] = sha256_file(p);
  }
  m["inputs"] = in;
  json out = json::object();
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) out[p.filename().string()] = sha256_file(p);
  m["outputs"] = out;
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(dir / "manifest.json", m);
}

std::size_t dataset_classes(const RunLayout& layout) {
  const fs::path manifest = layout.dataset() / "manifest.json";
  require_input(manifest, "run gen first");
  return read_json(manifest).at("num_classes").get<std::size_t>();
}

NoisyDataset as_noisy(Dataset data) {
  NoisyDataset out;
  out.clean_mask.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    out.clean_mask[i] = s.given_label == s.true_label;
    if (!out.clean_mask[i]) out.flip_log.push_back({s.id, s.true_label, s.given_label});
  }
  out.data = std::move(data);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
T parse_cell(const std::string& cell, const fs::path& file, std::size_t lineno) {
  T v{};
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw FormatError(file.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
  }
  return v;
}

struct VerdictRow {
  std::uint64_t id = 0;
  double clean_score = 0.0;
  bool predicted_clean = false;
  double comp_max = 0.0;
};

std::vector<VerdictRow> read_verdicts(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string line;
  if (!std::getline(in, line) ||
      line != "sample_id,given,true,clean_score,is_clean_predicted,pseudo_label,p_comp_max") {
    throw FormatError(p.string() + ": unexpected header");
  }
  std::vector<VerdictRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 7) throw FormatError(p.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    VerdictRow r;
    r.id = parse_cell<std::uint64_t>(cells[0], p, lineno);
    r.clean_score = parse_cell<double>(cells[3], p, lineno);
    r.predicted_clean = parse_cell<int>(cells[4], p, lineno) != 0;
    r.comp_max = parse_cell<double>(cells[6], p, lineno);
    rows.push_back(r);
  }
  return rows;
}

std::set<std::uint64_t> read_flipped_ids(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,true,given") {
    throw FormatError(p.string() + ": unexpected header");
  }
  std::set<std::uint64_t> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw FormatError(p.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    ids.insert(parse_cell<std::uint64_t>(cells[0], p, lineno));
  }
  return ids;
}

json noise_kind_json(const ExperimentConfig& cfg) {
  if (!cfg.noise_enabled) return "none";
  switch (cfg.noise.kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric_map: return "asymmetric";
    case NoiseKind::circular_groups: return "circular";
  }
  return "unknown";
}

json last_metrics(const fs::path& ndjson) {
  std::ifstream in(ndjson, std::ios::binary);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return last.empty() ? json(nullptr) : json::parse(last);
}

// Trains one stage, streaming metrics and a per-epoch checkpoint so that a
// numeric failure leaves the last good model on disk.
template <typename Fn>
TrainResult run_stage(const fs::path& dir, const MetricsTracker& tracker, Fn&& fn) {
  auto metrics = open_out(dir / "metrics.ndjson");
  const fs::path ckpt = dir / "model.ckpt";
  const EpochObserver observer = [&](const EpochStats& stats, const MlpParams& params) {
    metrics << to_ndjson(tracker.record(stats, params)) << '\n';
    metrics.flush();
    save_checkpoint(ckpt, params);
  };
  TrainResult result = fn(observer);
  save_checkpoint(ckpt, result.params);
  return result;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char two[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

void cmd_gen(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const RunLayout layout{cfg.out};
  Dataset train, test;
  switch (cfg.source) {
    case DataSource::blobs: {
      try {
        auto split = gen_blobs_split(cfg.classes, cfg.n_train, cfg.n_test, cfg.dim, cfg.separation,
                                     RandomStream(cfg.data_seed));
        train = std::move(split.train);
        test = std::move(split.test);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
      }
      break;
    }
    case DataSource::csv: {
      std::optional<std::size_t> c;
      if (cfg.classes > 0) c = cfg.classes;
      train = load_dataset_csv(cfg.train_csv, c);
      if (!cfg.test_csv.empty()) test = load_dataset_csv(cfg.test_csv, train.num_classes);
      break;
    }
    case DataSource::cifar10: {
      auto tr = read_cifar10_bin(cfg.cifar_train);
      train = std::move(tr.data);
      if (!cfg.cifar_test.empty()) test = read_cifar10_bin(cfg.cifar_test, tr.channel_means).data;
      break;
    }
  }
  const fs::path dir = layout.dataset();
  prepare_dir(dir, opts);
  save_dataset_csv(dir / "train.csv", train);
  if (test.size() > 0) save_dataset_csv(dir / "test.csv", test);
  json extra;
  extra["num_classes"] = train.num_classes;
  extra["feature_dim"] = train.feature_dim;
  extra["n_train"] = train.size();
  extra["n_test"] = test.size();
  write_manifest(dir, "gen", cfg, {}, extra);
  log << "gen: " << train.size() << " train / " << test.size() << " test samples -> " << dir.string()
      << '\n';
}

void cmd_corrupt(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const RunLayout layout{cfg.out};
  const fs::path src = layout.dataset() / "train.csv";
  require_input(src, "run gen first");
  const std::size_t c = dataset_classes(layout);
  const Dataset clean = load_dataset_csv(src, c);
  NoisyDataset noisy;
  if (cfg.noise_enabled) {
    try {
      cfg.noise.validate(c);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("noise: ") + e.what());
    }
    noisy = inject_noise(clean, cfg.noise, RandomStream(cfg.seed).split(stream_tag::kNoise));
  } else {
    noisy = without_noise(clean);
  }

  const fs::path dir = layout.noisy();
  prepare_dir(dir, opts);
  save_dataset_csv(dir / "train.csv", noisy.data);
  {
    auto os = open_out(dir / "flips.csv");
    write_flip_log_csv(os, noisy.flip_log);
  }
  std::vector<std::size_t> per_class(c, 0), flipped(c, 0);
  for (std::size_t i = 0; i < noisy.data.size(); ++i) {
    const std::size_t t = noisy.data.samples[i].true_label.index;
    ++per_class[t];
    if (!noisy.clean_mask[i]) ++flipped[t];
  }
  json summary;
  summary["kind"] = noise_kind_json(cfg);
  summary["rate"] = cfg.noise_enabled ? cfg.noise.rate : 0.0;
  summary["n_samples"] = noisy.data.size();
  summary["n_flipped"] = noisy.flip_log.size();
  summary["realized_rate"] = noisy.realized_rate();
  json classes = json::array();
  for (std::size_t k = 0; k < c; ++k) {
    classes.push_back({{"class", k}, {"n", per_class[k]}, {"flipped", flipped[k]}});
  }
  summary["per_class"] = classes;
  write_json(dir / "noise_summary.json", summary);
  write_manifest(dir, "corrupt", cfg, {src}, json{{"realized_rate", noisy.realized_rate()}});
  log << "corrupt: " << noisy.flip_log.size() << " of " << noisy.data.size()
      << " labels flipped (realized rate " << noisy.realized_rate() << ")\n";
}

void cmd_train(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const RunLayout layout{cfg.out};
  const fs::path src = layout.noisy() / "train.csv";
  require_input(src, "run corrupt first");
  const std::size_t c = dataset_classes(layout);
  const NoisyDataset noisy = as_noisy(load_dataset_csv(src, c));
  const fs::path test_path = layout.dataset() / "test.csv";
  Dataset test;
  if (fs::exists(test_path)) test = load_dataset_csv(test_path, c);
  if (cfg.train.k_complementary + 1 > c) {
    throw ConfigError("train.k must be at most num_classes - 1 (" + std::to_string(c - 1) + ")");
  }

  const TrainingView view(noisy.data);
  std::vector<ClassLabel> given, truth;
  for (const auto& s : noisy.data.samples) {
    given.push_back(s.given_label);
    truth.push_back(s.true_label);
  }

  const fs::path dir = layout.train();
  prepare_dir(dir, opts);
  if (cfg.pseudo_enabled) prepare_dir(layout.pseudo(), opts);
  const MetricsTracker tracker(noisy, &test, std::string(to_string(cfg.train.method)));
  const TrainResult result = run_stage(dir, tracker, [&](const EpochObserver& obs) {
    return train(view, cfg.train, obs);
  });
  {
    auto os = open_out(dir / "verdicts.csv");
    write_verdicts_csv(os, result.verdicts, given, std::span<const ClassLabel>(truth));
  }
  const json final_metrics = last_metrics(dir / "metrics.ndjson");
  write_manifest(dir, "train", cfg, {src, test_path}, json{{"final", final_metrics}});
  log << "train: " << to_string(cfg.train.method) << ", " << result.epochs.size() << " epochs";
  if (final_metrics.is_object() && !final_metrics["test_acc"].is_null()) {
    log << ", test accuracy " << final_metrics["test_acc"].get<double>();
  }
  log << '\n';

  if (!cfg.pseudo_enabled) return;
  const fs::path pdir = layout.pseudo();
  const MetricsTracker ptracker(noisy, &test, "pseudo");
  const TrainResult pseudo = run_stage(pdir, ptracker, [&](const EpochObserver& obs) {
    return pseudo_label_train(view, result.verdicts, cfg.pseudo, obs);
  });
  const json pfinal = last_metrics(pdir / "metrics.ndjson");
  write_manifest(pdir, "train", cfg, {src, test_path, dir / "verdicts.csv"}, json{{"final", pfinal}});
  log << "pseudo: " << pseudo.epochs.size() << " epochs";
  if (pfinal.is_object() && !pfinal["test_acc"].is_null()) {
    log << ", test accuracy " << pfinal["test_acc"].get<double>();
  }
  log << '\n';
}

void cmd_eval(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const RunLayout layout{cfg.out};
  const fs::path verdicts_path = layout.train() / "verdicts.csv";
  const fs::path flips_path = layout.noisy() / "flips.csv";
  require_input(verdicts_path, "run train first");
  require_input(flips_path, "run corrupt first");
  const auto verdicts = read_verdicts(verdicts_path);
  const auto flipped = read_flipped_ids(flips_path);

  std::vector<FilterRecord> records;
  records.reserve(verdicts.size());
  std::size_t pred_clean = 0, pred_clean_hit = 0, n_clean = 0;
  for (const auto& v : verdicts) {
    const bool clean = flipped.count(v.id) == 0;
    records.push_back({v.id, v.clean_score, v.comp_max, clean});
    n_clean += clean;
    if (v.predicted_clean) {
      ++pred_clean;
      pred_clean_hit += clean;
    }
  }

  const fs::path dir = layout.eval();
  prepare_dir(dir, opts);
  const auto hist = export_distribution_histogram(records, cfg.eval_bins);
  {
    auto os = open_out(dir / "histogram.csv");
    write_histogram_csv(os, hist);
  }
  const ApResult ap = evaluate_filtering(records);
  json j;
  j["ap_clean_positive"] = ap.ap_clean_positive;
  j["ap_noisy_positive"] = ap.ap_noisy_positive;
  j["n_clean"] = ap.n_clean;
  j["n_noisy"] = ap.n_noisy;
  j["n_predicted_clean"] = pred_clean;
  j["filter_precision"] = pred_clean ? json(static_cast<double>(pred_clean_hit) / static_cast<double>(pred_clean))
                                     : json(nullptr);
  j["filter_recall"] = n_clean ? json(static_cast<double>(pred_clean_hit) / static_cast<double>(n_clean))
                               : json(nullptr);
  write_json(dir / "ap.json", j);
  write_manifest(dir, "eval", cfg, {verdicts_path, flips_path}, json::object());
  log << "eval: AP clean-positive " << ap.ap_clean_positive << ", noisy-positive "
      << ap.ap_noisy_positive << " (" << ap.n_clean << " clean, " << ap.n_noisy << " noisy)\n";
}

void cmd_pipeline(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  cmd_gen(cfg, opts, log);
  cmd_corrupt(cfg, opts, log);
  cmd_train(cfg, opts, log);
  cmd_eval(cfg, opts, log);
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("NLL_THREADS")) {
    std::size_t n = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec == std::errc{} && res.ptr == s.data() + s.size() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void cmd_pipeline_seeds(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                        const RunOptions& opts, std::size_t threads, std::ostream& log) {
  std::mutex mu;
  std::exception_ptr first_error;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next == seeds.size()) return;
        i = next++;
      }
      ExperimentConfig run = cfg;
      run.seed = seeds[i];
      run.train.seed = seeds[i];
      run.pseudo.seed = seeds[i];
      run.out = cfg.out / ("seed-" + std::to_string(seeds[i]));
      std::ostringstream buf;
      std::exception_ptr err;
      try {
        cmd_pipeline(run, opts, buf);
      } catch (...) {
        err = std::current_exception();
      }
      std::lock_guard lock(mu);
      std::istringstream lines(buf.str());
      for (std::string line; std::getline(lines, line);) log << "[seed " << seeds[i] << "] " << line << '\n';
      if (err && !first_error) first_error = err;
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, seeds.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy-label learning toolkit: NL+/PL+ training, filtering and evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool force = false;
  std::string method;
  std::string scale;
  std::vector<std::uint64_t> seeds;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value experiment config")->required();
    sub->add_option("--out", out_dir, "run directory (overrides `out`)");
    sub->add_option("--seed", seed, "run seed (overrides `seed`)");
    sub->add_flag("--force", force, "overwrite existing outputs");
    sub->add_option("--method", method, "training method")
        ->check(CLI::IsMember({"jnpl", "nlplus", "nlnl", "pl"}));
    sub->add_option("--scale", scale, "schedule preset")->check(CLI::IsMember({"desk", "full"}));
  };
  auto* gen = app.add_subcommand("gen", "generate or import the dataset");
  auto* corrupt = app.add_subcommand("corrupt", "inject label noise");
  auto* train_cmd = app.add_subcommand("train", "train, emit metrics, verdicts and checkpoint");
  auto* eval = app.add_subcommand("eval", "filtering AP and distribution histograms");
  auto* pipeline = app.add_subcommand("pipeline", "gen, corrupt, train and eval in one run");
  for (auto* sub : {gen, corrupt, train_cmd, eval, pipeline}) add_common(sub);
  pipeline->add_option("--seeds", seeds, "comma-separated seeds, one run directory each")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Overrides ov;
    if (!out_dir.empty()) ov.out = fs::path(out_dir);
    if (gen->count("--seed") + corrupt->count("--seed") + train_cmd->count("--seed") +
        eval->count("--seed") + pipeline->count("--seed")) {
      ov.seed = seed;
    }
    if (!method.empty()) ov.method = method;
    if (!scale.empty()) ov.scale = scale;
    const fs::path cfg_file = fs::absolute(config_path);
    const ExperimentConfig cfg = resolve(load_config(cfg_file), ov, cfg_file.parent_path());
    const RunOptions opts{force};
    if (*gen) cmd_gen(cfg, opts, out);
    if (*corrupt) cmd_corrupt(cfg, opts, out);
    if (*train_cmd) cmd_train(cfg, opts, out);
    if (*eval) cmd_eval(cfg, opts, out);
    if (*pipeline) {
      if (seeds.empty()) {
        cmd_pipeline(cfg, opts, out);
      } else {
        cmd_pipeline_seeds(cfg, seeds, opts, thread_budget(), out);
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const UndefinedMetric& e) {
    err << "undefined metric: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace nll::cli
