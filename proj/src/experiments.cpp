#include "limg/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

#include "limg/digest.hpp"
#include "limg/rng.hpp"

namespace limg::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<PresetName, std::string_view>, 8> kPresetNames = {{
    {PresetName::BaseL1DimSweep, "BaseL1DimSweep"},
    {PresetName::NSweep, "NSweep"},
    {PresetName::TypeComparison, "TypeComparison"},
    {PresetName::MultiInstanceL2, "MultiInstanceL2"},
    {PresetName::UnseenL3, "UnseenL3"},
    {PresetName::UnseenL3Noisy, "UnseenL3Noisy"},
    {PresetName::GaussianNoiseL1, "GaussianNoiseL1"},
    {PresetName::DiscreteL1, "DiscreteL1"},
}};

const std::set<std::string> kOverrideKeys = {
    "dim",    "n",     "type",  "frame", "domain",   "train", "val",        "test",  "instances", "unseen",
    "epochs", "lr",    "momentum", "batch", "model", "activation", "input", "runs",  "sweep",
};

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int to_int(const std::string& key, const std::string& text) {
  int v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("override " + key + ": '" + text + "' is not an integer");
  return v;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("override " + key + ": '" + text + "' is not a number");
}

std::vector<int> to_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(to_int(key, piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Enum parsers throw their own exception types; report them all as config errors.
template <typename F>
auto parse_or_config_error(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("override " + key + ": " + e.what());
  }
}

void apply_overrides(PresetPlan& p, const std::map<std::string, std::string>& ov) {
  for (const auto& [key, value] : ov) {
    if (!kOverrideKeys.contains(key)) throw ConfigError("unknown override key '" + key + "'");
    if (key == "dim") p.data.encoder.dim = to_int(key, value);
    else if (key == "n") p.data.encoder.sample_size = to_int(key, value);
    else if (key == "type") p.data.encoder.type = parse_or_config_error(key, [&] { return parse_image_type(value); });
    else if (key == "frame") p.data.encoder.frame_size = to_int(key, value);
    else if (key == "domain") p.data.encoder.domain_map = parse_or_config_error(key, [&] { return parse_domain_map(value); });
    else if (key == "train") p.data.per_class.train = to_int(key, value);
    else if (key == "val") p.data.per_class.val = to_int(key, value);
    else if (key == "test") p.data.per_class.test = to_int(key, value);
    else if (key == "instances") p.data.instances_per_function = to_int(key, value);
    else if (key == "unseen") p.data.unseen_instances_per_function = to_int(key, value);
    else if (key == "epochs") p.train.epochs = to_int(key, value);
    else if (key == "lr") p.train.learning_rate = to_double(key, value);
    else if (key == "momentum") p.train.momentum = to_double(key, value);
    else if (key == "batch") p.train.batch_size = to_int(key, value);
    else if (key == "model") p.model = parse_or_config_error(key, [&] { return nn::parse_preset(value); });
    else if (key == "activation") p.activation = parse_or_config_error(key, [&] { return nn::parse_activation(value); });
    else if (key == "input") p.train.input_mode = parse_or_config_error(key, [&] { return parse_pixel_mode(value); });
    else if (key == "runs") p.runs = to_int(key, value);
    else if (key == "sweep") {
      if (p.sweep_parameter.empty()) throw ConfigError("preset " + std::string(to_string(p.name)) + " has no sweep");
      p.sweep = to_int_list(key, value);
    }
  }
}

// Datasets a plan builds: one per sweep value, one per image type, or one.
std::size_t dataset_count(const PresetPlan& p) {
  switch (p.name) {
    case PresetName::BaseL1DimSweep:
    case PresetName::NSweep:
      return p.sweep.size();
    case PresetName::TypeComparison:
      return 5;
    case PresetName::GaussianNoiseL1:
      return 2;  // clean and noisy copies are stored separately
    default:
      return 1;
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path fresh_directory(const fs::path& root, const std::string& stem) {
  fs::create_directories(root);
  for (int attempt = 0;; ++attempt) {
    fs::path dir = root / (attempt == 0 ? stem : stem + "-" + std::to_string(attempt));
    if (fs::create_directory(dir)) return dir;
  }
}

std::vector<std::string> class_names(Suite suite) {
  std::vector<std::string> out;
  for (const auto& p : list_functions(suite)) out.push_back(p.display_name);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

class Runner {
 public:
  Runner(PresetPlan plan, fs::path dir, int jobs, std::ostream* log)
      : plan_(std::move(plan)), dir_(std::move(dir)), jobs_(jobs), log_(log) {}

  std::vector<RunRecord> run() {
    std::vector<RunRecord> out;
    switch (plan_.name) {
      case PresetName::BaseL1DimSweep:
      case PresetName::NSweep:
        run_sweep(out);
        break;
      case PresetName::TypeComparison:
        run_types(out);
        break;
      case PresetName::UnseenL3Noisy:
        run_l3_noisy(out);
        break;
      case PresetName::GaussianNoiseL1:
        run_gaussian(out);
        break;
      default:
        run_single(out);
        break;
    }
    write_summary(out);
    return out;
  }

  double wall_seconds() const { return wall_seconds_; }

 private:
  std::uint64_t data_seed(std::uint64_t slot) const {
    return derive_seed(plan_.seed, {tag_of("data"), slot});
  }
  std::uint64_t model_seed(std::uint64_t slot, std::uint64_t run) const {
    return derive_seed(plan_.seed, {tag_of("model"), slot, run});
  }

  void say(const std::string& line) {
    if (log_ != nullptr) *log_ << "[" << to_string(plan_.name) << "] " << line << std::endl;
  }

  DatasetSplits build(const DatasetSpec& spec, const fs::path& dir) {
    auto splits = build_dataset(spec, jobs_);
    fs::create_directories(dir);
    save(splits.train, dir / "train.limg");
    if (splits.val.size() > 0) save(splits.val, dir / "val.limg");
    save(splits.test, dir / "test.limg");
    return splits;
  }

  // Trains on `splits`; the checkpoint and epoch report land in `dir`.
  nn::Network<float> fit(const DatasetSplits& splits, std::uint64_t seed, const fs::path& dir) {
    fs::create_directories(dir);
    auto model = nn::init_model(plan_.model, splits.train.class_count, splits.train.frame_size, seed,
                                plan_.activation);
    nn::TrainConfig cfg = plan_.train;
    cfg.seed = derive_seed(seed, {tag_of("train")});
    const Dataset* val = splits.val.size() > 0 ? &splits.val : nullptr;
    auto result = nn::train(std::move(model), splits.train, val, cfg);
    result.report.write_csv(dir / "train_report.csv");
    nn::save_model(result.best, dir / "model.lmdl");
    wall_seconds_ += result.report.wall_seconds;
    return std::move(result.best);
  }

  RunRecord score(nn::Network<float>& model, const Dataset& test, const fs::path& dir, const std::string& label,
                  double parameter, const std::string& file = "breakdown.csv") {
    const auto pred = nn::predict(model, test, plan_.train.input_mode);
    const auto cm = eval::confusion(test.labels, pred, test.class_count);
    RunRecord r;
    r.label = label;
    r.parameter = parameter;
    r.metrics = eval::metrics_from_confusion(cm);
    r.accuracy = r.metrics.overall_accuracy;
    r.directory = dir;
    eval::emit_report(eval::ReportKind::Breakdown,
                      eval::BreakdownData{class_names(plan_.data.suite), r.metrics}, dir / file);
    say(label + ": test accuracy " + fmt6(r.accuracy));
    return r;
  }

  void run_sweep(std::vector<RunRecord>& out) {
    const bool dim = plan_.sweep_parameter == "d";
    eval::SweepData curve{plan_.sweep_parameter, {}};
    for (std::size_t i = 0; i < plan_.sweep.size(); ++i) {
      const int v = plan_.sweep[i];
      DatasetSpec spec = plan_.data;
      (dim ? spec.encoder.dim : spec.encoder.sample_size) = v;
      spec.master_seed = data_seed(i);
      const std::string label = plan_.sweep_parameter + "=" + std::to_string(v);
      const fs::path dir = dir_ / (plan_.sweep_parameter + "_" + std::to_string(v));
      say("building " + label);
      const auto splits = build(spec, dir);
      auto model = fit(splits, model_seed(i, 0), dir);
      out.push_back(score(model, splits.test, dir, label, v));
      curve.points.push_back({static_cast<double>(v), out.back().accuracy});
    }
    eval::emit_report(eval::ReportKind::SweepCurve, curve, dir_ / "sweep.csv");
  }

  void run_types(std::vector<RunRecord>& out) {
    eval::BoxplotData box;
    for (int t = 1; t <= 5; ++t) {
      DatasetSpec spec = plan_.data;
      spec.encoder.type = static_cast<ImageType>(t);
      spec.master_seed = data_seed(static_cast<std::uint64_t>(t));
      const std::string type_name(to_string(spec.encoder.type));
      const fs::path dir = dir_ / type_name;
      say("building " + type_name);
      const auto splits = build(spec, dir);
      std::vector<double> accuracies;
      for (int r = 0; r < plan_.runs; ++r) {
        const fs::path run_dir = dir / ("run" + std::to_string(r + 1));
        auto model = fit(splits, model_seed(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(r)), run_dir);
        out.push_back(score(model, splits.test, run_dir, type_name + "/run" + std::to_string(r + 1), t));
        accuracies.push_back(out.back().accuracy);
      }
      box.series.push_back({type_name, eval::aggregate_runs(accuracies)});
    }
    eval::emit_report(eval::ReportKind::Boxplot, box, dir_ / "boxplot.csv");
  }

  void run_single(std::vector<RunRecord>& out) {
    DatasetSpec spec = plan_.data;
    spec.master_seed = data_seed(0);
    say("building dataset");
    const auto splits = build(spec, dir_ / "data");
    auto model = fit(splits, model_seed(0, 0), dir_ / "model");
    out.push_back(score(model, splits.test, dir_, "test", 0.0));
  }

  // One model trained on clean data, scored on the clean and the noisy
  // version of the unseen-instance test split.
  void run_l3_noisy(std::vector<RunRecord>& out) {
    DatasetSpec clean = plan_.data;
    clean.master_seed = data_seed(0);
    clean.noise = {};
    say("building dataset");
    const auto splits = build(clean, dir_ / "data");
    DatasetSpec noisy = plan_.data;
    noisy.master_seed = clean.master_seed;
    auto noisy_splits = build_dataset(noisy, jobs_);
    save(noisy_splits.test, dir_ / "data" / "test_noisy.limg");
    auto model = fit(splits, model_seed(0, 0), dir_ / "model");
    out.push_back(score(model, splits.test, dir_, "clean", 0.0, "breakdown_clean.csv"));
    out.push_back(score(model, noisy_splits.test, dir_, "noisy", 1.0, "breakdown_noisy.csv"));
  }

  // Clean and noisy datasets from the same seeds, one model each.
  void run_gaussian(std::vector<RunRecord>& out) {
    for (int noisy = 0; noisy < 2; ++noisy) {
      DatasetSpec spec = plan_.data;
      spec.master_seed = data_seed(0);
      if (noisy == 0) spec.noise = {};
      const std::string label = noisy != 0 ? "noisy" : "clean";
      const fs::path dir = dir_ / label;
      say("building " + label);
      const auto splits = build(spec, dir);
      auto model = fit(splits, model_seed(0, 0), dir);
      out.push_back(score(model, splits.test, dir, label, noisy));
    }
  }

  void write_summary(const std::vector<RunRecord>& runs) {
    std::string csv = "run,parameter,accuracy\n";
    for (const auto& r : runs) csv += r.label + "," + fmt6(r.parameter) + "," + fmt6(r.accuracy) + "\n";
    write_text(dir_ / "summary.csv", csv);
  }

  PresetPlan plan_;
  fs::path dir_;
  int jobs_;
  std::ostream* log_;
  double wall_seconds_ = 0.0;
};

}  // namespace

std::string_view to_string(PresetName name) {
  for (const auto& [n, s] : kPresetNames)
    if (n == name) return s;
  return "?";
}

std::string_view to_string(Scale scale) { return scale == Scale::Desk ? "desk" : "paper"; }

PresetName parse_preset_name(std::string_view text) {
  for (const auto& [n, s] : kPresetNames)
    if (s == text) return n;
  throw ConfigError("unknown preset '" + std::string(text) + "'");
}

Scale parse_scale(std::string_view text) {
  if (text == "desk" || text == "Desk") return Scale::Desk;
  if (text == "paper" || text == "Paper") return Scale::Paper;
  throw ConfigError("unknown scale '" + std::string(text) + "'");
}

std::vector<PresetName> all_presets() {
  std::vector<PresetName> out;
  for (const auto& [n, s] : kPresetNames) out.push_back(n);
  return out;
}

std::size_t PresetPlan::total_images() const {
  const auto& s = data.per_class;
  const std::size_t per_class = static_cast<std::size_t>(s.train) + s.val + s.test;
  const auto classes = static_cast<std::size_t>(function_count(data.suite));
  std::size_t total = per_class * classes * dataset_count(*this);
  if (name == PresetName::UnseenL3Noisy) total += static_cast<std::size_t>(s.test) * classes;  // noisy test copy
  return total;
}

nlohmann::json PresetPlan::to_json() const {
  nlohmann::json j;
  j["preset"] = std::string(harness::to_string(name));
  j["scale"] = std::string(harness::to_string(scale));
  j["seed"] = seed;
  j["data"] = limg::to_json(data);
  j["model"] = std::string(nn::to_string(model));
  j["activation"] = std::string(nn::to_string(activation));
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"momentum", train.momentum},
                {"input_mode", std::string(limg::to_string(train.input_mode))},
                {"checkpoint_policy", "MinLoss"}};
  j["sweep_parameter"] = sweep_parameter;
  j["sweep"] = sweep;
  j["runs"] = runs;
  return j;
}

PresetPlan resolve(const ExperimentPreset& preset, std::uint64_t seed) {
  PresetPlan p;
  p.name = preset.name;
  p.scale = preset.scale;
  p.seed = seed;
  const bool desk = preset.scale == Scale::Desk;

  // Shared defaults: d=22, N=24, Type-1, M=32, Perceptron3.
  p.data.encoder = EncoderConfig{};
  p.train.learning_rate = desk ? 0.01 : 1e-6;
  p.train.momentum = desk ? 0.9 : 0.0;
  p.train.batch_size = 64;
  p.train.epochs = desk ? 100 : 3000;
  auto sizes = [&](int train, int test, int full_train, int full_test) {
    p.data.per_class = desk ? SplitSizes{train, 0, test} : SplitSizes{full_train, 0, full_test};
  };

  switch (preset.name) {
    case PresetName::BaseL1DimSweep:
      p.sweep_parameter = "d";
      for (int d = 2; d <= 30; d += 2) p.sweep.push_back(d);
      sizes(40, 10, 1000, 250);
      p.train.epochs = desk ? 60 : 3000;
      break;
    case PresetName::NSweep:
      p.sweep_parameter = "N";
      p.sweep = {1, 8, 16, 24, 32};
      sizes(120, 40, 1000, 250);
      break;
    case PresetName::TypeComparison:
      p.runs = desk ? 5 : 20;
      sizes(120, 40, 1000, 250);
      p.train.epochs = desk ? 40 : 3000;
      break;
    case PresetName::MultiInstanceL2:
      p.data.regime = Regime::L2;
      p.data.instances_per_function = 5;
      sizes(500, 100, 5000, 1250);
      break;
    case PresetName::UnseenL3:
    case PresetName::UnseenL3Noisy:
      p.data.regime = Regime::L3;
      p.data.instances_per_function = 5;
      p.data.unseen_instances_per_function = desk ? 5 : 20;
      sizes(500, 100, 5000, 1250);
      if (preset.name == PresetName::UnseenL3Noisy) {
        p.data.noise = {NoiseKind::UniformRange, -2.5, 2.5, true};
      }
      break;
    case PresetName::GaussianNoiseL1:
      p.data.noise = {NoiseKind::GaussianHalfMax, 0.0, 0.0, false};
      sizes(160, 40, 1000, 250);
      break;
    case PresetName::DiscreteL1:
      p.data.suite = Suite::DiscretePB;
      p.data.encoder.dim = 16;
      sizes(200, 50, 1000, 250);
      break;
  }

  apply_overrides(p, preset.overrides);

  if (p.runs < 1) throw ConfigError("runs must be at least 1");
  if (!p.sweep_parameter.empty() && p.sweep.empty()) throw ConfigError("sweep list is empty");
  try {
    p.train.validate();
    DatasetSpec probe = p.data;
    for (int v : p.sweep.empty() ? std::vector<int>{0} : p.sweep) {
      if (p.sweep_parameter == "d") probe.encoder.dim = v;
      if (p.sweep_parameter == "N") probe.encoder.sample_size = v;
      probe.validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (desk) {
    if (p.total_images() > kDeskImageBudget) {
      throw ConfigError("desk scale allows at most " + std::to_string(kDeskImageBudget) + " images, plan needs " +
                        std::to_string(p.total_images()));
    }
    if (p.train.epochs > kDeskEpochLimit) {
      throw ConfigError("desk scale allows at most " + std::to_string(kDeskEpochLimit) + " epochs");
    }
  }
  return p;
}

const RunRecord& PresetResult::run(std::string_view label) const {
  for (const auto& r : runs)
    if (r.label == label) return r;
  throw std::out_of_range("no run labelled '" + std::string(label) + "'");
}

PresetResult run_preset(const ExperimentPreset& preset, std::uint64_t seed, const fs::path& output_root, int jobs,
                        std::ostream* log) {
  PresetResult result;
  result.plan = resolve(preset, seed);
  const std::string started = timestamp();
  result.directory = fresh_directory(
      output_root, std::string(to_string(preset.name)) + "-" + started + "-s" + std::to_string(seed));
  write_text(result.directory / "preset.json", result.plan.to_json().dump(2) + "\n");

  Runner runner(result.plan, result.directory, jobs, log);
  result.runs = runner.run();

  result.digest = bundle_digest(result.directory);
  nlohmann::json info = {{"started_utc", started},
                         {"finished_utc", timestamp()},
                         {"training_wall_seconds", runner.wall_seconds()},
                         {"jobs", jobs},
                         {"bundle_digest", result.digest}};
  write_text(result.directory / "run_info.json", info.dump(2) + "\n");
  return result;
}

std::string bundle_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir);
    if (rel == "run_info.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  for (const auto& rel : files) {
    h.update(rel.generic_string());
    h.update(std::string_view("\0", 1));
    std::ifstream in(dir / rel, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + (dir / rel).string());
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      const auto got = static_cast<std::size_t>(in.gcount());
      h.update(std::span(reinterpret_cast<const std::uint8_t*>(buf.data()), got));
    }
  }
  return to_hex(h.finish());
}

}  // namespace limg::harness
