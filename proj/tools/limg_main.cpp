// limg: landscape-image generation, training and evaluation from the shell.
//
// Exit codes: 0 success, 2 bad command line or configuration, 3 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "limg/classifier.hpp"
#include "limg/dataset.hpp"
#include "limg/evaluation.hpp"
#include "limg/experiments.hpp"
#include "limg/functions.hpp"

namespace fs = std::filesystem;
using namespace limg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Default for every --out: $LIMG_OUTPUT_ROOT, else ./limg-out.
fs::path output_root() {
  const char* env = std::getenv("LIMG_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("limg-out");
}

struct Common {
  std::uint64_t seed = 1;
  int jobs = 1;
  bool export_png = false;
};

struct FuncsArgs {
  std::string suite = "bbob";
  int k = 1;
  int dim = 2;
  std::vector<double> at;
};

struct GenerateArgs {
  std::string suite = "bbob";
  int dim = 22;
  int n = 24;
  int type = 1;
  int frame = 32;
  std::string domain = "unit";
  std::string regime = "L1";
  int per_class = 200;
  int val = 0;
  int test = 50;
  int instances = 1;
  int unseen = 0;
  std::string noise = "none";
  double noise_lo = -2.5;
  double noise_hi = 2.5;
  bool noise_test_only = false;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string val;
  std::string preset = "perceptron3";
  std::string activation = "relu";
  double lr = 1e-4;
  double momentum = 0.0;
  int epochs = 100;
  int batch = 64;
  std::string input = "minmax";
  std::string out;
};

struct EvalArgs {
  std::string model;
  std::string data;
  std::string input = "minmax";
  std::string out;
};

struct ExperimentArgs {
  std::string preset;
  std::string scale = "desk";
  std::vector<std::string> set;
  std::string out;
};

// A directory holding train.limg etc. or the file itself.
fs::path dataset_file(const std::string& arg, const char* split) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= std::string(split) + ".limg";
  return p;
}

void export_images(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<bool> done(static_cast<std::size_t>(ds.class_count), false);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[i];
    if (done[static_cast<std::size_t>(label)]) continue;
    done[static_cast<std::size_t>(label)] = true;
    char name[32];
    std::snprintf(name, sizeof name, "class%02d.pgm", label);
    write_pgm(dir / name, ds.images[i].pixels, ds.frame_size);
  }
}

int run_funcs_list(const FuncsArgs& a) {
  const Suite suite = parse_suite(a.suite);
  for (const auto& p : list_functions(suite)) std::cout << p.index << '\t' << p.display_name << '\n';
  return 0;
}

int run_funcs_dump(const FuncsArgs& a, const Common& c) {
  const Suite suite = parse_suite(a.suite);
  const auto inst = make_instance(problem(suite, a.k), a.dim, c.seed);
  nlohmann::json j;
  j["suite"] = std::string(to_string(suite));
  j["k"] = a.k;
  j["name"] = inst.problem().display_name;
  j["dim"] = a.dim;
  j["instance_seed"] = c.seed;
  j["f_offset"] = inst.f_offset();
  if (suite == Suite::ContinuousBBOB) {
    j["translation"] = std::vector<double>(inst.translation().begin(), inst.translation().end());
    j["rotations"] = inst.rotations().size();
    if (inst.optimum()) j["optimum"] = std::vector<double>(inst.optimum()->begin(), inst.optimum()->end());
  }
  if (!a.at.empty()) {
    if (static_cast<int>(a.at.size()) != a.dim) {
      throw ProblemError("--at needs " + std::to_string(a.dim) + " coordinates, got " + std::to_string(a.at.size()));
    }
    j["x"] = a.at;
    j["f"] = inst(a.at);
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_generate(const GenerateArgs& a, const Common& c) {
  DatasetSpec spec;
  spec.suite = parse_suite(a.suite);
  spec.encoder.dim = a.dim;
  spec.encoder.sample_size = a.n;
  spec.encoder.type = parse_image_type(std::to_string(a.type));
  spec.encoder.frame_size = a.frame;
  spec.encoder.domain_map = parse_domain_map(a.domain);
  spec.regime = parse_regime(a.regime);
  spec.per_class = {a.per_class, a.val, a.test};
  spec.instances_per_function = a.instances;
  spec.unseen_instances_per_function = a.unseen;
  spec.master_seed = c.seed;
  spec.noise.kind = parse_noise_kind(a.noise);
  spec.noise.uniform_lo = a.noise_lo;
  spec.noise.uniform_hi = a.noise_hi;
  spec.noise.test_only = a.noise_test_only;
  spec.validate();

  const fs::path out = a.out.empty() ? output_root() / "dataset" : fs::path(a.out);
  const auto splits = build_dataset(spec, c.jobs);
  fs::create_directories(out);
  save(splits.train, out / "train.limg");
  if (splits.val.size() > 0) save(splits.val, out / "val.limg");
  if (splits.test.size() > 0) save(splits.test, out / "test.limg");
  if (c.export_png) export_images(splits.train, out / "png");
  std::cout << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
            << " images (train/val/test) to " << out.string() << '\n'
            << "train digest " << splits.train.manifest.digest << '\n';
  return 0;
}

int run_train(const TrainArgs& a, const Common& c) {
  nn::TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.input_mode = parse_pixel_mode(a.input);
  cfg.seed = c.seed;
  cfg.validate();
  const auto preset = nn::parse_preset(a.preset);
  const auto act = nn::parse_activation(a.activation);

  const Dataset train_ds = load(dataset_file(a.data, "train"));
  std::optional<Dataset> val_ds;
  if (!a.val.empty()) val_ds = load(dataset_file(a.val, "val"));

  auto model = nn::init_model(preset, train_ds.class_count, train_ds.frame_size, c.seed, act);
  auto result = nn::train(std::move(model), train_ds, val_ds ? &*val_ds : nullptr, cfg);

  const fs::path out = a.out.empty() ? output_root() / "model" : fs::path(a.out);
  fs::create_directories(out);
  nn::save_model(result.best, out / "model.lmdl");
  result.report.write_csv(out / "train_report.csv");
  const auto& best = result.report.best_epoch > 0 ? result.report.epochs[result.report.best_epoch - 1]
                                                  : result.report.epochs.front();
  std::cout << "best epoch " << result.report.best_epoch << ", train accuracy " << best.train_accuracy
            << ", wall " << result.report.wall_seconds << " s\n"
            << "checkpoint " << (out / "model.lmdl").string() << '\n';
  return 0;
}

int run_eval(const EvalArgs& a) {
  auto model = nn::load_model(a.model);
  const Dataset ds = load(dataset_file(a.data, "test"));
  if (ds.class_count != model.class_count || ds.frame_size != model.input.width) {
    throw nn::ShapeError("model and dataset disagree on classes or frame size");
  }
  const auto pred = nn::predict(model, ds, parse_pixel_mode(a.input));
  const auto metrics = eval::metrics_from_confusion(eval::confusion(ds.labels, pred, ds.class_count));

  std::vector<std::string> names;
  for (const auto& p : list_functions(ds.manifest.spec.suite)) names.push_back(p.display_name);
  const fs::path out = a.out.empty() ? output_root() / "eval" : fs::path(a.out);
  fs::create_directories(out);
  eval::emit_report(eval::ReportKind::Breakdown, eval::BreakdownData{names, metrics}, out / "breakdown.csv");
  for (const auto& w : metrics.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "accuracy " << metrics.overall_accuracy << " on " << ds.size() << " images\n"
            << "breakdown " << (out / "breakdown.csv").string() << '\n';
  return 0;
}

int run_experiment(const ExperimentArgs& a, const Common& c) {
  harness::ExperimentPreset preset;
  preset.name = harness::parse_preset_name(a.preset);
  preset.scale = harness::parse_scale(a.scale);
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw harness::ConfigError("--set expects key=value, got '" + kv + "'");
    preset.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  const fs::path root = a.out.empty() ? output_root() : fs::path(a.out);
  const auto result = harness::run_preset(preset, c.seed, root, c.jobs, &std::cerr);
  for (const auto& r : result.runs) std::cout << r.label << '\t' << r.accuracy << '\n';
  std::cout << "output " << result.directory.string() << '\n' << "digest " << result.digest << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landscape images of black-box optimization functions"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");

  Common common;
  app.add_option("--seed", common.seed, "Master seed")->capture_default_str();
  app.add_option("--jobs", common.jobs, "Worker threads for dataset generation")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--export-png", common.export_png, "Also write one grayscale image per class (PGM)");

  FuncsArgs funcs;
  auto* funcs_cmd = app.add_subcommand("funcs", "Inspect benchmark functions");
  funcs_cmd->require_subcommand(1);
  auto* list_cmd = funcs_cmd->add_subcommand("list", "List a suite");
  list_cmd->add_option("--suite", funcs.suite, "bbob or pbo")->capture_default_str();
  auto* dump_cmd = funcs_cmd->add_subcommand("dump", "Print one seeded instance as JSON");
  dump_cmd->add_option("--suite", funcs.suite, "bbob or pbo")->capture_default_str();
  dump_cmd->add_option("--k", funcs.k, "1-based function index")->capture_default_str();
  dump_cmd->add_option("--dim", funcs.dim, "Dimension or bitstring length")->capture_default_str();
  dump_cmd->add_option("--at", funcs.at, "Evaluate at this point");

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Build a labelled landscape-image dataset");
  gen_cmd->add_option("--suite", gen.suite)->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim)->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Random samples per image")->capture_default_str();
  gen_cmd->add_option("--type", gen.type, "Image type 1-5")->capture_default_str();
  gen_cmd->add_option("--frame", gen.frame, "Frame size M")->capture_default_str();
  gen_cmd->add_option("--domain", gen.domain, "unit or bbob-box")->capture_default_str();
  gen_cmd->add_option("--regime", gen.regime, "L1, L2 or L3")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class, "Training images per class")->capture_default_str();
  gen_cmd->add_option("--val", gen.val, "Validation images per class")->capture_default_str();
  gen_cmd->add_option("--test", gen.test, "Test images per class")->capture_default_str();
  gen_cmd->add_option("--instances", gen.instances, "Training instances per function")->capture_default_str();
  gen_cmd->add_option("--unseen", gen.unseen, "Unseen test instances per function (L3)")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "none, gaussian or uniform")->capture_default_str();
  gen_cmd->add_option("--noise-lo", gen.noise_lo)->capture_default_str();
  gen_cmd->add_option("--noise-hi", gen.noise_hi)->capture_default_str();
  gen_cmd->add_flag("--noise-test-only", gen.noise_test_only);
  gen_cmd->add_option("--out", gen.out, "Output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on a dataset");
  train_cmd->add_option("--data", tr.data, "train.limg or its directory")->required();
  train_cmd->add_option("--val", tr.val, "Validation set for checkpoint selection");
  train_cmd->add_option("--preset", tr.preset, "perceptron1, perceptron3 or lenet5")->capture_default_str();
  train_cmd->add_option("--activation", tr.activation, "relu or tanh")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr)->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum)->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs)->capture_default_str();
  train_cmd->add_option("--batch", tr.batch)->capture_default_str();
  train_cmd->add_option("--input", tr.input, "raw or minmax")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Output directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint and write the per-class breakdown");
  eval_cmd->add_option("--model", ev.model, "model.lmdl")->required();
  eval_cmd->add_option("--data", ev.data, "test.limg or its directory")->required();
  eval_cmd->add_option("--input", ev.input, "raw or minmax")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Output directory");

  ExperimentArgs ex;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a named experiment preset");
  exp_cmd->add_option("preset", ex.preset, "Preset name")->required();
  exp_cmd->add_option("--scale", ex.scale, "desk or paper")->capture_default_str();
  exp_cmd->add_option("--set", ex.set, "Override, key=value (repeatable)");
  exp_cmd->add_option("--out", ex.out, "Output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (list_cmd->parsed()) return run_funcs_list(funcs);
    if (dump_cmd->parsed()) return run_funcs_dump(funcs, common);
    if (gen_cmd->parsed()) return run_generate(gen, common);
    if (train_cmd->parsed()) return run_train(tr, common);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (exp_cmd->parsed()) return run_experiment(ex, common);
  } catch (const std::invalid_argument& e) {
    // Problem, capacity, shape and preset errors all derive from invalid_argument.
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
