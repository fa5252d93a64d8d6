#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "limg/experiments.hpp"

using namespace limg;
using namespace limg::harness;
namespace fs = std::filesystem;

namespace {

ExperimentPreset tiny_sweep() {
  ExperimentPreset p;
  p.name = PresetName::BaseL1DimSweep;
  p.overrides = {{"sweep", "2,4"}, {"train", "2"}, {"test", "1"}, {"epochs", "2"},
                 {"frame", "8"},   {"n", "2"},     {"model", "Perceptron1"}};
  return p;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Presets, NamesRoundTrip) {
  const auto all = all_presets();
  EXPECT_EQ(all.size(), 8u);
  for (auto p : all) EXPECT_EQ(parse_preset_name(to_string(p)), p);
  EXPECT_THROW(parse_preset_name("NoSuchPreset"), ConfigError);
  EXPECT_EQ(parse_scale("paper"), Scale::Paper);
  EXPECT_THROW(parse_scale("huge"), ConfigError);
}

TEST(Presets, DeskPlansFitTheBudget) {
  for (auto name : all_presets()) {
    const auto plan = resolve({name, Scale::Desk, {}}, 1);
    EXPECT_LE(plan.total_images(), kDeskImageBudget) << to_string(name);
    EXPECT_LE(plan.train.epochs, kDeskEpochLimit) << to_string(name);
    EXPECT_EQ(plan.data.encoder.frame_size, 32);
  }
}

TEST(Presets, FullScalePlansUseLargeDefaults) {
  const auto plan = resolve({PresetName::MultiInstanceL2, Scale::Paper, {}}, 1);
  EXPECT_EQ(plan.train.epochs, 3000);
  EXPECT_DOUBLE_EQ(plan.train.learning_rate, 1e-6);
  EXPECT_EQ(plan.train.momentum, 0.0);
  EXPECT_EQ(plan.data.per_class.train, 5000);
}

TEST(Presets, SpecificDefaults) {
  const auto dims = resolve({PresetName::BaseL1DimSweep, Scale::Desk, {}}, 1);
  EXPECT_EQ(dims.sweep_parameter, "d");
  EXPECT_EQ(dims.sweep.front(), 2);
  EXPECT_EQ(dims.sweep.back(), 30);
  const auto ns = resolve({PresetName::NSweep, Scale::Desk, {}}, 1);
  EXPECT_EQ(ns.sweep, (std::vector<int>{1, 8, 16, 24, 32}));
  EXPECT_EQ(resolve({PresetName::TypeComparison, Scale::Desk, {}}, 1).runs, 5);
  const auto discrete = resolve({PresetName::DiscreteL1, Scale::Desk, {}}, 1);
  EXPECT_EQ(discrete.data.suite, Suite::DiscretePB);
  EXPECT_EQ(discrete.data.encoder.dim, 16);
  const auto l3 = resolve({PresetName::UnseenL3Noisy, Scale::Desk, {}}, 1);
  EXPECT_TRUE(l3.data.noise.test_only);
  EXPECT_GT(l3.data.unseen_instances_per_function, 0);
}

TEST(Presets, OverridesApply) {
  ExperimentPreset p{PresetName::DiscreteL1, Scale::Desk, {{"lr", "0.5"}, {"epochs", "7"}, {"activation", "tanh"}}};
  const auto plan = resolve(p, 3);
  EXPECT_EQ(plan.train.learning_rate, 0.5);
  EXPECT_EQ(plan.train.epochs, 7);
  EXPECT_EQ(plan.activation, nn::Activation::Tanh);
  EXPECT_EQ(plan.seed, 3u);
}

TEST(Presets, BadOverridesAreConfigErrors) {
  auto bad = [](std::map<std::string, std::string> ov, PresetName name = PresetName::DiscreteL1) {
    return ExperimentPreset{name, Scale::Desk, std::move(ov)};
  };
  EXPECT_THROW(resolve(bad({{"colour", "red"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"epochs", "ten"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"epochs", "10x"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"lr", "fast"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"model", "ResNet"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"sweep", "1,2"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"sweep", "1,,2"}}, PresetName::NSweep), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"runs", "0"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"momentum", "1"}}), 1), ConfigError);
  EXPECT_THROW(resolve(bad({{"dim", "200"}, {"frame", "8"}}), 1), ConfigError);
}

TEST(Presets, DeskBoundsEnforced) {
  EXPECT_THROW(resolve({PresetName::DiscreteL1, Scale::Desk, {{"epochs", "301"}}}, 1), ConfigError);
  EXPECT_NO_THROW(resolve({PresetName::DiscreteL1, Scale::Desk, {{"epochs", "300"}}}, 1));
  EXPECT_THROW(resolve({PresetName::MultiInstanceL2, Scale::Desk, {{"train", "1000"}}}, 1), ConfigError);
  EXPECT_NO_THROW(resolve({PresetName::MultiInstanceL2, Scale::Paper, {{"train", "1000"}}}, 1));
}

TEST(Presets, TotalImagesCountsEverySplit) {
  ExperimentPreset p{PresetName::DiscreteL1, Scale::Desk, {{"train", "10"}, {"val", "3"}, {"test", "2"}}};
  const auto plan = resolve(p, 1);
  EXPECT_EQ(plan.total_images(), 15u * 6u);  // six pseudo-Boolean classes
  const auto sweep = resolve(tiny_sweep(), 1);
  EXPECT_EQ(sweep.total_images(), 2u * 3u * 24u);
}

TEST(BundleDigest, IgnoresRunInfoOnly) {
  const auto dir = scratch("limg_digest");
  fs::create_directories(dir / "sub");
  std::ofstream(dir / "a.txt") << "alpha";
  std::ofstream(dir / "sub" / "b.txt") << "beta";
  const auto base = bundle_digest(dir);
  EXPECT_EQ(base.size(), 64u);
  std::ofstream(dir / "run_info.json") << "{\"t\": 1}";
  EXPECT_EQ(bundle_digest(dir), base);
  std::ofstream(dir / "sub" / "b.txt") << "betb";
  EXPECT_NE(bundle_digest(dir), base);
  std::ofstream(dir / "sub" / "b.txt") << "beta";
  fs::rename(dir / "a.txt", dir / "c.txt");
  EXPECT_NE(bundle_digest(dir), base);
}

TEST(RunPreset, TinySweepIsReproducible) {
  const auto root = scratch("limg_runs");
  const auto a = run_preset(tiny_sweep(), 7, root);
  const auto b = run_preset(tiny_sweep(), 7, root);
  EXPECT_NE(a.directory, b.directory);
  EXPECT_EQ(a.digest, b.digest);
  ASSERT_EQ(a.runs.size(), 2u);
  EXPECT_EQ(a.runs[0].label, "d=2");
  EXPECT_EQ(a.run("d=4").parameter, 4.0);
  EXPECT_THROW(a.run("d=6"), std::out_of_range);
  for (const char* f : {"preset.json", "summary.csv", "sweep.csv", "run_info.json"})
    EXPECT_TRUE(fs::exists(a.directory / f)) << f;
  for (const char* f : {"train.limg", "test.limg", "model.lmdl", "train_report.csv", "breakdown.csv"})
    EXPECT_TRUE(fs::exists(a.directory / "d_2" / f)) << f;
  const auto c = run_preset(tiny_sweep(), 8, root);
  EXPECT_NE(c.digest, a.digest);
}
