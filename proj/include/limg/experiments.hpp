#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "limg/classifier.hpp"
#include "limg/dataset.hpp"
#include "limg/evaluation.hpp"

namespace limg::harness {

enum class PresetName {
  BaseL1DimSweep,
  NSweep,
  TypeComparison,
  MultiInstanceL2,
  UnseenL3,
  UnseenL3Noisy,
  GaussianNoiseL1,
  DiscreteL1,
};
enum class Scale { Desk, Paper };

std::string_view to_string(PresetName name);
std::string_view to_string(Scale scale);
PresetName parse_preset_name(std::string_view text);
Scale parse_scale(std::string_view text);
std::vector<PresetName> all_presets();

// Bad preset names, override keys or values, and desk-bound violations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kDeskImageBudget = 20000;
inline constexpr int kDeskEpochLimit = 300;

struct ExperimentPreset {
  PresetName name = PresetName::BaseL1DimSweep;
  Scale scale = Scale::Desk;
  // Keys: dim, n, type, frame, domain, train, val, test, instances, unseen,
  // epochs, lr, momentum, batch, model, activation, input, runs, sweep.
  std::map<std::string, std::string> overrides;
};

// A preset with defaults and overrides folded in.
struct PresetPlan {
  PresetName name = PresetName::BaseL1DimSweep;
  Scale scale = Scale::Desk;
  std::uint64_t seed = 0;
  DatasetSpec data;  // template; sweeps and runs vary it
  nn::Preset model = nn::Preset::Perceptron3;
  nn::Activation activation = nn::Activation::ReLU;
  nn::TrainConfig train;
  std::string sweep_parameter;  // "d", "N" or empty
  std::vector<int> sweep;
  int runs = 1;

  // Images generated by the whole preset, every split counted once.
  std::size_t total_images() const;
  nlohmann::json to_json() const;
};

PresetPlan resolve(const ExperimentPreset& preset, std::uint64_t seed);

struct RunRecord {
  std::string label;       // e.g. "d=22", "type3/run2", "noisy"
  double parameter = 0.0;  // swept value when there is one
  double accuracy = 0.0;
  eval::MetricsReport metrics;
  std::filesystem::path directory;
};

struct PresetResult {
  PresetPlan plan;
  std::filesystem::path directory;
  std::string digest;  // bundle digest, see bundle_digest()
  std::vector<RunRecord> runs;

  const RunRecord& run(std::string_view label) const;
};

// Runs every stage and writes the bundle under
// <output_root>/<preset>-<timestamp>-s<seed>/.
PresetResult run_preset(const ExperimentPreset& preset, std::uint64_t seed,
                        const std::filesystem::path& output_root, int jobs = 1,
                        std::ostream* log = nullptr);

// SHA-256 over the sorted relative paths and contents of every file below
// `dir`, skipping run_info.json (timestamps and wall time live there).
std::string bundle_digest(const std::filesystem::path& dir);

}  // namespace limg::harness
