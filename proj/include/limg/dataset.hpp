#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "limg/digest.hpp"
#include "limg/encoder.hpp"
#include "limg/functions.hpp"
#include "limg/rng.hpp"

namespace limg {

// L1 single instance, L2 multi-instance, L3 multi-unseen-instance.
enum class Regime { L1, L2, L3 };
enum class NoiseKind { None, GaussianHalfMax, UniformRange };

std::string_view to_string(Regime regime);
std::string_view to_string(NoiseKind kind);
Regime parse_regime(std::string_view text);
NoiseKind parse_noise_kind(std::string_view text);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::None;
  double uniform_lo = 0.0;
  double uniform_hi = 0.0;
  // Restricts the noise to the test split (pre-trained models meeting noisy data).
  bool test_only = false;
};

// Images per class in each split.
struct SplitSizes {
  int train = 0;
  int val = 0;
  int test = 0;
};

struct DatasetSpec {
  Suite suite = Suite::ContinuousBBOB;
  EncoderConfig encoder;
  Regime regime = Regime::L1;
  SplitSizes per_class;
  int instances_per_function = 1;
  int unseen_instances_per_function = 0;
  std::uint64_t master_seed = 0;
  NoiseSpec noise;

  void validate() const;
};

// Bookkeeping for one split. Enough to regenerate the split bit-exactly.
struct DatasetManifest {
  DatasetSpec spec;
  std::string split;                // "train", "val" or "test"
  SplitSizes totals;                // image counts of all three splits
  std::map<int, std::vector<std::uint64_t>> instance_seeds;  // class -> seeds behind this split
  std::vector<std::string> noise_applied;
  std::string digest;               // hex SHA-256 of labels and pixels
};

struct Dataset {
  std::vector<LandscapeImage> images;
  std::vector<int> labels;
  int class_count = 0;
  int frame_size = 0;
  DatasetManifest manifest;

  std::size_t size() const { return labels.size(); }
  // Hash over every record (u16 label then M*M float32, little endian).
  Digest content_digest() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, VersionMismatch, DigestMismatch, Truncated, BadContent, Io };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Instance seeds for class k (1-based index). L3 unseen seeds come from a
// separate stream and are checked disjoint from the training ones.
std::vector<std::uint64_t> training_instance_seeds(const DatasetSpec& spec, int k);
std::vector<std::uint64_t> unseen_instance_seeds(const DatasetSpec& spec, int k);

// Generates, shuffles and splits. Output does not depend on `jobs`.
DatasetSplits build_dataset(const DatasetSpec& spec, int jobs = 1);

// Seeded Fisher-Yates permutation; perm[i] is the source index of slot i.
std::vector<std::size_t> fisher_yates_permutation(std::size_t n, std::uint64_t seed);

void shuffle_sync(std::vector<LandscapeImage>& images, std::vector<int>& labels, std::uint64_t seed);

// sigma = u * peak_fraction * max|pixel| with u ~ U[0,1) drawn per image.
void add_gaussian_noise(Dataset& ds, std::uint64_t seed, double peak_fraction = 0.5);
void add_uniform_noise(Dataset& ds, double lo, double hi, std::uint64_t seed);

// Per-image primitives behind the two dataset-level noise protocols.
double gaussian_sigma(std::span<const float> pixels, double u, double peak_fraction);
void apply_gaussian(std::span<float> pixels, double sigma, Rng& rng);
void apply_uniform(std::span<float> pixels, double lo, double hi, Rng& rng);

// Every class holds floor or ceil of size/class_count images.
bool is_class_balanced(const Dataset& ds);

// Binary file plus `<path>.json` manifest sidecar.
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

}  // namespace limg
