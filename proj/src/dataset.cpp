#include "limg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "parallel.hpp"

namespace limg {

namespace {

constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

int split_count(const SplitSizes& s, int split) {
  return split == 0 ? s.train : split == 1 ? s.val : s.test;
}

void append_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::L1: return "L1";
    case Regime::L2: return "L2";
    case Regime::L3: return "L3";
  }
  return "?";
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::None: return "None";
    case NoiseKind::GaussianHalfMax: return "GaussianHalfMax";
    case NoiseKind::UniformRange: return "UniformRange";
  }
  return "?";
}

Regime parse_regime(std::string_view text) {
  if (text == "L1") return Regime::L1;
  if (text == "L2") return Regime::L2;
  if (text == "L3") return Regime::L3;
  throw std::invalid_argument("unknown regime '" + std::string(text) + "'");
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "None" || text == "none") return NoiseKind::None;
  if (text == "GaussianHalfMax" || text == "gaussian") return NoiseKind::GaussianHalfMax;
  if (text == "UniformRange" || text == "uniform") return NoiseKind::UniformRange;
  throw std::invalid_argument("unknown noise kind '" + std::string(text) + "'");
}

void DatasetSpec::validate() const {
  encoder.validate();
  if (per_class.train < 1) throw std::invalid_argument("at least one training image per class is required");
  if (per_class.val < 0 || per_class.test < 0) throw std::invalid_argument("negative split size");
  if (instances_per_function < 1) throw std::invalid_argument("instances_per_function must be >= 1");
  if (regime == Regime::L1 && instances_per_function != 1) {
    throw std::invalid_argument("L1 uses exactly one instance per function");
  }
  if (regime == Regime::L3 && unseen_instances_per_function < 1) {
    throw std::invalid_argument("L3 needs at least one unseen instance per function");
  }
  if (noise.kind == NoiseKind::UniformRange && noise.uniform_lo > noise.uniform_hi) {
    throw std::invalid_argument("uniform noise range is inverted");
  }
  if (suite == Suite::DiscretePB && encoder.dim > kMaxBitstringLength) {
    throw std::invalid_argument("bitstring length exceeds 64");
  }
}

Digest Dataset::content_digest() const {
  Sha256 h;
  std::vector<std::uint8_t> buf;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    buf.clear();
    append_le16(buf, static_cast<std::uint16_t>(labels[i]));
    for (float v : images[i].pixels) append_le32(buf, std::bit_cast<std::uint32_t>(v));
    h.update(buf);
  }
  return h.finish();
}

std::vector<std::uint64_t> training_instance_seeds(const DatasetSpec& spec, int k) {
  std::vector<std::uint64_t> seeds;
  for (int j = 0; j < spec.instances_per_function; ++j) {
    seeds.push_back(derive_seed(spec.master_seed, {tag_of("instance"), static_cast<std::uint64_t>(k),
                                                   static_cast<std::uint64_t>(j)}));
  }
  return seeds;
}

std::vector<std::uint64_t> unseen_instance_seeds(const DatasetSpec& spec, int k) {
  const auto training = training_instance_seeds(spec, k);
  const std::set<std::uint64_t> taken(training.begin(), training.end());
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t j = 0; static_cast<int>(seeds.size()) < spec.unseen_instances_per_function; ++j) {
    const auto s = derive_seed(spec.master_seed, {tag_of("unseen"), static_cast<std::uint64_t>(k), j});
    if (!taken.contains(s)) seeds.push_back(s);
  }
  return seeds;
}

std::vector<std::size_t> fisher_yates_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

void shuffle_sync(std::vector<LandscapeImage>& images, std::vector<int>& labels, std::uint64_t seed) {
  if (images.size() != labels.size()) throw std::invalid_argument("shuffle_sync: length mismatch");
  const auto perm = fisher_yates_permutation(images.size(), seed);
  std::vector<LandscapeImage> img(images.size());
  std::vector<int> lab(labels.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    img[i] = std::move(images[perm[i]]);
    lab[i] = labels[perm[i]];
  }
  images = std::move(img);
  labels = std::move(lab);
}

// sigma = u * fraction * max(pixels). An image with no positive pixel falls
// back to its largest magnitude so sigma stays non-negative.
double gaussian_sigma(std::span<const float> pixels, double u, double peak_fraction) {
  if (pixels.empty()) return 0.0;
  double peak = -std::numeric_limits<double>::infinity();
  double magnitude = 0;
  for (float v : pixels) {
    peak = std::max(peak, static_cast<double>(v));
    magnitude = std::max(magnitude, std::abs(static_cast<double>(v)));
  }
  return u * peak_fraction * (peak > 0 ? peak : magnitude);
}

void apply_gaussian(std::span<float> pixels, double sigma, Rng& rng) {
  if (sigma <= 0) return;
  for (auto& v : pixels) v = static_cast<float>(v + sigma * rng.normal());
}

void apply_uniform(std::span<float> pixels, double lo, double hi, Rng& rng) {
  if (lo > hi) throw std::invalid_argument("uniform noise range is inverted");
  for (auto& v : pixels) v = static_cast<float>(v + rng.uniform(lo, hi));
}

void add_gaussian_noise(Dataset& ds, std::uint64_t seed, double peak_fraction) {
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    auto& px = ds.images[i].pixels;
    apply_gaussian(px, gaussian_sigma(px, rng.uniform(), peak_fraction), rng);
  }
  ds.manifest.noise_applied.push_back("GaussianHalfMax(peak_fraction=" + std::to_string(peak_fraction) +
                                      ", seed=" + std::to_string(seed) + ")");
  ds.manifest.digest = to_hex(ds.content_digest());
}

void add_uniform_noise(Dataset& ds, double lo, double hi, std::uint64_t seed) {
  if (lo > hi) throw std::invalid_argument("uniform noise range is inverted");
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    apply_uniform(ds.images[i].pixels, lo, hi, rng);
  }
  ds.manifest.noise_applied.push_back("UniformRange(lo=" + std::to_string(lo) + ", hi=" +
                                      std::to_string(hi) + ", seed=" + std::to_string(seed) + ")");
  ds.manifest.digest = to_hex(ds.content_digest());
}

bool is_class_balanced(const Dataset& ds) {
  if (ds.class_count <= 0) return ds.labels.empty();
  std::vector<std::size_t> counts(ds.class_count, 0);
  for (int l : ds.labels) {
    if (l < 0 || l >= ds.class_count) return false;
    ++counts[l];
  }
  const std::size_t lo = ds.labels.size() / ds.class_count;
  const std::size_t hi = lo + (ds.labels.size() % ds.class_count != 0);
  return std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return c == lo || c == hi; });
}

DatasetSplits build_dataset(const DatasetSpec& spec, int jobs) {
  spec.validate();
  const int classes = function_count(spec.suite);
  const int d = spec.encoder.dim;

  struct Task {
    int split;
    int k;
    int replicate;
    const FunctionInstance* instance;
  };

  // Instances are shared read-only across workers.
  std::unordered_map<std::uint64_t, FunctionInstance> instances;
  std::map<int, std::vector<std::uint64_t>> train_seeds;
  std::map<int, std::vector<std::uint64_t>> test_seeds;
  auto instance_for = [&](int k, std::uint64_t seed) -> const FunctionInstance* {
    auto [it, fresh] = instances.try_emplace(seed);
    if (fresh) it->second = make_instance(problem(spec.suite, k), d, seed);
    return &it->second;
  };

  std::vector<Task> tasks;
  for (int split = 0; split < 3; ++split) {
    for (int k = 1; k <= classes; ++k) {
      const auto seen = training_instance_seeds(spec, k);
      const auto unseen = spec.regime == Regime::L3 ? unseen_instance_seeds(spec, k)
                                                    : std::vector<std::uint64_t>{};
      train_seeds[k - 1] = seen;
      test_seeds[k - 1] = spec.regime == Regime::L3 ? unseen : seen;
      const bool use_unseen = spec.regime == Regime::L3 && split == 2;
      const auto& pool = use_unseen ? unseen : seen;
      for (int rep = 0; rep < split_count(spec.per_class, split); ++rep) {
        const std::uint64_t seed = pool[static_cast<std::size_t>(rep) % pool.size()];
        tasks.push_back({split, k, rep, instance_for(k, seed)});
      }
    }
  }

  std::vector<LandscapeImage> images(tasks.size());
  detail::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const auto sample_seed =
        derive_seed(spec.master_seed, {tag_of("sample"), static_cast<std::uint64_t>(t.split),
                                       static_cast<std::uint64_t>(t.k),
                                       static_cast<std::uint64_t>(t.replicate)});
    images[i] = construct_image(*t.instance, spec.encoder, sample_seed);
  });

  const SplitSizes totals{spec.per_class.train * classes, spec.per_class.val * classes,
                          spec.per_class.test * classes};
  DatasetSplits out;
  std::array<Dataset*, 3> parts = {&out.train, &out.val, &out.test};
  std::size_t cursor = 0;
  for (int split = 0; split < 3; ++split) {
    Dataset& ds = *parts[split];
    ds.class_count = classes;
    ds.frame_size = spec.encoder.frame_size;
    const std::size_t n = static_cast<std::size_t>(split_count(totals, split));
    for (std::size_t i = 0; i < n; ++i, ++cursor) {
      ds.labels.push_back(images[cursor].label);
      ds.images.push_back(std::move(images[cursor]));
    }
    shuffle_sync(ds.images, ds.labels,
                 derive_seed(spec.master_seed, {tag_of("shuffle"), static_cast<std::uint64_t>(split)}));

    ds.manifest.spec = spec;
    ds.manifest.split = std::string(kSplitNames[split]);
    ds.manifest.totals = totals;
    ds.manifest.instance_seeds = split == 2 ? test_seeds : train_seeds;
    ds.manifest.digest = to_hex(ds.content_digest());

    const bool noisy = spec.noise.kind != NoiseKind::None && (!spec.noise.test_only || split == 2);
    if (noisy) {
      const auto seed = derive_seed(spec.master_seed, {tag_of("noise"), static_cast<std::uint64_t>(split)});
      if (spec.noise.kind == NoiseKind::GaussianHalfMax) {
        add_gaussian_noise(ds, seed);
      } else {
        add_uniform_noise(ds, spec.noise.uniform_lo, spec.noise.uniform_hi, seed);
      }
    }
  }
  return out;
}

}  // namespace limg
