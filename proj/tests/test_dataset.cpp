#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "limg/dataset.hpp"

using namespace limg;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec(Regime regime = Regime::L1) {
  DatasetSpec s;
  s.encoder.dim = 4;
  s.encoder.sample_size = 6;
  s.encoder.frame_size = 8;
  s.regime = regime;
  s.per_class = {5, 2, 3};
  s.master_seed = 77;
  if (regime != Regime::L1) s.instances_per_function = 3;
  if (regime == Regime::L3) s.unseen_instances_per_function = 2;
  return s;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "limg_dataset_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::multiset<std::pair<int, std::vector<float>>> pairs(const Dataset& ds) {
  std::multiset<std::pair<int, std::vector<float>>> s;
  for (std::size_t i = 0; i < ds.size(); ++i) s.insert({ds.labels[i], ds.images[i].pixels});
  return s;
}

Dataset tiny_dataset(std::size_t n, float value) {
  Dataset ds;
  ds.class_count = 2;
  ds.frame_size = 4;
  for (std::size_t i = 0; i < n; ++i) {
    LandscapeImage img;
    img.frame_size = 4;
    img.pixels.assign(16, value);
    img.label = static_cast<int>(i % 2);
    ds.images.push_back(img);
    ds.labels.push_back(img.label);
  }
  return ds;
}

}  // namespace

TEST(DatasetSpec, Validation) {
  auto s = small_spec();
  EXPECT_NO_THROW(s.validate());
  s.per_class.train = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.instances_per_function = 2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec(Regime::L3);
  s.unseen_instances_per_function = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.noise = {NoiseKind::UniformRange, 1.0, -1.0, false};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.encoder.dim = 8;  // d' = 9 > M = 8
  EXPECT_THROW(s.validate(), CapacityError);
}

TEST(BuildDataset, SplitSizesFullScaleArithmetic) {
  // Counting only: 24 classes x (1001, 501, 498).
  DatasetSpec s = small_spec();
  s.per_class = {1001, 501, 498};
  const int classes = function_count(s.suite);
  EXPECT_EQ(s.per_class.train * classes, 24024);
  EXPECT_EQ(s.per_class.val * classes, 12024);
  EXPECT_EQ(s.per_class.test * classes, 11952);
  EXPECT_EQ(30120 / classes, 1255);
  EXPECT_EQ(14760 / classes, 615);
}

TEST(BuildDataset, DeskScaleL1) {
  DatasetSpec s;
  s.per_class = {200, 0, 50};
  s.master_seed = 1;
  const auto d = build_dataset(s);
  EXPECT_EQ(d.train.size(), 4800u);
  EXPECT_EQ(d.val.size(), 0u);
  EXPECT_EQ(d.test.size(), 1200u);
  EXPECT_TRUE(is_class_balanced(d.train));
  EXPECT_TRUE(is_class_balanced(d.test));
  EXPECT_EQ(d.train.frame_size, 32);
}

TEST(BuildDataset, LabelsMatchImagesAndShapes) {
  const auto d = build_dataset(small_spec());
  for (const Dataset* ds : {&d.train, &d.val, &d.test}) {
    EXPECT_EQ(ds->images.size(), ds->labels.size());
    for (std::size_t i = 0; i < ds->size(); ++i) {
      EXPECT_EQ(ds->images[i].label, ds->labels[i]);
      EXPECT_EQ(ds->images[i].pixels.size(), 64u);
      EXPECT_GE(ds->labels[i], 0);
      EXPECT_LT(ds->labels[i], 24);
    }
    EXPECT_TRUE(is_class_balanced(*ds));
  }
}

TEST(BuildDataset, RegenerationAndJobIndependence) {
  const auto a = build_dataset(small_spec(Regime::L2), 1);
  const auto b = build_dataset(small_spec(Regime::L2), 3);
  EXPECT_EQ(a.train.content_digest(), b.train.content_digest());
  EXPECT_EQ(a.test.content_digest(), b.test.content_digest());
  EXPECT_EQ(a.train.manifest.digest, to_hex(a.train.content_digest()));
  auto other = small_spec(Regime::L2);
  other.master_seed = 78;
  EXPECT_NE(build_dataset(other).train.content_digest(), a.train.content_digest());
}

TEST(BuildDataset, L1UsesOneInstancePerClass) {
  const auto d = build_dataset(small_spec());
  std::map<int, std::set<std::uint64_t>> seen;
  for (const Dataset* ds : {&d.train, &d.val, &d.test})
    for (const auto& img : ds->images) seen[img.label].insert(img.instance_seed);
  for (const auto& [k, seeds] : seen) EXPECT_EQ(seeds.size(), 1u) << k;
  // Fresh sample points per replicate: no two images of one class coincide.
  std::set<std::vector<float>> distinct;
  for (const auto& img : d.train.images) distinct.insert(img.pixels);
  EXPECT_EQ(distinct.size(), d.train.size());
}

TEST(BuildDataset, L2CyclesInstancesAndTestsOnThem) {
  const auto spec = small_spec(Regime::L2);
  const auto d = build_dataset(spec);
  for (int k = 1; k <= 24; ++k) {
    const auto expected = training_instance_seeds(spec, k);
    std::set<std::uint64_t> train_seen, test_seen;
    for (const auto& img : d.train.images)
      if (img.label == k - 1) train_seen.insert(img.instance_seed);
    for (const auto& img : d.test.images)
      if (img.label == k - 1) test_seen.insert(img.instance_seed);
    EXPECT_EQ(train_seen, std::set<std::uint64_t>(expected.begin(), expected.end()));
    for (auto s : test_seen) EXPECT_TRUE(train_seen.contains(s));
  }
}

TEST(BuildDataset, L3TestInstancesAreDisjoint) {
  const auto spec = small_spec(Regime::L3);
  const auto d = build_dataset(spec);
  std::set<std::uint64_t> train_side, test_side;
  for (const Dataset* ds : {&d.train, &d.val})
    for (const auto& img : ds->images) train_side.insert(img.instance_seed);
  for (const auto& img : d.test.images) test_side.insert(img.instance_seed);
  for (auto s : test_side) EXPECT_FALSE(train_side.contains(s));
  for (int k = 1; k <= 24; ++k) {
    const auto unseen = unseen_instance_seeds(spec, k);
    EXPECT_EQ(unseen.size(), 2u);
    EXPECT_EQ(d.test.manifest.instance_seeds.at(k - 1), unseen);
  }
}

TEST(BuildDataset, DiscreteSuite) {
  DatasetSpec s = small_spec();
  s.suite = Suite::DiscretePB;
  s.encoder.dim = 4;  // square, so IsingTriangular is valid
  const auto d = build_dataset(s);
  EXPECT_EQ(d.train.class_count, 6);
  EXPECT_EQ(d.train.size(), 30u);
}

TEST(BuildDataset, CapacityErrorPropagates) {
  DatasetSpec s = small_spec();
  s.encoder.dim = 40;
  EXPECT_THROW(build_dataset(s), CapacityError);
}

TEST(BuildDataset, NoiseScopes) {
  auto clean_spec = small_spec();
  auto all = clean_spec;
  all.noise = {NoiseKind::UniformRange, -2.5, 2.5, false};
  auto test_only = all;
  test_only.noise.test_only = true;
  const auto c = build_dataset(clean_spec);
  const auto a = build_dataset(all);
  const auto t = build_dataset(test_only);
  EXPECT_NE(a.train.content_digest(), c.train.content_digest());
  EXPECT_EQ(t.train.content_digest(), c.train.content_digest());
  EXPECT_EQ(t.val.content_digest(), c.val.content_digest());
  EXPECT_NE(t.test.content_digest(), c.test.content_digest());
  EXPECT_EQ(t.test.labels, c.test.labels);
  EXPECT_EQ(t.test.manifest.noise_applied.size(), 1u);
  EXPECT_TRUE(t.train.manifest.noise_applied.empty());
}

TEST(FisherYates, HandEnumerationN3) {
  // Run the swaps by hand on the raw draws of the same stream.
  const std::uint64_t seed = 2024;
  Rng rng(seed);
  std::vector<std::size_t> p = {0, 1, 2};
  const auto j2 = rng.below(3);
  std::swap(p[2], p[j2]);
  const auto j1 = rng.below(2);
  std::swap(p[1], p[j1]);
  EXPECT_EQ(fisher_yates_permutation(3, seed), p);
}

TEST(FisherYates, UniformOverPermutations) {
  std::map<std::vector<std::size_t>, int> freq;
  const int trials = 60000;
  for (int s = 0; s < trials; ++s) ++freq[fisher_yates_permutation(3, static_cast<std::uint64_t>(s))];
  ASSERT_EQ(freq.size(), 6u);
  for (const auto& [perm, n] : freq) EXPECT_NEAR(n / static_cast<double>(trials), 1.0 / 6, 0.01);
}

TEST(FisherYates, EdgeSizes) {
  EXPECT_TRUE(fisher_yates_permutation(0, 1).empty());
  EXPECT_EQ(fisher_yates_permutation(1, 1), std::vector<std::size_t>{0});
}

TEST(ShuffleSync, PreservesPairsAndIsDeterministic) {
  const auto d = build_dataset(small_spec());
  auto imgs = d.train.images;
  auto labels = d.train.labels;
  shuffle_sync(imgs, labels, 5);
  Dataset shuffled = d.train;
  shuffled.images = imgs;
  shuffled.labels = labels;
  EXPECT_EQ(pairs(shuffled), pairs(d.train));
  auto imgs2 = d.train.images;
  auto labels2 = d.train.labels;
  shuffle_sync(imgs2, labels2, 5);
  EXPECT_EQ(labels, labels2);
  for (std::size_t i = 0; i < imgs.size(); ++i) EXPECT_EQ(imgs[i].label, labels[i]);
  labels2.pop_back();
  EXPECT_THROW(shuffle_sync(imgs2, labels2, 5), std::invalid_argument);
}

TEST(GaussianNoise, ZeroAmplitudeAndZeroImage) {
  std::vector<float> px = {1, -4, 2};
  Rng rng(1);
  apply_gaussian(px, gaussian_sigma(px, 0.0, 0.5), rng);
  EXPECT_EQ(px, (std::vector<float>{1, -4, 2}));
  EXPECT_DOUBLE_EQ(gaussian_sigma(px, 1.0, 0.5), 1.0);  // max is 2, not |-4|
  const std::vector<float> negative = {-3, -5};
  EXPECT_DOUBLE_EQ(gaussian_sigma(negative, 1.0, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(gaussian_sigma(std::vector<float>{}, 1.0, 0.5), 0.0);

  Dataset ds = tiny_dataset(6, 0.0f);
  const auto before = ds.content_digest();
  add_gaussian_noise(ds, 3);
  EXPECT_EQ(ds.content_digest(), before);
  EXPECT_EQ(ds.manifest.noise_applied.size(), 1u);
}

TEST(GaussianNoise, VarianceMatchesSigma) {
  std::vector<float> px(100000, 0.0f);
  Rng rng(8);
  apply_gaussian(px, 2.0, rng);
  double mean = 0;
  for (float v : px) mean += v;
  mean /= px.size();
  double var = 0;
  for (float v : px) var += (v - mean) * (v - mean);
  var /= (px.size() - 1);
  EXPECT_NEAR(var, 4.0, 0.05 * 4.0);
}

TEST(GaussianNoise, KeepsLabelsShapesAndSpec) {
  const auto d = build_dataset(small_spec());
  Dataset noisy = d.test;
  add_gaussian_noise(noisy, 4);
  EXPECT_EQ(noisy.labels, d.test.labels);
  for (const auto& img : noisy.images) {
    EXPECT_EQ(img.pixels.size(), 64u);
    for (float v : img.pixels) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(to_json(noisy.manifest.spec), to_json(d.test.manifest.spec));
  EXPECT_NE(noisy.manifest.digest, d.test.manifest.digest);
}

TEST(UniformNoise, IdentityRangeAndMean) {
  Dataset ds = tiny_dataset(4, 1.5f);
  const auto before = ds.content_digest();
  add_uniform_noise(ds, 0.0, 0.0, 1);
  EXPECT_EQ(ds.content_digest(), before);

  std::vector<float> px(100000, 0.0f);
  Rng rng(2);
  apply_uniform(px, -2.5, 2.5, rng);
  double mean = 0;
  for (float v : px) {
    EXPECT_GE(v, -2.5f);
    EXPECT_LE(v, 2.5f);
    mean += v;
  }
  EXPECT_NEAR(mean / px.size(), 0.0, 0.05);

  Dataset bad = tiny_dataset(2, 0.0f);
  EXPECT_THROW(add_uniform_noise(bad, 1.0, -1.0, 1), std::invalid_argument);
}

TEST(SaveLoad, RoundTrip) {
  const auto d = build_dataset(small_spec(Regime::L3));
  const auto path = scratch("round.limg");
  save(d.test, path);
  const Dataset back = load(path);
  EXPECT_EQ(back.content_digest(), d.test.content_digest());
  EXPECT_EQ(back.labels, d.test.labels);
  EXPECT_EQ(back.class_count, 24);
  EXPECT_EQ(back.frame_size, 8);
  EXPECT_EQ(back.manifest.split, "test");
  EXPECT_EQ(back.manifest.instance_seeds, d.test.manifest.instance_seeds);
  EXPECT_EQ(to_json(back.manifest.spec), to_json(d.test.manifest.spec));
  // Regenerating from the recorded spec reproduces the digest.
  const auto again = build_dataset(back.manifest.spec);
  EXPECT_EQ(again.test.manifest.digest, back.manifest.digest);
}

TEST(SaveLoad, HeaderLayout) {
  const auto d = build_dataset(small_spec());
  const auto path = scratch("header.limg");
  save(d.val, path);
  const auto bytes = slurp(path);
  ASSERT_GE(bytes.size(), 18u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "LIMG");
  auto u16 = [&](std::size_t at) {
    return static_cast<unsigned>(static_cast<unsigned char>(bytes[at]) |
                                 (static_cast<unsigned char>(bytes[at + 1]) << 8));
  };
  EXPECT_EQ(u16(4), 1u);
  EXPECT_EQ(u16(6), 8u);
  EXPECT_EQ(u16(8), 24u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[10]), 48);
  EXPECT_EQ(bytes.size(), 18u + 48u * (2u + 64u * 4u) + 32u);
}

TEST(SaveLoad, CorruptionIsDetected) {
  const auto d = build_dataset(small_spec());
  const auto path = scratch("corrupt.limg");
  save(d.test, path);
  auto bytes = slurp(path);

  auto expect_kind = [&](const std::vector<char>& b, DatasetError::Kind kind) {
    const auto p = scratch("mutant.limg");
    spit(p, b);
    fs::remove(fs::path(p.string() + ".json"));
    try {
      load(p);
      ADD_FAILURE() << "load accepted a damaged file";
    } catch (const DatasetError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };

  auto flipped = bytes;
  flipped[100] ^= 0x01;
  expect_kind(flipped, DatasetError::Kind::DigestMismatch);

  auto magic = bytes;
  magic[0] = 'X';
  expect_kind(magic, DatasetError::Kind::BadMagic);

  auto version = bytes;
  version[4] = 2;
  expect_kind(version, DatasetError::Kind::VersionMismatch);

  auto cut = bytes;
  cut.resize(bytes.size() - 40);
  expect_kind(cut, DatasetError::Kind::Truncated);
  expect_kind(std::vector<char>(bytes.begin(), bytes.begin() + 7), DatasetError::Kind::Truncated);
}

TEST(SaveLoad, EmptyDataset) {
  Dataset ds;
  ds.class_count = 24;
  ds.frame_size = 32;
  ds.manifest.digest = to_hex(ds.content_digest());
  const auto path = scratch("empty.limg");
  save(ds, path);
  const auto back = load(path);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back.content_digest(), ds.content_digest());
}

TEST(SaveLoad, MissingFile) {
  try {
    load(scratch("does-not-exist.limg"));
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::Io);
  }
}

TEST(Balance, DetectsImbalance) {
  Dataset ds = tiny_dataset(4, 0.0f);
  EXPECT_TRUE(is_class_balanced(ds));
  ds.labels = {0, 0, 0, 1};
  EXPECT_FALSE(is_class_balanced(ds));
}
