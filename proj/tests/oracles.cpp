#include "oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "limg/digest.hpp"
#include "limg/functions.hpp"
#include "limg/rng.hpp"

namespace limg::oracle {

namespace {

static_assert(std::endian::native == std::endian::little, "golden files are little endian");

void fill(nn::Matrix<float>& m, Rng& rng, double limit) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<float>(rng.uniform(-limit, limit));
}

nn::Dense<float> dense(int in, int out, Rng& rng) {
  nn::Dense<float> d;
  d.weight.resize(out, in);
  d.bias.resize(out, 1);
  fill(d.weight, rng, 0.8);
  fill(d.bias, rng, 0.5);
  return d;
}

double mean_loss(nn::Network<double>& net, const nn::Matrix<double>& batch, const std::vector<int>& labels) {
  // Plain softmax cross-entropy from the logits.
  const nn::Matrix<double> logits = net.forward(batch);
  double total = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    double mx = logits.col(j).maxCoeff();
    double s = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) s += std::exp(logits(i, j) - mx);
    total += mx + std::log(s) - logits(labels[static_cast<std::size_t>(j)], j);
  }
  return total / static_cast<double>(logits.cols());
}

}  // namespace

nn::Network<float> random_small_net(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag_of("grad-net")}));
  nn::Network<float> net;
  const int channels = 1 + static_cast<int>(rng.below(2));
  const int side = 6 + static_cast<int>(rng.below(3));
  const int out_channels = 2 + static_cast<int>(rng.below(2));
  const int hidden = 3 + static_cast<int>(rng.below(4));
  const int classes = 2 + static_cast<int>(rng.below(3));
  const auto first = seed % 2 == 0 ? nn::Activation::ReLU : nn::Activation::Tanh;
  const auto second = seed % 2 == 0 ? nn::Activation::Tanh : nn::Activation::ReLU;

  net.input = {channels, side, side};
  net.class_count = classes;

  nn::Conv2d<float> conv;
  conv.in = net.input;
  conv.out_channels = out_channels;
  conv.kernel = 3;
  conv.weight.resize(out_channels, channels * 9);
  conv.bias.resize(out_channels, 1);
  fill(conv.weight, rng, 0.8);
  fill(conv.bias, rng, 0.5);
  const nn::Shape pooled_in = conv.out();
  net.layers.emplace_back(std::move(conv));
  net.layers.emplace_back(nn::Act<float>{first, {}});
  net.layers.emplace_back(nn::AvgPool<float>{pooled_in});
  net.layers.emplace_back(nn::Flatten{});
  const int flat = pooled_in.channels * (pooled_in.height / 2) * (pooled_in.width / 2);
  net.layers.emplace_back(dense(flat, hidden, rng));
  net.layers.emplace_back(nn::Act<float>{second, {}});
  net.layers.emplace_back(dense(hidden, classes, rng));
  net.validate();
  return net;
}

GradCheck check_gradients(const nn::Network<float>& net, const nn::Matrix<float>& batch,
                          const std::vector<int>& labels) {
  nn::Network<float> f = net;
  f.loss_and_grads(batch, labels);
  std::vector<nn::Matrix<float>> analytic;
  for (auto* g : f.gradients()) analytic.push_back(*g);

  nn::Network<double> d = net.cast<double>();
  const nn::Matrix<double> xb = batch.cast<double>();
  auto params = d.parameters();
  GradCheck out;
  out.tensors = params.size();
  constexpr double h = 1e-6;
  for (std::size_t p = 0; p < params.size(); ++p) {
    nn::Matrix<double>& w = *params[p];
    nn::Matrix<double> numeric(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + h;
      const double up = mean_loss(d, xb, labels);
      w.data()[i] = saved - h;
      const double down = mean_loss(d, xb, labels);
      w.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const nn::Matrix<double> a = analytic[p].cast<double>();
    const double scale = std::max({a.norm(), numeric.norm(), 1e-8});
    const double rel = (a - numeric).norm() / scale;
    if (rel >= out.worst_relative_error) {
      out.worst_relative_error = rel;
      out.worst_tensor = "tensor " + std::to_string(p);
    }
  }
  return out;
}

GradCheck gradient_trial(std::uint64_t seed) {
  const auto net = random_small_net(seed);
  Rng rng(derive_seed(seed, {tag_of("grad-batch")}));
  nn::Matrix<float> batch(net.input.size(), 3);
  fill(batch, rng, 1.0);
  std::vector<int> labels;
  for (int j = 0; j < 3; ++j) labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(net.class_count))));
  return check_gradients(net, batch, labels);
}

eval::MetricsReport brute_force_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                                        int classes) {
  eval::MetricsReport r;
  std::uint64_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  r.overall_accuracy = truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
  for (int k = 0; k < classes; ++k) {
    std::uint64_t tp = 0, support = 0, claimed = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == k) ++support;
      if (predicted[i] == k) ++claimed;
      if (truth[i] == k && predicted[i] == k) ++tp;
    }
    eval::ClassMetrics m;
    m.support = support;
    m.precision = claimed == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(claimed);
    m.recall = support == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(support);
    m.accuracy = m.recall;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (support == 0) r.warnings.push_back("class " + std::to_string(k) + " has no support");
    r.per_class.push_back(m);
  }
  return r;
}

bool same_metrics(const eval::MetricsReport& a, const eval::MetricsReport& b) {
  if (a.per_class.size() != b.per_class.size() || a.overall_accuracy != b.overall_accuracy) return false;
  if (a.warnings != b.warnings) return false;
  for (std::size_t k = 0; k < a.per_class.size(); ++k) {
    const auto& x = a.per_class[k];
    const auto& y = b.per_class[k];
    if (x.accuracy != y.accuracy || x.precision != y.precision || x.recall != y.recall || x.f1 != y.f1 ||
        x.support != y.support) {
      return false;
    }
  }
  return true;
}

std::filesystem::path golden_dir() { return LIMG_GOLDEN_DIR; }

std::vector<HandCase> hand_cases() {
  // x1=(0.1,0.2)->5, x2=(0.3,0.4)->7, x3=(0.5,0.6)->9, x4=(0.7,0.8)->11,
  // f(0)=1, f(e1)=2, f(e2)=3.
  const std::vector<std::vector<double>> xs = {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}, {0.7, 0.8}};
  const std::vector<double> ys = {5, 7, 9, 11};
  const ProbeValues probes{1.0, {2.0, 3.0}};
  std::vector<HandCase> out;
  auto add = [&](ImageType t, int n) {
    HandCase c;
    c.type = t;
    c.cfg.frame_size = 4;
    c.cfg.dim = 2;
    c.cfg.sample_size = n;
    c.cfg.type = t;
    const auto used = static_cast<std::size_t>(random_sample_count(c.cfg));
    c.samples.assign(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(used));
    c.values.assign(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(used));
    c.probes = probes;
    out.push_back(c);
  };
  add(ImageType::Type1, 2);
  add(ImageType::Type2, 2);
  add(ImageType::Type3, 1);
  add(ImageType::Type4, 1);
  add(ImageType::Type5, 2);
  return out;
}

std::vector<float> read_f32(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw std::runtime_error("odd size " + path.string());
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<GoldenImageKey> golden_image_keys() {
  std::vector<GoldenImageKey> keys;
  for (int t = 1; t <= 5; ++t) {
    for (int k : {1, 10, 15, 21, 24}) {
      keys.push_back({t, k, static_cast<std::uint64_t>(1000 + k), static_cast<std::uint64_t>(100 * t + k)});
    }
  }
  return keys;
}

LandscapeImage golden_image(const GoldenImageKey& key) {
  EncoderConfig cfg;
  cfg.dim = 22;
  cfg.sample_size = 24;
  cfg.frame_size = 32;
  cfg.type = static_cast<ImageType>(key.type);
  const auto inst = make_instance(problem(Suite::ContinuousBBOB, key.function), 22, key.instance_seed);
  return construct_image(inst, cfg, key.sample_seed);
}

std::string pixel_digest(const Pixels& pixels) {
  std::vector<std::uint8_t> bytes(pixels.size() * sizeof(float));
  std::memcpy(bytes.data(), pixels.data(), bytes.size());
  return to_hex(sha256(bytes));
}

std::map<std::pair<int, int>, std::string> read_digest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::pair<int, int>, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int t = 0, k = 0;
    std::string hex;
    if (!(ls >> t >> k >> hex)) throw std::runtime_error("bad digest line: " + line);
    out[{t, k}] = hex;
  }
  return out;
}

}  // namespace limg::oracle
