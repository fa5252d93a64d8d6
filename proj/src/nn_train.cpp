#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "limg/classifier.hpp"
#include "limg/digest.hpp"
#include "limg/rng.hpp"

namespace limg::nn {

namespace {

constexpr char kModelMagic[4] = {'L', 'M', 'D', 'L'};
constexpr std::uint16_t kModelVersion = 1;
constexpr Eigen::Index kEvalChunk = 512;

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<Matrix<float>> snapshot(const Network<float>& net) {
  std::vector<Matrix<float>> out;
  for (const auto* p : net.parameters()) out.push_back(*p);
  return out;
}

void restore(Network<float>& net, const std::vector<Matrix<float>>& params) {
  auto dst = net.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = params[i];
}

nlohmann::json shape_json(const Shape& s) { return {s.channels, s.height, s.width}; }
Shape shape_from(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be finite and non-negative");
  }
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
}

Matrix<float> to_batch(std::span<const LandscapeImage> images, PixelMode mode) {
  if (images.empty()) return {};
  const Eigen::Index features = static_cast<Eigen::Index>(images.front().pixels.size());
  Matrix<float> out(features, static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<Eigen::Index>(images[i].pixels.size()) != features) throw ShapeError("images differ in size");
    const Pixels px = finalize_pixels(images[i].pixels, mode);
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXf>(px.data(), features);
  }
  return out;
}

Matrix<float> to_batch(const Dataset& ds, PixelMode mode) { return to_batch(ds.images, mode); }

Evaluation evaluate_model(Network<float>& model, const Matrix<float>& batch, std::span<const int> labels) {
  Evaluation ev;
  const Eigen::Index n = batch.cols();
  if (n == 0) return ev;
  const bool labelled = !labels.empty();
  if (labelled && static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("label count differs from batch size");
  double loss = 0;
  std::size_t correct = 0;
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, n - start);
    const Matrix<float> logits = model.forward(batch.middleCols(start, len));
    const auto pred = argmax_columns(logits);
    for (Eigen::Index j = 0; j < len; ++j) {
      ev.predictions.push_back(pred[j]);
      if (!labelled) continue;
      const int y = labels[start + j];
      const auto col = logits.col(j).cast<double>();
      const double mx = col.maxCoeff();
      loss += mx + std::log((col.array() - mx).exp().sum()) - col(y);
      correct += pred[j] == y;
    }
  }
  if (labelled) {
    ev.loss = loss / n;
    ev.accuracy = static_cast<double>(correct) / n;
  }
  return ev;
}

std::vector<int> predict(Network<float>& model, const Dataset& ds, PixelMode mode) {
  return evaluate_model(model, to_batch(ds, mode), {}).predictions;
}

double TrainReport::selection_loss(const EpochRecord& r) const {
  return r.val_loss ? *r.val_loss : r.train_loss;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << fmt6(r.train_loss) << ',' << fmt6(r.train_accuracy) << ','
        << (r.val_loss ? fmt6(*r.val_loss) : "") << ',' << (r.val_accuracy ? fmt6(*r.val_accuracy) : "") << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

TrainResult train(Network<float> model, const Dataset& train_ds, const Dataset* val_ds, const TrainConfig& cfg) {
  cfg.validate();
  if (train_ds.size() == 0) throw std::invalid_argument("training set is empty");
  model.validate();
  const auto started = std::chrono::steady_clock::now();

  const Matrix<float> x = to_batch(train_ds, cfg.input_mode);
  const bool has_val = val_ds != nullptr && val_ds->size() > 0;
  const Matrix<float> xv = has_val ? to_batch(*val_ds, cfg.input_mode) : Matrix<float>{};
  const Eigen::Index n = x.cols();

  TrainReport report;
  auto best = snapshot(model);
  double best_loss = std::numeric_limits<double>::infinity();

  std::vector<Matrix<float>> velocity;
  if (cfg.momentum > 0) {
    for (const auto* p : model.parameters()) velocity.push_back(Matrix<float>::Zero(p->rows(), p->cols()));
  }
  const float lr = static_cast<float>(cfg.learning_rate);
  const float mu = static_cast<float>(cfg.momentum);

  Matrix<float> xb;
  Matrix<float> logits;
  std::vector<int> yb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto perm = fisher_yates_permutation(static_cast<std::size_t>(n),
                                               derive_seed(cfg.seed, {tag_of("epoch"), static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0;
    std::size_t correct = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
      xb.resize(x.rows(), len);
      yb.resize(len);
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto src = static_cast<Eigen::Index>(perm[start + j]);
        xb.col(j) = x.col(src);
        yb[j] = train_ds.labels[src];
      }
      const float loss = model.loss_and_grads(xb, yb, &logits);
      if (!std::isfinite(loss)) {
        throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", sample offset " +
                              std::to_string(start) + "; lower the learning rate");
      }
      loss_sum += static_cast<double>(loss) * len;
      const auto pred = argmax_columns(logits);
      for (Eigen::Index j = 0; j < len; ++j) correct += pred[j] == yb[j];

      auto params = model.parameters();
      auto grads = model.gradients();
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (velocity.empty()) {
          *params[i] -= lr * *grads[i];
        } else {
          velocity[i] = mu * velocity[i] + *grads[i];
          *params[i] -= lr * velocity[i];
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / n;
    rec.train_accuracy = static_cast<double>(correct) / n;
    if (has_val) {
      const auto ev = evaluate_model(model, xv, val_ds->labels);
      rec.val_loss = ev.loss;
      rec.val_accuracy = ev.accuracy;
    }
    report.epochs.push_back(rec);
    const double sel = report.selection_loss(rec);
    if (!std::isfinite(sel)) throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
    if (sel < best_loss) {
      best_loss = sel;
      report.best_epoch = epoch;
      best = snapshot(model);
    }
  }
  restore(model, best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

nlohmann::json topology(const Network<float>& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    if (const auto* d = std::get_if<Dense<float>>(&layer)) {
      layers.push_back({{"kind", "dense"}, {"in", d->weight.cols()}, {"out", d->weight.rows()}});
    } else if (const auto* c = std::get_if<Conv2d<float>>(&layer)) {
      layers.push_back({{"kind", "conv2d"}, {"in", shape_json(c->in)}, {"out_channels", c->out_channels}, {"kernel", c->kernel}});
    } else if (const auto* p = std::get_if<AvgPool<float>>(&layer)) {
      layers.push_back({{"kind", "avgpool2"}, {"in", shape_json(p->in)}});
    } else if (const auto* a = std::get_if<Act<float>>(&layer)) {
      layers.push_back({{"kind", "activation"}, {"fn", to_string(a->kind)}});
    } else {
      layers.push_back({{"kind", "flatten"}});
    }
  }
  return {
      {"preset", to_string(model.preset)},
      {"activation", to_string(model.activation)},
      {"input", shape_json(model.input)},
      {"class_count", model.class_count},
      {"init_seed", model.init_seed},
      {"parameter_count", model.parameter_count()},
      {"layers", layers},
  };
}

void save_model(const Network<float>& model, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(kModelMagic, kModelMagic + 4);
  auto put = [&](std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(kModelVersion, 2);
  const std::string desc = topology(model).dump();
  put(desc.size(), 4);
  buf.insert(buf.end(), desc.begin(), desc.end());
  put(model.parameter_count(), 8);
  for (const auto* p : model.parameters()) {
    for (Eigen::Index i = 0; i < p->size(); ++i) put(std::bit_cast<std::uint32_t>(p->data()[i]), 4);
  }
  const Digest digest = sha256(buf);
  buf.insert(buf.end(), digest.begin(), digest.end());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Network<float> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 4 + 2 + 4 + 8 + 32 || std::memcmp(data.data(), kModelMagic, 4) != 0) {
    throw std::runtime_error(path.string() + " is not a model checkpoint");
  }
  const std::span<const std::uint8_t> body(data.data(), data.size() - 32);
  Digest stored{};
  std::copy(data.end() - 32, data.end(), stored.begin());
  if (sha256(body) != stored) throw std::runtime_error("checkpoint digest mismatch in " + path.string());

  std::size_t pos = 4;
  auto get = [&](int width) {
    if (pos + width > body.size()) throw std::runtime_error("checkpoint is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(body[pos + i]) << (8 * i);
    pos += width;
    return v;
  };
  if (get(2) != kModelVersion) throw std::runtime_error("unsupported checkpoint version");
  const auto desc_len = get(4);
  if (pos + desc_len > body.size()) throw std::runtime_error("checkpoint is truncated");
  const auto desc = nlohmann::json::parse(body.begin() + pos, body.begin() + pos + desc_len);
  pos += desc_len;

  Network<float> net;
  net.preset = parse_preset(desc.at("preset").get<std::string>());
  net.activation = parse_activation(desc.at("activation").get<std::string>());
  net.input = shape_from(desc.at("input"));
  net.class_count = desc.at("class_count").get<int>();
  net.init_seed = desc.at("init_seed").get<std::uint64_t>();
  for (const auto& l : desc.at("layers")) {
    const auto kind = l.at("kind").get<std::string>();
    if (kind == "dense") {
      Dense<float> d;
      d.weight.resize(l.at("out").get<int>(), l.at("in").get<int>());
      d.bias.resize(d.weight.rows(), 1);
      net.layers.emplace_back(std::move(d));
    } else if (kind == "conv2d") {
      Conv2d<float> c;
      c.in = shape_from(l.at("in"));
      c.out_channels = l.at("out_channels").get<int>();
      c.kernel = l.at("kernel").get<int>();
      c.weight.resize(c.out_channels, c.in.channels * c.kernel * c.kernel);
      c.bias.resize(c.out_channels, 1);
      net.layers.emplace_back(std::move(c));
    } else if (kind == "avgpool2") {
      net.layers.emplace_back(AvgPool<float>{shape_from(l.at("in"))});
    } else if (kind == "activation") {
      net.layers.emplace_back(Act<float>{parse_activation(l.at("fn").get<std::string>()), {}});
    } else if (kind == "flatten") {
      net.layers.emplace_back(Flatten{});
    } else {
      throw std::runtime_error("unknown layer kind '" + kind + "' in checkpoint");
    }
  }
  if (get(8) != net.parameter_count()) throw std::runtime_error("checkpoint parameter count mismatch");
  for (auto* p : net.parameters()) {
    for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
  }
  net.validate();
  return net;
}

}  // namespace limg::nn
