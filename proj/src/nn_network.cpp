#include <cmath>
#include <limits>

#include "limg/classifier.hpp"
#include "limg/rng.hpp"

namespace limg::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// columns(row = (c*k + ky)*k + kx, col = oy*Wo + ox) = image(c, oy+ky, ox+kx)
template <typename T>
void im2col(const T* image, const Shape& in, int k, Matrix<T>& cols) {
  const int ho = in.height - k + 1;
  const int wo = in.width - k + 1;
  cols.resize(in.channels * k * k, ho * wo);
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const T* src = image + (c * in.height + oy + ky) * in.width + kx;
          for (int ox = 0; ox < wo; ++ox) cols(row, oy * wo + ox) = src[ox];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Matrix<T>& cols, const Shape& in, int k, T* image) {
  const int ho = in.height - k + 1;
  const int wo = in.width - k + 1;
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          T* dst = image + (c * in.height + oy + ky) * in.width + kx;
          for (int ox = 0; ox < wo; ++ox) dst[ox] += cols(row, oy * wo + ox);
        }
      }
    }
  }
}

template <typename T>
Matrix<T> forward_layer(Dense<T>& l, const Matrix<T>& x) {
  l.input = x;
  Matrix<T> y = l.weight * x;
  y.colwise() += l.bias.col(0);
  return y;
}

template <typename T>
Matrix<T> backward_layer(Dense<T>& l, const Matrix<T>& g) {
  l.grad_weight.noalias() = g * l.input.transpose();
  l.grad_bias = g.rowwise().sum();
  return l.weight.transpose() * g;
}

template <typename T>
Matrix<T> forward_layer(Conv2d<T>& l, const Matrix<T>& x) {
  const Shape o = l.out();
  const int spatial = o.height * o.width;
  const Eigen::Index batch = x.cols();
  l.columns.resize(batch);
  Matrix<T> y(o.size(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    im2col(x.col(b).data(), l.in, l.kernel, l.columns[b]);
    Matrix<T> r = l.weight * l.columns[b];  // out_channels x spatial
    r.colwise() += l.bias.col(0);
    Eigen::Map<Matrix<T>>(y.col(b).data(), spatial, o.channels) = r.transpose();
  }
  return y;
}

template <typename T>
Matrix<T> backward_layer(Conv2d<T>& l, const Matrix<T>& g) {
  const Shape o = l.out();
  const int spatial = o.height * o.width;
  l.grad_weight.setZero(l.weight.rows(), l.weight.cols());
  l.grad_bias.setZero(l.bias.rows(), 1);
  Matrix<T> dx = Matrix<T>::Zero(l.in.size(), g.cols());
  for (Eigen::Index b = 0; b < g.cols(); ++b) {
    const Matrix<T> dy =
        Eigen::Map<const Matrix<T>>(g.col(b).data(), spatial, o.channels).transpose();
    l.grad_weight.noalias() += dy * l.columns[b].transpose();
    l.grad_bias += dy.rowwise().sum();
    const Matrix<T> dcols = l.weight.transpose() * dy;
    col2im_add(dcols, l.in, l.kernel, dx.col(b).data());
  }
  return dx;
}

template <typename T>
Matrix<T> forward_layer(AvgPool<T>& l, const Matrix<T>& x) {
  const Shape o = l.out();
  Matrix<T> y(o.size(), x.cols());
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    const T* src = x.col(b).data();
    T* dst = y.col(b).data();
    for (int c = 0; c < o.channels; ++c) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          const T* p = src + (c * l.in.height + 2 * oy) * l.in.width + 2 * ox;
          dst[(c * o.height + oy) * o.width + ox] = (p[0] + p[1] + p[l.in.width] + p[l.in.width + 1]) / T(4);
        }
      }
    }
  }
  return y;
}

template <typename T>
Matrix<T> backward_layer(AvgPool<T>& l, const Matrix<T>& g) {
  const Shape o = l.out();
  Matrix<T> dx = Matrix<T>::Zero(l.in.size(), g.cols());
  for (Eigen::Index b = 0; b < g.cols(); ++b) {
    const T* src = g.col(b).data();
    T* dst = dx.col(b).data();
    for (int c = 0; c < o.channels; ++c) {
      for (int oy = 0; oy < o.height; ++oy) {
        for (int ox = 0; ox < o.width; ++ox) {
          const T v = src[(c * o.height + oy) * o.width + ox] / T(4);
          T* p = dst + (c * l.in.height + 2 * oy) * l.in.width + 2 * ox;
          p[0] += v;
          p[1] += v;
          p[l.in.width] += v;
          p[l.in.width + 1] += v;
        }
      }
    }
  }
  return dx;
}

template <typename T>
Matrix<T> forward_layer(Act<T>& l, const Matrix<T>& x) {
  if (l.kind == Activation::ReLU) {
    l.output = x.cwiseMax(T(0));
  } else {
    l.output = x.array().tanh().matrix();
  }
  return l.output;
}

template <typename T>
Matrix<T> backward_layer(Act<T>& l, const Matrix<T>& g) {
  if (l.kind == Activation::ReLU) {
    return (l.output.array() > T(0)).select(g, T(0));
  }
  return (g.array() * (T(1) - l.output.array().square())).matrix();
}

template <typename T>
Matrix<T> forward_layer(Flatten&, const Matrix<T>& x) {
  return x;
}

template <typename T>
Matrix<T> backward_layer(Flatten&, const Matrix<T>& g) {
  return g;
}

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string("non-finite ") + what);
}

// Parameters are drawn in double precision so float and double models built
// from one seed agree up to rounding.
void init_uniform(Matrix<float>& m, double limit, Rng& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<float>(rng.uniform(-limit, limit));
}

double init_limit(int fan_in, Activation act) {
  return std::sqrt((act == Activation::ReLU ? 6.0 : 3.0) / fan_in);
}

Dense<float> make_dense(int in, int out, Activation act, Rng& rng) {
  Dense<float> d;
  d.weight.resize(out, in);
  init_uniform(d.weight, init_limit(in, act), rng);
  d.bias = Matrix<float>::Zero(out, 1);
  return d;
}

Conv2d<float> make_conv(Shape in, int out_channels, int kernel, Activation act, Rng& rng) {
  Conv2d<float> c;
  c.in = in;
  c.out_channels = out_channels;
  c.kernel = kernel;
  const int fan_in = in.channels * kernel * kernel;
  c.weight.resize(out_channels, fan_in);
  init_uniform(c.weight, init_limit(fan_in, act), rng);
  c.bias = Matrix<float>::Zero(out_channels, 1);
  return c;
}

}  // namespace

std::string_view to_string(Preset preset) {
  switch (preset) {
    case Preset::Perceptron1: return "perceptron1";
    case Preset::Perceptron3: return "perceptron3";
    case Preset::LeNet5Like: return "lenet5";
  }
  return "?";
}

std::string_view to_string(Activation act) { return act == Activation::ReLU ? "relu" : "tanh"; }

Preset parse_preset(std::string_view text) {
  if (text == "perceptron1" || text == "Perceptron1") return Preset::Perceptron1;
  if (text == "perceptron3" || text == "Perceptron3") return Preset::Perceptron3;
  if (text == "lenet5" || text == "LeNet5Like") return Preset::LeNet5Like;
  throw std::invalid_argument("unknown model preset '" + std::string(text) + "'");
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::ReLU;
  if (text == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + std::string(text) + "'");
}

template <typename T>
Matrix<T> Network<T>::forward(const Matrix<T>& batch) {
  if (batch.rows() != input.size()) {
    throw ShapeError("batch has " + std::to_string(batch.rows()) + " features, model expects " +
                     std::to_string(input.size()));
  }
  check_finite(batch, "input");
  Matrix<T> x = batch;
  for (auto& layer : layers) {
    x = std::visit([&](auto& l) { return forward_layer<T>(l, x); }, layer);
  }
  return x;
}

template <typename T>
Matrix<T> softmax(const Matrix<T>& logits) {
  Matrix<T> p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    auto col = p.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return p;
}

template <typename T>
std::vector<int> argmax_columns(const Matrix<T>& logits) {
  std::vector<int> out(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    int best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i) {
      if (logits(i, j) > logits(best, j)) best = static_cast<int>(i);
    }
    out[j] = best;
  }
  return out;
}

template <typename T>
T Network<T>::loss_and_grads(const Matrix<T>& batch, std::span<const int> labels, Matrix<T>* logits_out) {
  if (static_cast<Eigen::Index>(labels.size()) != batch.cols()) {
    throw ShapeError("label count differs from batch size");
  }
  for (int l : labels) {
    if (l < 0 || l >= class_count) throw std::out_of_range("label " + std::to_string(l) + " out of range");
  }
  const Matrix<T> logits = forward(batch);
  const Eigen::Index n = batch.cols();
  Matrix<T> grad = softmax(logits);
  T loss = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    // log-sum-exp form keeps the loss finite for confident wrong predictions.
    const auto col = logits.col(j);
    const T mx = col.maxCoeff();
    const T lse = mx + std::log((col.array() - mx).exp().sum());
    loss += lse - col(labels[j]);
    grad(labels[j], j) -= T(1);
  }
  grad /= static_cast<T>(n);
  if (logits_out != nullptr) *logits_out = logits;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    grad = std::visit([&](auto& l) { return backward_layer<T>(l, grad); }, *it);
  }
  return loss / static_cast<T>(n);
}

template <typename T>
std::vector<Matrix<T>*> Network<T>::parameters() {
  std::vector<Matrix<T>*> out;
  for (auto& layer : layers) {
    std::visit(overloaded{[&](Dense<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                          [&](Conv2d<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                          [](auto&) {}},
               layer);
  }
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> Network<T>::parameters() const {
  std::vector<const Matrix<T>*> out;
  for (const auto& layer : layers) {
    std::visit(overloaded{[&](const Dense<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                          [&](const Conv2d<T>& l) { out.insert(out.end(), {&l.weight, &l.bias}); },
                          [](const auto&) {}},
               layer);
  }
  return out;
}

template <typename T>
std::vector<Matrix<T>*> Network<T>::gradients() {
  std::vector<Matrix<T>*> out;
  for (auto& layer : layers) {
    std::visit(overloaded{[&](Dense<T>& l) { out.insert(out.end(), {&l.grad_weight, &l.grad_bias}); },
                          [&](Conv2d<T>& l) { out.insert(out.end(), {&l.grad_weight, &l.grad_bias}); },
                          [](auto&) {}},
               layer);
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

template <typename T>
Shape Network<T>::output_shape_of(std::size_t layer_count) const {
  Shape s = input;
  for (std::size_t i = 0; i < layer_count && i < layers.size(); ++i) {
    s = std::visit(overloaded{[&](const Dense<T>& l) { return Shape{static_cast<int>(l.weight.rows()), 1, 1}; },
                              [&](const Conv2d<T>& l) { return l.out(); },
                              [&](const AvgPool<T>& l) { return l.out(); },
                              [&](const Flatten&) { return Shape{s.size(), 1, 1}; },
                              [&](const Act<T>&) { return s; }},
                   layers[i]);
  }
  return s;
}

template <typename T>
void Network<T>::validate() const {
  Shape s = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool ok = std::visit(
        overloaded{[&](const Dense<T>& l) { return l.weight.cols() == s.size() && l.bias.rows() == l.weight.rows(); },
                   [&](const Conv2d<T>& l) {
                     return l.in == s && l.out().height >= 1 && l.out().width >= 1 &&
                            l.weight.cols() == l.in.channels * l.kernel * l.kernel;
                   },
                   [&](const AvgPool<T>& l) { return l.in == s && l.out().height >= 1; },
                   [](const auto&) { return true; }},
        layers[i]);
    if (!ok) throw ShapeError("layer " + std::to_string(i) + " does not fit its input");
    s = output_shape_of(i + 1);
  }
  if (s.size() != class_count) throw ShapeError("network head does not match the class count");
  for (const auto* p : parameters()) {
    if (!p->allFinite()) throw ShapeError("non-finite parameter");
  }
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out;
  out.preset = preset;
  out.activation = activation;
  out.input = input;
  out.class_count = class_count;
  out.init_seed = init_seed;
  for (const auto& layer : layers) {
    out.layers.push_back(std::visit(
        overloaded{[](const Dense<T>& l) -> Layer<U> {
                     Dense<U> d;
                     d.weight = l.weight.template cast<U>();
                     d.bias = l.bias.template cast<U>();
                     return d;
                   },
                   [](const Conv2d<T>& l) -> Layer<U> {
                     Conv2d<U> c;
                     c.in = l.in;
                     c.out_channels = l.out_channels;
                     c.kernel = l.kernel;
                     c.weight = l.weight.template cast<U>();
                     c.bias = l.bias.template cast<U>();
                     return c;
                   },
                   [](const AvgPool<T>& l) -> Layer<U> { return AvgPool<U>{l.in}; },
                   [](const Act<T>& l) -> Layer<U> { return Act<U>{l.kind, {}}; },
                   [](const Flatten&) -> Layer<U> { return Flatten{}; }},
        layer));
  }
  return out;
}

Network<float> init_model(Preset preset, int class_count, int frame_size, std::uint64_t seed,
                          Activation activation) {
  if (class_count < 1) throw ShapeError("class count must be positive");
  if (frame_size < 1) throw ShapeError("frame size must be positive");
  Network<float> net;
  net.preset = preset;
  net.activation = activation;
  net.input = {1, frame_size, frame_size};
  net.class_count = class_count;
  net.init_seed = seed;
  Rng rng(seed);
  const int pixels = frame_size * frame_size;
  auto act = [&] { return Act<float>{activation, {}}; };
  switch (preset) {
    case Preset::Perceptron1:
      net.layers.emplace_back(make_dense(pixels, class_count, activation, rng));
      break;
    case Preset::Perceptron3:
      net.layers.emplace_back(make_dense(pixels, 256, activation, rng));
      net.layers.emplace_back(act());
      net.layers.emplace_back(make_dense(256, 128, activation, rng));
      net.layers.emplace_back(act());
      net.layers.emplace_back(make_dense(128, class_count, activation, rng));
      break;
    case Preset::LeNet5Like: {
      // (M-4)/2 must leave room for the second 5x5 convolution and pooling.
      if (frame_size < 16) {
        throw ShapeError("LeNet5Like needs M >= 16, got " + std::to_string(frame_size));
      }
      Shape s = net.input;
      auto conv1 = make_conv(s, 6, 5, activation, rng);
      s = conv1.out();
      net.layers.emplace_back(std::move(conv1));
      net.layers.emplace_back(act());
      net.layers.emplace_back(AvgPool<float>{s});
      s = AvgPool<float>{s}.out();
      auto conv2 = make_conv(s, 16, 5, activation, rng);
      s = conv2.out();
      net.layers.emplace_back(std::move(conv2));
      net.layers.emplace_back(act());
      net.layers.emplace_back(AvgPool<float>{s});
      s = AvgPool<float>{s}.out();
      net.layers.emplace_back(Flatten{});
      net.layers.emplace_back(make_dense(s.size(), 120, activation, rng));
      net.layers.emplace_back(act());
      net.layers.emplace_back(make_dense(120, 84, activation, rng));
      net.layers.emplace_back(act());
      net.layers.emplace_back(make_dense(84, class_count, activation, rng));
      break;
    }
  }
  net.validate();
  return net;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Matrix<float> softmax(const Matrix<float>&);
template Matrix<double> softmax(const Matrix<double>&);
template std::vector<int> argmax_columns(const Matrix<float>&);
template std::vector<int> argmax_columns(const Matrix<double>&);

}  // namespace limg::nn
