#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "limg/dataset.hpp"
#include "limg/encoder.hpp"

namespace limg::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

enum class Preset { Perceptron1, Perceptron3, LeNet5Like };
enum class Activation { ReLU, Tanh };

std::string_view to_string(Preset preset);
std::string_view to_string(Activation act);
Preset parse_preset(std::string_view text);
Activation parse_activation(std::string_view text);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Channel-major feature layout: index = c*H*W + y*W + x.
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;
  int size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Batches and activations are feature x batch matrices, one column per image.

template <typename T>
struct Dense {
  Matrix<T> weight;  // out x in
  Matrix<T> bias;    // out x 1
  Matrix<T> grad_weight;
  Matrix<T> grad_bias;
  Matrix<T> input;
};

// Valid convolution, stride 1, square kernel.
template <typename T>
struct Conv2d {
  Shape in;
  int out_channels = 0;
  int kernel = 0;
  Matrix<T> weight;  // out_channels x (in.channels * kernel * kernel)
  Matrix<T> bias;    // out_channels x 1
  Matrix<T> grad_weight;
  Matrix<T> grad_bias;
  std::vector<Matrix<T>> columns;  // im2col per batch element

  Shape out() const { return {out_channels, in.height - kernel + 1, in.width - kernel + 1}; }
};

// 2x2 average pooling, stride 2.
template <typename T>
struct AvgPool {
  Shape in;
  Shape out() const { return {in.channels, in.height / 2, in.width / 2}; }
};

template <typename T>
struct Act {
  Activation kind = Activation::ReLU;
  Matrix<T> output;
};

// Marks the convolution-to-dense boundary; the storage layout is already flat.
struct Flatten {};

template <typename T>
using Layer = std::variant<Dense<T>, Conv2d<T>, AvgPool<T>, Act<T>, Flatten>;

template <typename T>
class Network {
 public:
  Preset preset = Preset::Perceptron1;
  Activation activation = Activation::ReLU;
  Shape input;
  int class_count = 0;
  std::uint64_t init_seed = 0;
  std::vector<Layer<T>> layers;

  // Logits, class_count x batch.
  Matrix<T> forward(const Matrix<T>& batch);

  // Mean softmax cross-entropy; leaves gradients in the layers. Optionally
  // hands back the logits of the forward pass.
  T loss_and_grads(const Matrix<T>& batch, std::span<const int> labels, Matrix<T>* logits = nullptr);

  // Weight and bias tensors in layer order.
  std::vector<Matrix<T>*> parameters();
  std::vector<const Matrix<T>*> parameters() const;
  std::vector<Matrix<T>*> gradients();

  std::size_t parameter_count() const;
  Shape output_shape_of(std::size_t layer_count) const;

  // Same topology and parameters in another scalar type.
  template <typename U>
  Network<U> cast() const;

  // Checks that consecutive layer shapes agree and the head has class_count outputs.
  void validate() const;
};

// Deterministic fan-in scaled uniform initialisation. The convolutional
// preset needs M >= 16 for two 5x5 convolutions and two 2x2 poolings.
Network<float> init_model(Preset preset, int class_count, int frame_size, std::uint64_t seed,
                          Activation activation = Activation::ReLU);

template <typename T>
Matrix<T> softmax(const Matrix<T>& logits);

// Argmax per column, ties to the lowest class index.
template <typename T>
std::vector<int> argmax_columns(const Matrix<T>& logits);

// Stacks images (after finalize_pixels) into an M*M x n matrix.
Matrix<float> to_batch(const Dataset& ds, PixelMode mode);
Matrix<float> to_batch(std::span<const LandscapeImage> images, PixelMode mode);

enum class CheckpointPolicy { MinLoss };

struct TrainConfig {
  double learning_rate = 0.01;
  int batch_size = 64;
  int epochs = 100;
  std::uint64_t seed = 0;
  CheckpointPolicy checkpoint_policy = CheckpointPolicy::MinLoss;
  PixelMode input_mode = PixelMode::MinMaxPerImage;
  double momentum = 0.0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 means the initial parameters were never beaten
  double wall_seconds = 0.0;

  // Loss the checkpoint policy ranks epochs by.
  double selection_loss(const EpochRecord& r) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  Network<float> best;
  TrainReport report;
};

// Minibatch SGD with seeded per-epoch reshuffling; keeps the parameters of the
// epoch with minimal validation loss (training loss when `val` is empty).
TrainResult train(Network<float> model, const Dataset& train_ds, const Dataset* val_ds,
                  const TrainConfig& cfg);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

Evaluation evaluate_model(Network<float>& model, const Matrix<float>& batch, std::span<const int> labels);

std::vector<int> predict(Network<float>& model, const Dataset& ds, PixelMode mode);

// "LMDL" checkpoint: version, JSON topology descriptor, float32 parameters, SHA-256.
void save_model(const Network<float>& model, const std::filesystem::path& path);
Network<float> load_model(const std::filesystem::path& path);
nlohmann::json topology(const Network<float>& model);

}  // namespace limg::nn
