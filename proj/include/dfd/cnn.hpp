#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfd/spectral.hpp"

namespace dfd {

struct Shape3 {
  std::size_t h = 0, w = 0, c = 0;

  std::size_t size() const { return h * w * c; }
  bool operator==(const Shape3&) const = default;
  std::string str() const;
};

enum class LayerKind { conv, relu, max_pool, fully_connected, softmax };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;  // conv filters / fully-connected outputs
  std::size_t kh = 0, kw = 0;
  std::size_t pad = 0;
  std::size_t sh = 1, sw = 1;

  static LayerSpec conv(std::size_t filters, std::size_t k, std::size_t pad = 1, std::size_t stride = 1);
  static LayerSpec relu();
  static LayerSpec max_pool(std::size_t kh, std::size_t kw, std::size_t sh, std::size_t sw);
  static LayerSpec fully_connected(std::size_t units);
  static LayerSpec softmax();
};

/// Layer stack with an input shape (frames, bins, channels). Max-pool
/// windows that run past the border are clipped, so every layer keeps a
/// positive size.
struct CnnArch {
  Shape3 input;
  int n_classes = 0;
  std::vector<LayerSpec> layers;

  /// Conv-ReLU-Pool x2, FC-ReLU, FC, softmax. The defaults give the
  /// 32-filter / 4x8-pool / 64-unit network; FC input sizes follow from
  /// the input shape.
  static CnnArch standard(Shape3 input, int n_classes, std::size_t filters = 32, std::size_t fc_units = 64,
                          std::size_t pool_h = 4, std::size_t pool_w = 8);

  /// Output shape of every layer; throws ArchError when the stack is invalid.
  std::vector<Shape3> output_shapes() const;
  void validate() const;
  std::string describe() const;
};

/// Clipped pooling output length: ceil(max(in - k, 0) / s) + 1.
std::size_t pooled_extent(std::size_t in, std::size_t k, std::size_t s);

std::size_t count_params(const CnnArch& arch, bool include_biases);
/// Multiplies in convolution layers only: out_h * out_w * out_c * k_h * k_w * in_c.
std::size_t conv_flops(const CnnArch& arch);

enum class Precision { f32, f64 };

/// Location of one weight or bias tensor inside the flat parameter vector.
struct ParamBlock {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool is_bias = false;
};

std::vector<ParamBlock> param_blocks(const CnnArch& arch);

/// Network parameters. In f32 mode every stored value is a float and all
/// arithmetic runs in float; f64 mode keeps and computes everything in double.
struct CnnModel {
  CnnArch arch;
  Precision precision = Precision::f32;
  std::uint64_t seed = 0;
  std::vector<double> params;
};

/// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases 0.
CnnModel init_network(const CnnArch& arch, std::uint64_t seed, Precision precision = Precision::f32);

/// Class probabilities, one row per tensor.
std::vector<std::vector<double>> forward(const CnnModel& model, std::span<const SpectroTensor> batch);
std::vector<int> predict(const CnnModel& model, std::span<const SpectroTensor> batch);

struct LossGrad {
  double loss = 0.0;            // mean cross-entropy over the batch
  std::vector<double> grads;    // shaped like CnnModel::params
  std::size_t correct = 0;      // argmax hits in the batch
};

LossGrad loss_and_grad(const CnnModel& model, std::span<const SpectroTensor> batch, std::span<const int> labels);
LossGrad loss_and_grad(const CnnModel& model, std::span<const SpectroTensor* const> batch,
                       std::span<const int> labels);

struct OptimizerState {
  std::vector<double> velocity;
  std::size_t iteration = 0;
};

/// g' = g + decay * theta (weights only); v = momentum * v + g'; theta -= lr * v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                       double momentum, double decay, std::span<const ParamBlock> blocks);

struct TrainConfig {
  double lr0 = 0.01;
  std::size_t lr_step = 2500;  // halve the rate every lr_step iterations
  double lr_factor = 0.5;
  double momentum = 0.9;
  double weight_decay = 5e-6;
  std::size_t batch = 256;
  std::size_t iterations = 10000;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;

  /// 2000 iterations of 64, schedule compressed to the same four stages.
  static TrainConfig desk();
  double lr_at(std::size_t iteration) const;
  void validate() const;
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainResult {
  CnnModel model;
  std::vector<TrainLogRow> log;
};

/// Mini-batch SGD with momentum. Batches come from a seeded reshuffle each
/// epoch, or are drawn with replacement when the set is smaller than a batch.
TrainResult train_cnn(CnnModel model, std::span<const SpectroTensor> tensors, std::span<const int> labels,
                      const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& on_log = {});

void write_train_log(const std::filesystem::path& path, std::span<const TrainLogRow> log);

void save_cnn(const std::filesystem::path& path, const CnnModel& model);
CnnModel load_cnn(const std::filesystem::path& path);

}  // namespace dfd
