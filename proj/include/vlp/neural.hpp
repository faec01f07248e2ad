#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "vlp/fingerprint.hpp"

namespace vlp {

enum class Architecture { mlp, cnn, unet, dense };
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

enum class LayerKind {
  dense,    // fully connected
  conv3x3,  // 3x3 kernel, same padding, on the 3x3 detector grid
  concat,   // channel concatenation of grid tensors
  grid,     // reshape the 9-vector into a 1-channel 3x3 grid (detector index = row * 3 + column)
  flatten,  // grid tensor -> vector, position-major
};
enum class Activation { relu, linear };

struct LayerDesc {
  LayerKind kind = LayerKind::dense;
  int units = 0;  // dense width or conv filter count
  Activation activation = Activation::relu;
  std::vector<int> inputs;  // earlier layer indices; -1 is the network input
};

/// Layer graph in topological order; the last layer is the output.
struct ModelSpec {
  Architecture architecture = Architecture::dense;
  std::vector<LayerDesc> layers;
  int input_dim = kDetectorCount;
  int output_dim = 2;

  /// Dense 9 -> hidden... -> 2.
  static ModelSpec mlp(const std::vector<int>& hidden = {64, 256, 64, 256});
  /// Custom dense stack (e.g. the shallow 64 x 256 baseline).
  static ModelSpec dense_stack(const std::vector<int>& hidden);
  static ModelSpec cnn(const std::vector<int>& filters = {32, 64, 128},
                       const std::vector<int>& hidden = {64, 256, 64, 256});
  /// Encoder convs, then decoder convs where decoder stage i >= 2 also receives the encoder output
  /// of the mirrored stage, then a flatten and the dense head.
  static ModelSpec unet(const std::vector<int>& encoder = {32, 64, 128}, const std::vector<int>& decoder = {128, 64, 32},
                        const std::vector<int>& hidden = {64, 256, 64, 256});
  static ModelSpec for_architecture(Architecture a);

  /// Channel count and spatial size (1 or 9) of every layer output. Throws ConfigError when the
  /// graph is inconsistent.
  std::vector<std::array<int, 2>> shapes() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 32;
  int epochs = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
};

/// Trained (or freshly initialized) network: spec, per-layer parameters, seeds and history.
struct ModelWeights {
  ModelSpec spec;
  std::vector<Eigen::MatrixXd> weight;  // dense: out x in; conv: out x (9 * in), column = tap * in + channel
  std::vector<Eigen::VectorXd> bias;
  std::uint64_t init_seed = 0;
  std::optional<TrainConfig> train_config;
  std::vector<double> train_mae;  // per epoch, meters
  std::vector<double> val_mae;
  std::optional<Normalization> norm;
  std::string manifest;
};

/// Glorot-uniform weights, zero biases.
ModelWeights build_model(const ModelSpec& spec, std::uint64_t seed);

std::size_t param_count(const ModelWeights& weights);

/// Batched forward pass: inputs 9 x B (normalized) -> outputs 2 x B.
Eigen::MatrixXd forward_batch(const ModelWeights& weights, const Eigen::MatrixXd& inputs);

/// Single prediction from normalized features. Throws MisuseError on non-finite input.
std::array<double, 2> forward(const ModelWeights& weights, const DetectorVector& normalized);

/// Mean over samples and both coordinates of |pred - truth|; zero subgradient at ties.
double mae_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

/// MAE loss of the batch and its gradient with respect to every parameter.
double loss_and_gradient(const ModelWeights& weights, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                         Gradients& grads);

struct TrainData {
  Eigen::MatrixXd inputs;   // 9 x n, normalized
  Eigen::MatrixXd targets;  // 2 x n, meters
  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

/// Normalized features and coordinates of the given rows.
TrainData make_train_data(const std::vector<const FingerprintRow*>& rows, const Normalization& norm);

using EpochCallback = std::function<void(int epoch, double train_mae, double val_mae)>;

/// Seeded mini-batch Adam on the MAE loss for exactly config.epochs epochs; returns the final-epoch
/// weights. Throws RuntimeFailure if the loss becomes non-finite.
ModelWeights train(const ModelSpec& spec, const TrainData& train_rows, const TrainData& val_rows,
                   const TrainConfig& config, std::uint64_t init_seed, const EpochCallback& on_epoch = {});

/// Binary container: "DNNVLP01", u32-length JSON descriptor, u32 tensor count, then per tensor
/// (u32 name length, name, u32 rank, u64 dims, little-endian f64 data in row-major order).
void write_weights(const std::filesystem::path& path, const ModelWeights& weights);
ModelWeights read_weights(const std::filesystem::path& path);

}  // namespace vlp
