#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fcprint/connectome.hpp"

namespace fcprint::convae {

enum class Activation { tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct ConvLayerSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 2;
};

// Convolutional autoencoder over a 1-channel p x p image.
//
// encoder: conv layers (activation after each), then an optional affine map
//          of the flattened feature map to `latent_dim` values (linear)
// decoder: affine map back to the feature map (activation), then transposed
//          convolutions mirroring the encoder in reverse; the final layer is
//          linear
//
// Each conv uses symmetric zero padding (kernel-1)/2, so stride-2 layers map
// n to ceil(n/2). Transposed layers restore the exact size their mirror
// consumed. latent_dim == 0 removes the affine bottleneck.
struct Architecture {
  int input_size = 32;
  std::vector<ConvLayerSpec> encoder{{8, 3, 2}, {16, 3, 2}};
  int latent_dim = 64;
  Activation activation = Activation::tanh;

  void validate() const;
};

enum class LayerKind { conv, dense, conv_transpose };

struct LayerShape {
  LayerKind kind;
  int in_channels, in_height, in_width;
  int out_channels, out_height, out_width;
  int kernel = 1, stride = 1, pad = 0;
  bool activated = false;
  std::size_t weight_offset = 0, weight_count = 0;
  std::size_t bias_offset = 0, bias_count = 0;

  std::size_t in_size() const { return std::size_t(in_channels) * in_height * in_width; }
  std::size_t out_size() const { return std::size_t(out_channels) * out_height * out_width; }
};

std::vector<LayerShape> layer_shapes(const Architecture& arch);

// All weights and biases in one flat vector; gradients use the same layout.
// Conv weights are [out][in][ky][kx], transposed-conv weights [in][out][ky][kx],
// dense weights [out][in].
struct AutoencoderParams {
  Architecture arch;
  std::vector<LayerShape> layers;
  Eigen::VectorXd values;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  bool finite() const { return values.allFinite(); }
};

AutoencoderParams zero_params(const Architecture& arch);
// Weights ~ U(-a, a) with a = scale / sqrt(fan_in); biases zero.
AutoencoderParams init_params(const Architecture& arch, double scale, std::uint64_t seed);

struct ForwardResult {
  Eigen::VectorXd latent;
  Eigen::MatrixXd reconstruction;
};

ForwardResult forward(const AutoencoderParams& params, const Eigen::MatrixXd& input);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Mean over the batch of ||input - reconstruction||_F^2 / p^2, with its exact
// gradient.
LossGrad loss_and_grad(const AutoencoderParams& params, std::span<const Eigen::MatrixXd> batch);
double loss(const AutoencoderParams& params, std::span<const Eigen::MatrixXd> batch);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double init_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  AutoencoderParams params;
  // Mean per-sample loss seen during each epoch.
  std::vector<double> loss_history;
};

// Minibatch Adam. Throws TrainingFailure when the loss stops being finite.
TrainResult train(std::span<const Eigen::MatrixXd> dataset, const Architecture& arch, const TrainConfig& cfg);
TrainResult train(std::span<const connectome::Connectome> dataset, const Architecture& arch,
                  const TrainConfig& cfg);

struct ResidualConnectome {
  Eigen::MatrixXd matrix;
  std::string subject_id;
  std::string session_label;
};

// input - reconstruction, symmetrized, zero diagonal.
Eigen::MatrixXd residual_matrix(const Eigen::MatrixXd& input, const AutoencoderParams& params);
ResidualConnectome residual(const connectome::Connectome& c, const AutoencoderParams& params);

}  // namespace fcprint::convae
