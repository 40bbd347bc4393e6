#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>

#include "tassnet/tensor.hpp"

namespace tassnet {

/// Grouped convolution geometry. Spatial triples are ordered (depth, height, width).
/// Weights are stored (out_channels, in_channels / groups, kd, kh, kw).
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int groups = 1;
  std::array<int, 3> kernel{3, 3, 3};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> pad{1, 1, 1};

  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }
  std::size_t kernel_volume() const {
    return static_cast<std::size_t>(kernel[0]) * kernel[1] * kernel[2];
  }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_per_group() * kernel_volume();
  }
  std::array<int, 3> output_spatial(const std::array<int, 3>& in) const {
    std::array<int, 3> out{};
    for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * pad[a] - kernel[a]) / stride[a] + 1;
    return out;
  }
  void validate() const {
    if (in_channels < 1 || out_channels < 1 || groups < 1)
      throw std::invalid_argument("convolution channel counts must be positive");
    if (in_channels % groups != 0 || out_channels % groups != 0)
      throw std::invalid_argument("group count " + std::to_string(groups) +
                                  " does not divide channels " + std::to_string(in_channels) +
                                  " -> " + std::to_string(out_channels));
    for (int a = 0; a < 3; ++a)
      if (kernel[a] < 1 || stride[a] < 1 || pad[a] < 0)
        throw std::invalid_argument("invalid convolution kernel/stride/padding");
  }
};

/// OpenMP kernels used by the network. Each has a serial counterpart in
/// tassnet::reference (reference_kernels.hpp) that the tests and the benchmark compare against.
namespace kernels {

/// y = conv(x, w) + bias; `bias` may be empty. y is resized.
void conv_forward(const Tensor& x, std::span<const float> w, std::span<const float> bias,
                  const ConvSpec& spec, Tensor& y);

/// dx = adjoint of conv applied to dy, for an input of spatial extent `in_spatial`. dx is resized
/// and overwritten.
void conv_backward_input(const Tensor& dy, std::span<const float> w, const ConvSpec& spec,
                         const std::array<int, 3>& in_spatial, Tensor& dx);

/// dw += correlation of x with dy.
void conv_backward_weight(const Tensor& x, const Tensor& dy, const ConvSpec& spec,
                          std::span<float> dw);

/// db[c] += sum of dy over batch and space.
void bias_backward(const Tensor& dy, std::span<float> db);

/// Per-(sample, channel) normalization with inv_std = 1/sqrt(var * (1 + eps)), or 1/sqrt(eps)
/// for a constant channel. Writes normalized values to `xhat` and the affine
/// output to `y`; `inv_std` receives one entry per (sample, channel).
void instance_norm_forward(const Tensor& x, std::span<const float> gamma,
                           std::span<const float> beta, float eps, Tensor& y, Tensor& xhat,
                           std::vector<float>& inv_std);

/// dgamma, dbeta accumulate; dx overwritten.
void instance_norm_backward(const Tensor& dy, const Tensor& xhat, std::span<const float> gamma,
                            std::span<const float> inv_std, float eps, Tensor& dx,
                            std::span<float> dgamma, std::span<float> dbeta);

void leaky_relu_forward(Tensor& x, float slope);
/// dy is scaled in place where the forward output `y` was negative.
void leaky_relu_backward(const Tensor& y, Tensor& dy, float slope);

/// Channel softmax per voxel, in place.
void softmax_channels(Tensor& x);

}  // namespace kernels
}  // namespace tassnet
