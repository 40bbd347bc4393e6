#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "tassnet/layers.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

struct NetworkConfig {
  int dims = 3;
  int in_channels = 1;
  int num_classes = 5;
  std::vector<int> stage_features{32, 64, 128, 256, 512, 512, 512};
  int cardinality = 8;
  double bottleneck_ratio = 0.5;
  int kernel = 3;
  /// z stops being halved once its extent drops below twice this value.
  int downsample_z_min = 4;
  /// Nominal input extent (x, y, z) the downsampling tree is planned for; z is ignored in 2D.
  Index3 input_shape{256, 256, 44};
  float leaky_slope = 0.01f;

  static NetworkConfig fine_3d();
  static NetworkConfig fine_2d();
  static NetworkConfig coarse_3d();

  int stages() const { return static_cast<int>(stage_features.size()); }
  void validate() const;
  /// Per-transition stride, ordered (depth, height, width); entry s is the step into stage s+1.
  std::vector<std::array<int, 3>> downsample_strides() const;
  /// Spatial extent (depth, height, width) at every encoder stage for a given input.
  std::vector<std::array<int, 3>> stage_extents(const std::array<int, 3>& input) const;

  bool operator==(const NetworkConfig&) const = default;
};

/// ResNext U-Net: encoder stages of (strided conv ->) ResNext block, a mirrored decoder of
/// transposed conv + skip concatenation + ResNext block, and a 1-kernel class head.
class Network {
 public:
  explicit Network(NetworkConfig cfg, std::uint64_t seed = 0);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  const NetworkConfig& config() const { return cfg_; }

  /// Throws std::invalid_argument naming the offending axis when `x` cannot pass through
  /// the downsampling tree.
  void check_input(const Tensor& x) const;

  /// Class logits, same spatial extent as the input.
  Tensor forward(const Tensor& x, bool train = false);
  /// Softmax probabilities; never caches activations.
  Tensor predict(const Tensor& x);
  /// Back-propagates d(loss)/d(logits) of the last training forward; gradients accumulate.
  void backward(const Tensor& dlogits);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  /// Copies parameter values from a network with an identical configuration.
  void copy_parameters_from(const Network& other);

 private:
  struct Impl;
  NetworkConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

Network build_network(const NetworkConfig& cfg, std::uint64_t seed = 0);
std::size_t count_parameters(const Network& n);

}  // namespace tassnet
