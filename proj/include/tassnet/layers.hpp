#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tassnet/kernels.hpp"

namespace tassnet {

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape, float fill = 0.0f);
  std::size_t size() const { return value.size(); }
};

/// Layers cache what their backward pass needs only when called with `train = true`.
class Conv {
 public:
  Conv(std::string name, ConvSpec spec, bool bias);

  void init_kaiming(std::mt19937_64& rng, float leaky_slope);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);
  const ConvSpec& spec() const { return spec_; }

 private:
  ConvSpec spec_;
  bool has_bias_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

/// Transposed convolution with kernel equal to stride (no overlap). The output extent is
/// taken from the skip connection it feeds, which may exceed `input * stride` by less than
/// one stride (odd extents in the encoder).
class ConvTranspose {
 public:
  ConvTranspose(std::string name, int in_channels, int out_channels, std::array<int, 3> stride);

  void init_kaiming(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, const std::array<int, 3>& out_spatial, bool train);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  ConvSpec adjoint_;  // the strided convolution this layer is the adjoint of
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class InstanceNorm {
 public:
  InstanceNorm(std::string name, int channels, float eps = 1e-5f);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  float eps_;
  Parameter gamma_;
  Parameter beta_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class LeakyReLU {
 public:
  explicit LeakyReLU(float slope) : slope_(slope) {}
  void forward(Tensor& x, bool train);
  void backward(Tensor& dy) const;

 private:
  float slope_;
  Tensor output_;
};

/// conv -> instance norm -> leaky ReLU
class ConvNormAct {
 public:
  ConvNormAct(const std::string& name, ConvSpec spec, float slope);
  void init(std::mt19937_64& rng, float slope) { conv_.init_kaiming(rng, slope); }
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);

 private:
  Conv conv_;
  InstanceNorm norm_;
  LeakyReLU act_;
};

struct ResNextBlockSpec {
  int in_width = 32;
  int out_width = 32;
  int cardinality = 8;
  double bottleneck_ratio = 0.5;
  int dims = 3;
  int kernel = 3;
  float leaky_slope = 0.01f;

  int bottleneck_width() const;
  /// Group count of the first convolution: the cardinality, unless the input width cannot be
  /// split into that many groups (single-channel network input).
  int first_groups() const;
  void validate() const;
};

/// Two grouped convolutions (conv -> IN -> LReLU, conv -> IN) whose sum with the skip path
/// (identity, or 1-kernel projection + IN when widths differ) passes through a final LReLU.
class ResNextBlock {
 public:
  ResNextBlock(const std::string& name, const ResNextBlockSpec& spec);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Parameter*>& out);
  const ResNextBlockSpec& spec() const { return spec_; }
  bool has_projection() const { return static_cast<bool>(proj_); }
  int conv1_groups() const { return conv1_.spec().groups; }
  int conv2_groups() const { return conv2_.spec().groups; }

 private:
  ResNextBlockSpec spec_;
  Conv conv1_;
  InstanceNorm norm1_;
  LeakyReLU act1_;
  Conv conv2_;
  InstanceNorm norm2_;
  std::unique_ptr<Conv> proj_;
  std::unique_ptr<InstanceNorm> proj_norm_;
  LeakyReLU out_act_;
};

}  // namespace tassnet
