#include "tassnet/layers.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace tassnet {
namespace {

std::array<int, 3> spatial_kernel(int dims, int k) {
  return dims == 3 ? std::array<int, 3>{k, k, k} : std::array<int, 3>{1, k, k};
}

std::array<int, 3> same_pad(const std::array<int, 3>& kernel) {
  return {kernel[0] / 2, kernel[1] / 2, kernel[2] / 2};
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::logic_error("tensor shape mismatch in residual sum");
  float* pa = a.data.data();
  const float* pb = b.data.data();
  const auto n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) pa[i] += pb[i];
}

}  // namespace

Parameter::Parameter(std::string name_, std::vector<int> shape_, float fill)
    : name(std::move(name_)), shape(std::move(shape_)) {
  const auto n = static_cast<std::size_t>(
      std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>()));
  value.assign(n, fill);
  grad.assign(n, 0.0f);
}

Conv::Conv(std::string name, ConvSpec spec, bool bias)
    : spec_(spec),
      has_bias_(bias),
      weight_(name + ".weight", {spec.out_channels, spec.in_per_group(), spec.kernel[0],
                                 spec.kernel[1], spec.kernel[2]}),
      bias_(name + ".bias", {bias ? spec.out_channels : 0}) {
  spec_.validate();
}

void Conv::init_kaiming(std::mt19937_64& rng, float leaky_slope) {
  const double fan_in = static_cast<double>(spec_.in_per_group()) * spec_.kernel_volume();
  const double std = std::sqrt(2.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in));
  std::normal_distribution<double> dist(0.0, std);
  for (auto& w : weight_.value) w = static_cast<float>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor Conv::forward(const Tensor& x, bool train) {
  Tensor y;
  kernels::conv_forward(x, weight_.value, bias_.value, spec_, y);
  if (train) input_ = x;
  return y;
}

Tensor Conv::backward(const Tensor& dy) {
  if (input_.data.empty()) throw std::logic_error(weight_.name + ": backward without forward");
  kernels::conv_backward_weight(input_, dy, spec_, weight_.grad);
  if (has_bias_) kernels::bias_backward(dy, bias_.grad);
  Tensor dx;
  kernels::conv_backward_input(dy, weight_.value, spec_, input_.spatial(), dx);
  input_ = Tensor();
  return dx;
}

void Conv::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

ConvTranspose::ConvTranspose(std::string name, int in_channels, int out_channels,
                             std::array<int, 3> stride)
    : adjoint_{out_channels, in_channels, 1, stride, stride, {0, 0, 0}},
      weight_(name + ".weight", {in_channels, out_channels, stride[0], stride[1], stride[2]}),
      bias_(name + ".bias", {out_channels}) {
  adjoint_.validate();
}

void ConvTranspose::init_kaiming(std::mt19937_64& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(adjoint_.out_channels));
  std::normal_distribution<double> dist(0.0, std);
  for (auto& w : weight_.value) w = static_cast<float>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor ConvTranspose::forward(const Tensor& x, const std::array<int, 3>& out_spatial, bool train) {
  if (adjoint_.output_spatial(out_spatial) != x.spatial())
    throw std::invalid_argument(weight_.name + ": cannot upsample " + shape_string(x.dims) +
                                " to the requested extent");
  Tensor y;
  kernels::conv_backward_input(x, weight_.value, adjoint_, out_spatial, y);
  const std::size_t m = y.spatial_size();
  for (int n = 0; n < y.batch(); ++n)
    for (int c = 0; c < y.channels(); ++c) {
      float* p = y.channel_ptr(n, c);
      const float b = bias_.value[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < m; ++i) p[i] += b;
    }
  if (train) input_ = x;
  return y;
}

Tensor ConvTranspose::backward(const Tensor& dy) {
  if (input_.data.empty()) throw std::logic_error(weight_.name + ": backward without forward");
  kernels::conv_backward_weight(dy, input_, adjoint_, weight_.grad);
  kernels::bias_backward(dy, bias_.grad);
  Tensor dx;
  kernels::conv_forward(dy, weight_.value, {}, adjoint_, dx);
  input_ = Tensor();
  return dx;
}

void ConvTranspose::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

InstanceNorm::InstanceNorm(std::string name, int channels, float eps)
    : eps_(eps), gamma_(name + ".gamma", {channels}, 1.0f), beta_(name + ".beta", {channels}) {}

Tensor InstanceNorm::forward(const Tensor& x, bool train) {
  Tensor y, xhat;
  std::vector<float> inv_std;
  kernels::instance_norm_forward(x, gamma_.value, beta_.value, eps_, y, xhat, inv_std);
  if (train) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
  }
  return y;
}

Tensor InstanceNorm::backward(const Tensor& dy) {
  if (xhat_.data.empty()) throw std::logic_error(gamma_.name + ": backward without forward");
  Tensor dx;
  kernels::instance_norm_backward(dy, xhat_, gamma_.value, inv_std_, eps_, dx, gamma_.grad, beta_.grad);
  xhat_ = Tensor();
  return dx;
}

void InstanceNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void LeakyReLU::forward(Tensor& x, bool train) {
  kernels::leaky_relu_forward(x, slope_);
  if (train) output_ = x;
}

void LeakyReLU::backward(Tensor& dy) const { kernels::leaky_relu_backward(output_, dy, slope_); }

ConvNormAct::ConvNormAct(const std::string& name, ConvSpec spec, float slope)
    : conv_(name + ".conv", spec, false), norm_(name + ".norm", spec.out_channels), act_(slope) {}

Tensor ConvNormAct::forward(const Tensor& x, bool train) {
  Tensor y = norm_.forward(conv_.forward(x, train), train);
  act_.forward(y, train);
  return y;
}

Tensor ConvNormAct::backward(const Tensor& dy) {
  Tensor g = dy;
  act_.backward(g);
  return conv_.backward(norm_.backward(g));
}

void ConvNormAct::collect(std::vector<Parameter*>& out) {
  conv_.collect(out);
  norm_.collect(out);
}

int ResNextBlockSpec::bottleneck_width() const {
  return static_cast<int>(std::lround(out_width * bottleneck_ratio));
}

int ResNextBlockSpec::first_groups() const {
  return in_width % cardinality == 0 ? cardinality : 1;
}

void ResNextBlockSpec::validate() const {
  if (in_width < 1 || out_width < 1) throw std::invalid_argument("block widths must be positive");
  if (cardinality < 1) throw std::invalid_argument("cardinality must be positive");
  const int b = bottleneck_width();
  if (b < 1) throw std::invalid_argument("bottleneck width must be positive");
  if (b % cardinality != 0 || out_width % cardinality != 0)
    throw std::invalid_argument("cardinality " + std::to_string(cardinality) +
                                " does not divide bottleneck width " + std::to_string(b) +
                                " of a block with output width " + std::to_string(out_width));
  if (dims != 2 && dims != 3) throw std::invalid_argument("dims must be 2 or 3");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("kernel must be odd");
}

namespace {

ConvSpec grouped(int in, int out, int groups, int dims, int k) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.groups = groups;
  s.kernel = spatial_kernel(dims, k);
  s.pad = same_pad(s.kernel);
  return s;
}

const ResNextBlockSpec& checked(const ResNextBlockSpec& s) {
  s.validate();
  return s;
}

}  // namespace

ResNextBlock::ResNextBlock(const std::string& name, const ResNextBlockSpec& spec)
    : spec_(checked(spec)),
      conv1_(name + ".conv1",
             grouped(spec.in_width, spec.bottleneck_width(), spec.first_groups(), spec.dims,
                     spec.kernel),
             false),
      norm1_(name + ".norm1", spec.bottleneck_width()),
      act1_(spec.leaky_slope),
      conv2_(name + ".conv2",
             grouped(spec.bottleneck_width(), spec.out_width, spec.cardinality, spec.dims,
                     spec.kernel),
             false),
      norm2_(name + ".norm2", spec.out_width),
      out_act_(spec.leaky_slope) {
  if (spec.in_width != spec.out_width) {
    proj_ = std::make_unique<Conv>(name + ".proj", grouped(spec.in_width, spec.out_width, 1,
                                                           spec.dims, 1),
                                   false);
    proj_norm_ = std::make_unique<InstanceNorm>(name + ".proj_norm", spec.out_width);
  }
}

void ResNextBlock::init(std::mt19937_64& rng) {
  conv1_.init_kaiming(rng, spec_.leaky_slope);
  conv2_.init_kaiming(rng, spec_.leaky_slope);
  if (proj_) proj_->init_kaiming(rng, spec_.leaky_slope);
}

Tensor ResNextBlock::forward(const Tensor& x, bool train) {
  Tensor h = norm1_.forward(conv1_.forward(x, train), train);
  act1_.forward(h, train);
  h = norm2_.forward(conv2_.forward(h, train), train);
  if (proj_) {
    add_inplace(h, proj_norm_->forward(proj_->forward(x, train), train));
  } else {
    add_inplace(h, x);
  }
  out_act_.forward(h, train);
  return h;
}

Tensor ResNextBlock::backward(const Tensor& dy) {
  Tensor g = dy;
  out_act_.backward(g);
  Tensor dx_skip = proj_ ? proj_->backward(proj_norm_->backward(g)) : g;
  Tensor h = norm2_.backward(g);
  h = conv2_.backward(h);
  act1_.backward(h);
  Tensor dx = conv1_.backward(norm1_.backward(h));
  add_inplace(dx, dx_skip);
  return dx;
}

void ResNextBlock::collect(std::vector<Parameter*>& out) {
  conv1_.collect(out);
  norm1_.collect(out);
  conv2_.collect(out);
  norm2_.collect(out);
  if (proj_) {
    proj_->collect(out);
    proj_norm_->collect(out);
  }
}

}  // namespace tassnet
