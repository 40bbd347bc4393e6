#include "tassnet/network.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tassnet {
namespace {

constexpr const char* kAxisName[3] = {"z", "y", "x"};

}  // namespace

NetworkConfig NetworkConfig::fine_3d() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::fine_2d() {
  NetworkConfig c;
  c.dims = 2;
  c.input_shape = {256, 256, 1};
  return c;
}

NetworkConfig NetworkConfig::coarse_3d() {
  NetworkConfig c;
  c.num_classes = 2;
  c.input_shape = {576, 576, 44};
  return c;
}

void NetworkConfig::validate() const {
  if (dims != 2 && dims != 3) throw std::invalid_argument("network dims must be 2 or 3");
  if (in_channels < 1) throw std::invalid_argument("network needs at least one input channel");
  if (num_classes < 2) throw std::invalid_argument("network needs at least two classes");
  if (stage_features.empty()) throw std::invalid_argument("network needs at least one stage");
  if (downsample_z_min < 1) throw std::invalid_argument("downsample_z_min must be positive");
  for (std::size_t s = 0; s < stage_features.size(); ++s) {
    ResNextBlockSpec b;
    b.in_width = s == 0 ? in_channels : stage_features[s];
    b.out_width = stage_features[s];
    b.cardinality = cardinality;
    b.bottleneck_ratio = bottleneck_ratio;
    b.dims = dims;
    b.kernel = kernel;
    b.validate();
  }
  for (int a = 0; a < 3; ++a)
    if (input_shape[a] < 1) throw std::invalid_argument("input_shape must be positive");
  (void)downsample_strides();
}

std::vector<std::array<int, 3>> NetworkConfig::downsample_strides() const {
  std::array<int, 3> extent{dims == 3 ? static_cast<int>(input_shape[2]) : 1,
                            static_cast<int>(input_shape[1]), static_cast<int>(input_shape[0])};
  std::vector<std::array<int, 3>> strides;
  for (int s = 1; s < stages(); ++s) {
    std::array<int, 3> st{1, 2, 2};
    if (dims == 3 && extent[0] >= 2 * downsample_z_min) st[0] = 2;
    for (int a = 0; a < 3; ++a) {
      if (st[a] == 2 && extent[a] < 2)
        throw std::invalid_argument(std::string("downsampling at stage ") + std::to_string(s) +
                                    " would reduce axis " + kAxisName[a] + " below 1 voxel");
      extent[a] /= st[a];
    }
    strides.push_back(st);
  }
  return strides;
}

std::vector<std::array<int, 3>> NetworkConfig::stage_extents(const std::array<int, 3>& input) const {
  const auto strides = downsample_strides();
  std::vector<std::array<int, 3>> out{input};
  for (std::size_t s = 0; s < strides.size(); ++s) {
    auto e = out.back();
    for (int a = 0; a < 3; ++a) {
      if (e[a] / strides[s][a] < 1)
        throw std::invalid_argument("input extent " + std::to_string(input[a]) + " along axis " +
                                    kAxisName[a] + " is too small for the downsampling tree (stage " +
                                    std::to_string(s + 1) + ")");
      e[a] /= strides[s][a];
    }
    out.push_back(e);
  }
  return out;
}

struct Network::Impl {
  std::vector<std::unique_ptr<ConvNormAct>> down;
  std::vector<std::unique_ptr<ResNextBlock>> encoder;
  std::vector<std::unique_ptr<ConvTranspose>> up;
  std::vector<std::unique_ptr<ResNextBlock>> decoder;
  std::unique_ptr<Conv> head;
  std::vector<Parameter*> params;
  std::vector<std::array<int, 3>> skip_spatial;
};

Network::Network(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  impl_ = std::make_unique<Impl>();
  auto& m = *impl_;
  const auto strides = cfg_.downsample_strides();
  const auto& w = cfg_.stage_features;
  const int S = cfg_.stages();

  auto block_spec = [&](int in, int out) {
    ResNextBlockSpec b;
    b.in_width = in;
    b.out_width = out;
    b.cardinality = cfg_.cardinality;
    b.bottleneck_ratio = cfg_.bottleneck_ratio;
    b.dims = cfg_.dims;
    b.kernel = cfg_.kernel;
    b.leaky_slope = cfg_.leaky_slope;
    return b;
  };

  for (int s = 0; s < S; ++s) {
    const std::string name = "encoder." + std::to_string(s);
    if (s > 0) {
      ConvSpec d;
      d.in_channels = w[static_cast<std::size_t>(s - 1)];
      d.out_channels = w[static_cast<std::size_t>(s)];
      d.kernel = strides[static_cast<std::size_t>(s - 1)];
      d.stride = strides[static_cast<std::size_t>(s - 1)];
      d.pad = {0, 0, 0};
      m.down.push_back(std::make_unique<ConvNormAct>(name + ".down", d, cfg_.leaky_slope));
    }
    const int in = s == 0 ? cfg_.in_channels : w[static_cast<std::size_t>(s)];
    m.encoder.push_back(
        std::make_unique<ResNextBlock>(name + ".block", block_spec(in, w[static_cast<std::size_t>(s)])));
  }
  for (int s = 0; s + 1 < S; ++s) {
    const std::string name = "decoder." + std::to_string(s);
    m.up.push_back(std::make_unique<ConvTranspose>(name + ".up", w[static_cast<std::size_t>(s + 1)],
                                                   w[static_cast<std::size_t>(s)],
                                                   strides[static_cast<std::size_t>(s)]));
    m.decoder.push_back(std::make_unique<ResNextBlock>(
        name + ".block", block_spec(2 * w[static_cast<std::size_t>(s)], w[static_cast<std::size_t>(s)])));
  }
  ConvSpec h;
  h.in_channels = w[0];
  h.out_channels = cfg_.num_classes;
  h.kernel = {1, 1, 1};
  h.pad = {0, 0, 0};
  m.head = std::make_unique<Conv>("head", h, true);

  std::mt19937_64 rng(seed);
  for (int s = 0; s < S; ++s) {
    if (s > 0) m.down[static_cast<std::size_t>(s - 1)]->init(rng, cfg_.leaky_slope);
    m.encoder[static_cast<std::size_t>(s)]->init(rng);
  }
  for (int s = 0; s + 1 < S; ++s) {
    m.up[static_cast<std::size_t>(s)]->init_kaiming(rng);
    m.decoder[static_cast<std::size_t>(s)]->init(rng);
  }
  m.head->init_kaiming(rng, 1.0f);

  for (int s = 0; s < S; ++s) {
    if (s > 0) m.down[static_cast<std::size_t>(s - 1)]->collect(m.params);
    m.encoder[static_cast<std::size_t>(s)]->collect(m.params);
  }
  for (int s = 0; s + 1 < S; ++s) {
    m.up[static_cast<std::size_t>(s)]->collect(m.params);
    m.decoder[static_cast<std::size_t>(s)]->collect(m.params);
  }
  m.head->collect(m.params);
}

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

void Network::check_input(const Tensor& x) const {
  if (x.batch() < 1) throw std::invalid_argument("input batch is empty");
  if (x.channels() != cfg_.in_channels)
    throw std::invalid_argument("network expects " + std::to_string(cfg_.in_channels) +
                                " input channel(s), got " + std::to_string(x.channels()));
  if (cfg_.dims == 2 && x.depth() != 1)
    throw std::invalid_argument("2D network expects depth 1 along axis z, got " +
                                std::to_string(x.depth()));
  (void)cfg_.stage_extents(x.spatial());
}

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.batch(), a.channels() + b.channels(), a.depth(), a.height(), a.width());
  const std::size_t m = a.spatial_size();
  for (int n = 0; n < a.batch(); ++n) {
    std::copy_n(a.channel_ptr(n, 0), m * static_cast<std::size_t>(a.channels()),
                out.channel_ptr(n, 0));
    std::copy_n(b.channel_ptr(n, 0), m * static_cast<std::size_t>(b.channels()),
                out.channel_ptr(n, a.channels()));
  }
  return out;
}

void split_channels(const Tensor& g, int first, Tensor& a, Tensor& b) {
  const int second = g.channels() - first;
  a = Tensor(g.batch(), first, g.depth(), g.height(), g.width());
  b = Tensor(g.batch(), second, g.depth(), g.height(), g.width());
  const std::size_t m = g.spatial_size();
  for (int n = 0; n < g.batch(); ++n) {
    std::copy_n(g.channel_ptr(n, 0), m * static_cast<std::size_t>(first), a.channel_ptr(n, 0));
    std::copy_n(g.channel_ptr(n, first), m * static_cast<std::size_t>(second), b.channel_ptr(n, 0));
  }
}

}  // namespace

Tensor Network::forward(const Tensor& x, bool train) {
  check_input(x);
  auto& m = *impl_;
  const int S = cfg_.stages();
  std::vector<Tensor> skips;
  Tensor h = x;
  for (int s = 0; s < S; ++s) {
    if (s > 0) h = m.down[static_cast<std::size_t>(s - 1)]->forward(h, train);
    h = m.encoder[static_cast<std::size_t>(s)]->forward(h, train);
    if (s + 1 < S) skips.push_back(h);
  }
  for (int s = S - 2; s >= 0; --s) {
    Tensor& skip = skips[static_cast<std::size_t>(s)];
    Tensor up = m.up[static_cast<std::size_t>(s)]->forward(h, skip.spatial(), train);
    h = m.decoder[static_cast<std::size_t>(s)]->forward(concat_channels(up, skip), train);
    skip = Tensor();
  }
  return m.head->forward(h, train);
}

Tensor Network::predict(const Tensor& x) {
  Tensor p = forward(x, false);
  kernels::softmax_channels(p);
  return p;
}

void Network::backward(const Tensor& dlogits) {
  auto& m = *impl_;
  const int S = cfg_.stages();
  Tensor g = m.head->backward(dlogits);
  std::vector<Tensor> skip_grads(static_cast<std::size_t>(std::max(S - 1, 0)));
  for (int s = 0; s + 1 < S; ++s) {
    const Tensor gcat = m.decoder[static_cast<std::size_t>(s)]->backward(g);
    Tensor gup;
    split_channels(gcat, cfg_.stage_features[static_cast<std::size_t>(s)], gup,
                   skip_grads[static_cast<std::size_t>(s)]);
    g = m.up[static_cast<std::size_t>(s)]->backward(gup);
  }
  for (int s = S - 1; s >= 0; --s) {
    if (s + 1 < S) {
      const Tensor& sg = skip_grads[static_cast<std::size_t>(s)];
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += sg.data[i];
    }
    g = m.encoder[static_cast<std::size_t>(s)]->backward(g);
    if (s > 0) g = m.down[static_cast<std::size_t>(s - 1)]->backward(g);
  }
}

std::vector<Parameter*> Network::parameters() { return impl_->params; }

std::vector<const Parameter*> Network::parameters() const {
  return {impl_->params.begin(), impl_->params.end()};
}

void Network::zero_grad() {
  for (auto* p : impl_->params) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

void Network::copy_parameters_from(const Network& other) {
  const auto src = other.parameters();
  auto dst = parameters();
  bool same = src.size() == dst.size();
  for (std::size_t i = 0; same && i < dst.size(); ++i)
    same = src[i]->name == dst[i]->name && src[i]->shape == dst[i]->shape;
  if (!same) throw std::invalid_argument("cannot copy parameters between different architectures");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

Network build_network(const NetworkConfig& cfg, std::uint64_t seed) { return Network(cfg, seed); }

std::size_t count_parameters(const Network& n) {
  std::size_t total = 0;
  for (const auto* p : n.parameters()) total += p->size();
  return total;
}

}  // namespace tassnet
