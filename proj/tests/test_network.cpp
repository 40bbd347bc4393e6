#include <cmath>
#include <random>

#include "doctest.h"
#include "tassnet/layers.hpp"
#include "tassnet/loss.hpp"
#include "tassnet/network.hpp"

using namespace tassnet;

namespace {

NetworkConfig small(int dims, Index3 input) {
  NetworkConfig c = dims == 3 ? NetworkConfig::fine_3d() : NetworkConfig::fine_2d();
  c.stage_features = {4, 8, 8, 8, 8, 8, 8};
  c.cardinality = 2;
  c.input_shape = input;
  return c;
}

Tensor random_input(int n, int d, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor t(n, 1, d, h, w);
  for (auto& v : t.data) v = g(rng);
  return t;
}

void check_softmax(const Tensor& p) {
  const std::size_t m = p.spatial_size();
  for (int n = 0; n < p.batch(); ++n)
    for (std::size_t v = 0; v < m; ++v) {
      double s = 0.0;
      for (int k = 0; k < p.channels(); ++k) {
        const float x = p.channel_ptr(n, k)[v];
        REQUIRE(std::isfinite(x));
        s += x;
      }
      REQUIRE(std::abs(s - 1.0) <= 1e-5);
    }
}

}  // namespace

TEST_CASE("default configurations") {
  const auto f3 = NetworkConfig::fine_3d();
  CHECK(f3.stages() == 7);
  CHECK(f3.stage_features == std::vector<int>{32, 64, 128, 256, 512, 512, 512});
  CHECK(f3.cardinality == 8);
  CHECK(f3.num_classes == 5);
  CHECK(NetworkConfig::coarse_3d().num_classes == 2);
  CHECK(NetworkConfig::fine_2d().dims == 2);
}

TEST_CASE("default 3D downsampling tree") {
  const auto cfg = NetworkConfig::fine_3d();
  const auto e = cfg.stage_extents({44, 256, 256});
  REQUIRE(e.size() == 7);
  const std::vector<int> z{44, 22, 11, 5, 5, 5, 5};
  const std::vector<int> xy{256, 128, 64, 32, 16, 8, 4};
  for (int s = 0; s < 7; ++s) {
    CHECK(e[s][0] == z[s]);
    CHECK(e[s][1] == xy[s]);
    CHECK(e[s][2] == xy[s]);
  }
  int inplane = 0;
  for (const auto& st : cfg.downsample_strides()) inplane += st[1] == 2;
  CHECK(inplane == 6);
}

TEST_CASE("configuration errors") {
  auto cfg = small(3, {8, 8, 8});
  CHECK_THROWS(Network(cfg));  // 8 cannot be halved six times
  cfg.input_shape = {64, 64, 8};
  CHECK_NOTHROW(cfg.validate());
  cfg.cardinality = 3;
  CHECK_THROWS(cfg.validate());
  cfg.cardinality = 2;
  cfg.num_classes = 1;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("incompatible input names the axis") {
  auto cfg = small(3, {64, 64, 8});
  Network net(cfg, 1);
  try {
    net.check_input(Tensor(1, 1, 8, 64, 32));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("axis x") != std::string::npos);
  }
  Network net2(small(2, {64, 64, 1}), 1);
  CHECK_THROWS(net2.check_input(Tensor(1, 1, 4, 64, 64)));
}

TEST_CASE("output shape equals input shape over a grid of shapes") {
  for (Index3 in : {Index3{64, 64, 8}, Index3{64, 80, 6}, Index3{70, 66, 11}, Index3{96, 64, 16}}) {
    CAPTURE(in);
    Network net(small(3, in), 3);
    const Tensor p = net.predict(random_input(1, static_cast<int>(in[2]), static_cast<int>(in[1]), static_cast<int>(in[0]), 5));
    CHECK(p.dims == std::array<int, 5>{1, 5, static_cast<int>(in[2]), static_cast<int>(in[1]), static_cast<int>(in[0])});
    check_softmax(p);
  }
  for (Index3 in : {Index3{64, 64, 1}, Index3{65, 90, 1}}) {
    Network net(small(2, in), 3);
    const Tensor p = net.predict(random_input(2, 1, static_cast<int>(in[1]), static_cast<int>(in[0]), 5));
    CHECK(p.dims == std::array<int, 5>{2, 5, 1, static_cast<int>(in[1]), static_cast<int>(in[0])});
    check_softmax(p);
  }
}

TEST_CASE("identical batch items give identical outputs") {
  Network net(small(3, {64, 64, 8}), 9);
  Tensor one = random_input(1, 8, 64, 64, 2);
  Tensor two(2, 1, 8, 64, 64);
  std::copy(one.data.begin(), one.data.end(), two.data.begin());
  std::copy(one.data.begin(), one.data.end(), two.data.begin() + static_cast<std::ptrdiff_t>(one.data.size()));
  const Tensor p = net.predict(two);
  const std::size_t half = p.data.size() / 2;
  CHECK(std::equal(p.data.begin(), p.data.begin() + static_cast<std::ptrdiff_t>(half), p.data.begin() + static_cast<std::ptrdiff_t>(half)));
  // and repeated calls are deterministic
  CHECK(net.predict(two).data == p.data);
}

TEST_CASE("count_parameters") {
  const auto cfg = NetworkConfig::fine_3d();
  CHECK(count_parameters(Network(cfg)) == count_parameters(Network(cfg, 99)));
  auto c1 = cfg;
  c1.cardinality = 1;
  CHECK(count_parameters(Network(cfg)) < count_parameters(Network(c1)));
  auto twice = small(3, {64, 64, 8});
  const auto base = count_parameters(Network(twice));
  for (auto& w : twice.stage_features) w *= 2;
  CHECK(count_parameters(Network(twice)) > base);
}

TEST_CASE("ResNext block structure") {
  ResNextBlockSpec s;
  s.in_width = 16;
  s.out_width = 32;
  s.cardinality = 8;
  ResNextBlock b("b", s);
  CHECK(b.has_projection());
  CHECK(b.conv1_groups() == 8);
  CHECK(b.conv2_groups() == 8);
  s.in_width = 32;
  CHECK_FALSE(ResNextBlock("c", s).has_projection());
  s.in_width = 1;
  CHECK(ResNextBlock("stem", s).conv1_groups() == 1);
}

TEST_CASE("every parameter receives gradient") {
  // 128 in-plane keeps every stage at least 2 voxels wide, so no kernel tap sees only padding
  auto cfg = small(3, {128, 128, 8});
  Network net(cfg, 4);
  const Tensor x = random_input(2, 8, 128, 128, 6);
  const Tensor logits = net.forward(x, true);
  Tensor target(logits.dims[0], logits.dims[1], logits.dims[2], logits.dims[3], logits.dims[4]);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> k(0, 4);
  const std::size_t m = target.spatial_size();
  for (int n = 0; n < 2; ++n)
    for (std::size_t v = 0; v < m; ++v) target.channel_ptr(n, k(rng))[v] = 1.0f;
  Tensor grad;
  dice_focal_loss_from_logits(logits, target, DiceFocalConfig{}, &grad);
  net.zero_grad();
  net.backward(grad);
  std::size_t total = 0, zero = 0;
  for (const Parameter* p : net.parameters())
    for (float g : p->grad) {
      ++total;
      zero += g == 0.0f;
    }
  CHECK(static_cast<double>(zero) / static_cast<double>(total) < 0.01);
}

TEST_CASE("instance norm makes the stem invariant to input scale") {
  std::mt19937_64 rng(3);
  ConvSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 4;
  Conv conv("c", spec, false);
  conv.init_kaiming(rng, 0.01f);
  InstanceNorm norm("n", 4);
  const Tensor x = random_input(1, 6, 12, 12, 8);
  const Tensor a = norm.forward(conv.forward(x, false), false);
  for (float c : {1e-4f, 0.01f, 3.0f, 250.0f, 1e5f}) {
    Tensor xs = x;
    for (auto& v : xs.data) v *= c;
    const Tensor b = norm.forward(conv.forward(xs, false), false);
    for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(std::abs(a.data[i] - b.data[i]) <= 1e-4);
  }
}

TEST_CASE("copy_parameters_from") {
  const auto cfg = small(2, {64, 64, 1});
  Network a(cfg, 1), b(cfg, 2);
  const Tensor x = random_input(1, 1, 64, 64, 3);
  CHECK(a.predict(x).data != b.predict(x).data);
  b.copy_parameters_from(a);
  CHECK(a.predict(x).data == b.predict(x).data);
  Network c(small(2, {128, 128, 1}), 1);
  CHECK_NOTHROW(c.copy_parameters_from(a));  // same weights, different planned input
  auto other = cfg;
  other.stage_features[0] = 8;
  CHECK_THROWS(Network(other).copy_parameters_from(a));
}
