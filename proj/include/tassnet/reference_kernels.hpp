#pragma once

// Serial, loop-per-index versions of the OpenMP kernels. Kept for testing and benchmarking;
// templated so gradient checks can run them in double precision.

#include <cmath>
#include <vector>

#include "tassnet/kernels.hpp"

namespace tassnet::reference {

template <typename T>
BasicTensor<T> conv_forward(const BasicTensor<T>& x, const std::vector<T>& w,
                            const std::vector<T>& bias, const ConvSpec& s) {
  const auto out = s.output_spatial(x.spatial());
  BasicTensor<T> y(x.batch(), s.out_channels, out[0], out[1], out[2]);
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  for (int n = 0; n < x.batch(); ++n)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int g = oc / cout_g;
      for (int zo = 0; zo < out[0]; ++zo)
        for (int yo = 0; yo < out[1]; ++yo)
          for (int xo = 0; xo < out[2]; ++xo) {
            T acc = bias.empty() ? T(0) : bias[static_cast<std::size_t>(oc)];
            for (int icl = 0; icl < cin_g; ++icl)
              for (int kd = 0; kd < s.kernel[0]; ++kd)
                for (int kh = 0; kh < s.kernel[1]; ++kh)
                  for (int kw = 0; kw < s.kernel[2]; ++kw) {
                    const int zi = zo * s.stride[0] - s.pad[0] + kd;
                    const int yi = yo * s.stride[1] - s.pad[1] + kh;
                    const int xi = xo * s.stride[2] - s.pad[2] + kw;
                    if (zi < 0 || yi < 0 || xi < 0 || zi >= x.depth() || yi >= x.height() ||
                        xi >= x.width())
                      continue;
                    const std::size_t wi =
                        ((static_cast<std::size_t>(oc) * cin_g + icl) * s.kernel[0] + kd) *
                            s.kernel[1] * s.kernel[2] +
                        static_cast<std::size_t>(kh) * s.kernel[2] + kw;
                    acc += w[wi] * x.at(n, g * cin_g + icl, zi, yi, xi);
                  }
            y.at(n, oc, zo, yo, xo) = acc;
          }
    }
  return y;
}

template <typename T>
BasicTensor<T> conv_backward_input(const BasicTensor<T>& dy, const std::vector<T>& w,
                                   const ConvSpec& s, const std::array<int, 3>& in_spatial) {
  BasicTensor<T> dx(dy.batch(), s.in_channels, in_spatial[0], in_spatial[1], in_spatial[2]);
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  for (int n = 0; n < dy.batch(); ++n)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int g = oc / cout_g;
      for (int zo = 0; zo < dy.depth(); ++zo)
        for (int yo = 0; yo < dy.height(); ++yo)
          for (int xo = 0; xo < dy.width(); ++xo)
            for (int icl = 0; icl < cin_g; ++icl)
              for (int kd = 0; kd < s.kernel[0]; ++kd)
                for (int kh = 0; kh < s.kernel[1]; ++kh)
                  for (int kw = 0; kw < s.kernel[2]; ++kw) {
                    const int zi = zo * s.stride[0] - s.pad[0] + kd;
                    const int yi = yo * s.stride[1] - s.pad[1] + kh;
                    const int xi = xo * s.stride[2] - s.pad[2] + kw;
                    if (zi < 0 || yi < 0 || xi < 0 || zi >= in_spatial[0] ||
                        yi >= in_spatial[1] || xi >= in_spatial[2])
                      continue;
                    const std::size_t wi =
                        ((static_cast<std::size_t>(oc) * cin_g + icl) * s.kernel[0] + kd) *
                            s.kernel[1] * s.kernel[2] +
                        static_cast<std::size_t>(kh) * s.kernel[2] + kw;
                    dx.at(n, g * cin_g + icl, zi, yi, xi) += w[wi] * dy.at(n, oc, zo, yo, xo);
                  }
    }
  return dx;
}

template <typename T>
std::vector<T> conv_backward_weight(const BasicTensor<T>& x, const BasicTensor<T>& dy,
                                    const ConvSpec& s) {
  std::vector<T> dw(s.weight_count(), T(0));
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  for (int n = 0; n < x.batch(); ++n)
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int g = oc / cout_g;
      for (int zo = 0; zo < dy.depth(); ++zo)
        for (int yo = 0; yo < dy.height(); ++yo)
          for (int xo = 0; xo < dy.width(); ++xo)
            for (int icl = 0; icl < cin_g; ++icl)
              for (int kd = 0; kd < s.kernel[0]; ++kd)
                for (int kh = 0; kh < s.kernel[1]; ++kh)
                  for (int kw = 0; kw < s.kernel[2]; ++kw) {
                    const int zi = zo * s.stride[0] - s.pad[0] + kd;
                    const int yi = yo * s.stride[1] - s.pad[1] + kh;
                    const int xi = xo * s.stride[2] - s.pad[2] + kw;
                    if (zi < 0 || yi < 0 || xi < 0 || zi >= x.depth() || yi >= x.height() ||
                        xi >= x.width())
                      continue;
                    const std::size_t wi =
                        ((static_cast<std::size_t>(oc) * cin_g + icl) * s.kernel[0] + kd) *
                            s.kernel[1] * s.kernel[2] +
                        static_cast<std::size_t>(kh) * s.kernel[2] + kw;
                    dw[wi] += dy.at(n, oc, zo, yo, xo) * x.at(n, g * cin_g + icl, zi, yi, xi);
                  }
    }
  return dw;
}

template <typename T>
struct InstanceNormResult {
  BasicTensor<T> y;
  BasicTensor<T> xhat;
  std::vector<T> inv_std;
};

template <typename T>
InstanceNormResult<T> instance_norm_forward(const BasicTensor<T>& x, const std::vector<T>& gamma,
                                            const std::vector<T>& beta, T eps) {
  InstanceNormResult<T> r{x, x, {}};
  const std::size_t m = x.spatial_size();
  for (int n = 0; n < x.batch(); ++n)
    for (int c = 0; c < x.channels(); ++c) {
      const T* src = x.channel_ptr(n, c);
      T mean = 0;
      for (std::size_t i = 0; i < m; ++i) mean += src[i];
      mean /= static_cast<T>(m);
      T var = 0;
      for (std::size_t i = 0; i < m; ++i) var += (src[i] - mean) * (src[i] - mean);
      var /= static_cast<T>(m);
      const T inv = T(1) / std::sqrt(var > 0 ? var * (1 + eps) : eps);
      r.inv_std.push_back(inv);
      T* xh = r.xhat.channel_ptr(n, c);
      T* y = r.y.channel_ptr(n, c);
      for (std::size_t i = 0; i < m; ++i) {
        xh[i] = (src[i] - mean) * inv;
        y[i] = gamma[static_cast<std::size_t>(c)] * xh[i] + beta[static_cast<std::size_t>(c)];
      }
    }
  return r;
}

template <typename T>
BasicTensor<T> instance_norm_backward(const BasicTensor<T>& dy, const BasicTensor<T>& xhat,
                                      const std::vector<T>& gamma, const std::vector<T>& inv_std,
                                      T eps, std::vector<T>& dgamma, std::vector<T>& dbeta) {
  BasicTensor<T> dx = dy;
  const std::size_t m = dy.spatial_size();
  for (int n = 0; n < dy.batch(); ++n)
    for (int c = 0; c < dy.channels(); ++c) {
      const T* g = dy.channel_ptr(n, c);
      const T* xh = xhat.channel_ptr(n, c);
      T sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < m; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
      dgamma[static_cast<std::size_t>(c)] += sum_gx;
      dbeta[static_cast<std::size_t>(c)] += sum_g;
      const T scale = gamma[static_cast<std::size_t>(c)] *
                      inv_std[static_cast<std::size_t>(n) * dy.channels() + c] / static_cast<T>(m);
      T* out = dx.channel_ptr(n, c);
      for (std::size_t i = 0; i < m; ++i)
        out[i] = scale * (static_cast<T>(m) * g[i] - sum_g - (1 + eps) * xh[i] * sum_gx);
    }
  return dx;
}

template <typename T>
void softmax_channels(BasicTensor<T>& x) {
  for (int n = 0; n < x.batch(); ++n)
    for (int z = 0; z < x.depth(); ++z)
      for (int y = 0; y < x.height(); ++y)
        for (int v = 0; v < x.width(); ++v) {
          T mx = x.at(n, 0, z, y, v);
          for (int c = 1; c < x.channels(); ++c) mx = std::max(mx, x.at(n, c, z, y, v));
          T sum = 0;
          for (int c = 0; c < x.channels(); ++c) sum += std::exp(x.at(n, c, z, y, v) - mx);
          for (int c = 0; c < x.channels(); ++c)
            x.at(n, c, z, y, v) = std::exp(x.at(n, c, z, y, v) - mx) / sum;
        }
}

}  // namespace tassnet::reference
