#include "tassnet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tassnet::kernels {
namespace {

// Output positions xo with 0 <= xo * stride + offset < extent, as [lo, hi).
inline void valid_range(int offset, int stride, int extent, int out_extent, int& lo, int& hi) {
  // smallest xo with xo * stride + offset >= 0
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  // largest xo with xo * stride + offset <= extent - 1
  const int last = extent - 1 - offset;
  hi = last < 0 ? 0 : std::min(out_extent, last / stride + 1);
  if (hi < lo) hi = lo;
}

void check_conv_args(const Tensor& x, std::span<const float> w, const ConvSpec& s) {
  s.validate();
  if (x.channels() != s.in_channels)
    throw std::invalid_argument("convolution expects " + std::to_string(s.in_channels) +
                                " input channels, got " + std::to_string(x.channels()));
  if (w.size() != s.weight_count())
    throw std::invalid_argument("convolution weight count mismatch");
}

void reshape(Tensor& t, int n, int c, int d, int h, int w) {
  const std::array<int, 5> dims{n, c, d, h, w};
  if (t.dims != dims) {
    t.dims = dims;
    t.data.assign(static_cast<std::size_t>(n) * c * d * h * w, 0.0f);
  }
}

}  // namespace

void conv_forward(const Tensor& x, std::span<const float> w, std::span<const float> bias,
                  const ConvSpec& s, Tensor& y) {
  check_conv_args(x, w, s);
  const auto out = s.output_spatial(x.spatial());
  for (int a = 0; a < 3; ++a)
    if (out[a] < 1) throw std::invalid_argument("convolution output would be empty");
  reshape(y, x.batch(), s.out_channels, out[0], out[1], out[2]);

  const int N = x.batch(), D = x.depth(), H = x.height(), W = x.width();
  const int Do = out[0], Ho = out[1], Wo = out[2];
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  const int kd = s.kernel[0], kh = s.kernel[1], kw = s.kernel[2];
  const int sd = s.stride[0], sh = s.stride[1], sw = s.stride[2];
  const int pd = s.pad[0], ph = s.pad[1], pw = s.pad[2];
  const std::size_t kvol = s.kernel_volume();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int g = oc / cout_g;
      float* yc = y.channel_ptr(n, oc);
      const float b = bias.empty() ? 0.0f : bias[static_cast<std::size_t>(oc)];
      std::fill(yc, yc + static_cast<std::size_t>(Do) * Ho * Wo, b);
      for (int zo = 0; zo < Do; ++zo) {
        for (int yo = 0; yo < Ho; ++yo) {
          float* yr = yc + (static_cast<std::size_t>(zo) * Ho + yo) * Wo;
          for (int icl = 0; icl < cin_g; ++icl) {
            const float* xc = x.channel_ptr(n, g * cin_g + icl);
            const float* wk = w.data() + (static_cast<std::size_t>(oc) * cin_g + icl) * kvol;
            for (int z = 0; z < kd; ++z) {
              const int zi = zo * sd - pd + z;
              if (zi < 0 || zi >= D) continue;
              for (int v = 0; v < kh; ++v) {
                const int yi = yo * sh - ph + v;
                if (yi < 0 || yi >= H) continue;
                const float* xr = xc + (static_cast<std::size_t>(zi) * H + yi) * W;
                const float* wr = wk + (static_cast<std::size_t>(z) * kh + v) * kw;
                for (int u = 0; u < kw; ++u) {
                  const float wv = wr[u];
                  const int off = u - pw;
                  int lo, hi;
                  valid_range(off, sw, W, Wo, lo, hi);
                  if (sw == 1) {
                    const float* xs = xr + off;
#pragma omp simd
                    for (int xo = lo; xo < hi; ++xo) yr[xo] += wv * xs[xo];
                  } else {
                    for (int xo = lo; xo < hi; ++xo) yr[xo] += wv * xr[xo * sw + off];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const Tensor& dy, std::span<const float> w, const ConvSpec& s,
                         const std::array<int, 3>& in_spatial, Tensor& dx) {
  s.validate();
  if (dy.channels() != s.out_channels)
    throw std::invalid_argument("gradient channel count does not match convolution outputs");
  if (w.size() != s.weight_count()) throw std::invalid_argument("convolution weight count mismatch");
  reshape(dx, dy.batch(), s.in_channels, in_spatial[0], in_spatial[1], in_spatial[2]);

  const int N = dy.batch(), D = in_spatial[0], H = in_spatial[1], W = in_spatial[2];
  const int Do = dy.depth(), Ho = dy.height(), Wo = dy.width();
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  const int kd = s.kernel[0], kh = s.kernel[1], kw = s.kernel[2];
  const int sd = s.stride[0], sh = s.stride[1], sw = s.stride[2];
  const int pd = s.pad[0], ph = s.pad[1], pw = s.pad[2];
  const std::size_t kvol = s.kernel_volume();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int ic = 0; ic < s.in_channels; ++ic) {
      const int g = ic / cin_g;
      const int icl = ic % cin_g;
      float* dxc = dx.channel_ptr(n, ic);
      std::fill(dxc, dxc + static_cast<std::size_t>(D) * H * W, 0.0f);
      for (int ocl = 0; ocl < cout_g; ++ocl) {
        const int oc = g * cout_g + ocl;
        const float* dyc = dy.channel_ptr(n, oc);
        const float* wk = w.data() + (static_cast<std::size_t>(oc) * cin_g + icl) * kvol;
        for (int zo = 0; zo < Do; ++zo) {
          for (int yo = 0; yo < Ho; ++yo) {
            const float* dyr = dyc + (static_cast<std::size_t>(zo) * Ho + yo) * Wo;
            for (int z = 0; z < kd; ++z) {
              const int zi = zo * sd - pd + z;
              if (zi < 0 || zi >= D) continue;
              for (int v = 0; v < kh; ++v) {
                const int yi = yo * sh - ph + v;
                if (yi < 0 || yi >= H) continue;
                float* dxr = dxc + (static_cast<std::size_t>(zi) * H + yi) * W;
                const float* wr = wk + (static_cast<std::size_t>(z) * kh + v) * kw;
                for (int u = 0; u < kw; ++u) {
                  const float wv = wr[u];
                  const int off = u - pw;
                  int lo, hi;
                  valid_range(off, sw, W, Wo, lo, hi);
                  if (sw == 1) {
                    float* ds = dxr + off;
#pragma omp simd
                    for (int xo = lo; xo < hi; ++xo) ds[xo] += wv * dyr[xo];
                  } else {
                    for (int xo = lo; xo < hi; ++xo) dxr[xo * sw + off] += wv * dyr[xo];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const Tensor& x, const Tensor& dy, const ConvSpec& s,
                          std::span<float> dw) {
  check_conv_args(x, std::span<const float>(dw.data(), dw.size()), s);
  if (dy.channels() != s.out_channels || dy.batch() != x.batch())
    throw std::invalid_argument("gradient shape does not match convolution outputs");

  const int N = x.batch(), D = x.depth(), H = x.height(), W = x.width();
  const int Do = dy.depth(), Ho = dy.height(), Wo = dy.width();
  const int cin_g = s.in_per_group(), cout_g = s.out_per_group();
  const int kd = s.kernel[0], kh = s.kernel[1], kw = s.kernel[2];
  const int sd = s.stride[0], sh = s.stride[1], sw = s.stride[2];
  const int pd = s.pad[0], ph = s.pad[1], pw = s.pad[2];
  const std::size_t kvol = s.kernel_volume();

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    for (int icl = 0; icl < cin_g; ++icl) {
      const int g = oc / cout_g;
      std::vector<double> acc(kvol, 0.0);
      for (int n = 0; n < N; ++n) {
        const float* xc = x.channel_ptr(n, g * cin_g + icl);
        const float* dyc = dy.channel_ptr(n, oc);
        for (int zo = 0; zo < Do; ++zo) {
          for (int yo = 0; yo < Ho; ++yo) {
            const float* dyr = dyc + (static_cast<std::size_t>(zo) * Ho + yo) * Wo;
            for (int z = 0; z < kd; ++z) {
              const int zi = zo * sd - pd + z;
              if (zi < 0 || zi >= D) continue;
              for (int v = 0; v < kh; ++v) {
                const int yi = yo * sh - ph + v;
                if (yi < 0 || yi >= H) continue;
                const float* xr = xc + (static_cast<std::size_t>(zi) * H + yi) * W;
                double* ar = acc.data() + (static_cast<std::size_t>(z) * kh + v) * kw;
                for (int u = 0; u < kw; ++u) {
                  const int off = u - pw;
                  int lo, hi;
                  valid_range(off, sw, W, Wo, lo, hi);
                  float dot = 0.0f;
                  if (sw == 1) {
                    const float* xs = xr + off;
#pragma omp simd reduction(+ : dot)
                    for (int xo = lo; xo < hi; ++xo) dot += dyr[xo] * xs[xo];
                  } else {
                    for (int xo = lo; xo < hi; ++xo) dot += dyr[xo] * xr[xo * sw + off];
                  }
                  ar[u] += dot;
                }
              }
            }
          }
        }
      }
      float* dwk = dw.data() + (static_cast<std::size_t>(oc) * cin_g + icl) * kvol;
      for (std::size_t k = 0; k < kvol; ++k) dwk[k] += static_cast<float>(acc[k]);
    }
  }
}

void bias_backward(const Tensor& dy, std::span<float> db) {
  if (db.size() != static_cast<std::size_t>(dy.channels()))
    throw std::invalid_argument("bias gradient size mismatch");
  const std::size_t m = dy.spatial_size();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < dy.channels(); ++c) {
    double sum = 0.0;
    for (int n = 0; n < dy.batch(); ++n) {
      const float* p = dy.channel_ptr(n, c);
      for (std::size_t i = 0; i < m; ++i) sum += p[i];
    }
    db[static_cast<std::size_t>(c)] += static_cast<float>(sum);
  }
}

void instance_norm_forward(const Tensor& x, std::span<const float> gamma,
                           std::span<const float> beta, float eps, Tensor& y, Tensor& xhat,
                           std::vector<float>& inv_std) {
  const int N = x.batch(), C = x.channels();
  if (gamma.size() != static_cast<std::size_t>(C) || beta.size() != static_cast<std::size_t>(C))
    throw std::invalid_argument("instance norm parameter size mismatch");
  reshape(y, N, C, x.depth(), x.height(), x.width());
  reshape(xhat, N, C, x.depth(), x.height(), x.width());
  inv_std.assign(static_cast<std::size_t>(N) * C, 0.0f);
  const std::size_t m = x.spatial_size();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* src = x.channel_ptr(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) sum += src[i];
      const double mean = sum / static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      // relative epsilon keeps the output exactly invariant to input scale
      const auto inv = static_cast<float>(1.0 / std::sqrt(var > 0.0 ? var * (1.0 + eps) : eps));
      const auto meanf = static_cast<float>(mean);
      inv_std[static_cast<std::size_t>(n) * C + c] = inv;
      float* xh = xhat.channel_ptr(n, c);
      float* out = y.channel_ptr(n, c);
      const float gm = gamma[static_cast<std::size_t>(c)];
      const float bt = beta[static_cast<std::size_t>(c)];
#pragma omp simd
      for (std::size_t i = 0; i < m; ++i) {
        xh[i] = (src[i] - meanf) * inv;
        out[i] = gm * xh[i] + bt;
      }
    }
  }
}

void instance_norm_backward(const Tensor& dy, const Tensor& xhat, std::span<const float> gamma,
                            std::span<const float> inv_std, float eps, Tensor& dx,
                            std::span<float> dgamma, std::span<float> dbeta) {
  const int N = dy.batch(), C = dy.channels();
  reshape(dx, N, C, dy.depth(), dy.height(), dy.width());
  const std::size_t m = dy.spatial_size();
  std::vector<double> sums_g(static_cast<std::size_t>(N) * C), sums_gx(sums_g.size());

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* g = dy.channel_ptr(n, c);
      const float* xh = xhat.channel_ptr(n, c);
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        sg += g[i];
        sgx += static_cast<double>(g[i]) * xh[i];
      }
      const std::size_t nc = static_cast<std::size_t>(n) * C + c;
      sums_g[nc] = sg;
      sums_gx[nc] = sgx;
      const auto scale = static_cast<float>(gamma[static_cast<std::size_t>(c)] * inv_std[nc] /
                                            static_cast<double>(m));
      const auto mf = static_cast<float>(m);
      const auto sgf = static_cast<float>(sg);
      const auto sgxf = static_cast<float>(sgx * (1.0 + eps));
      float* out = dx.channel_ptr(n, c);
#pragma omp simd
      for (std::size_t i = 0; i < m; ++i) out[i] = scale * (mf * g[i] - sgf - xh[i] * sgxf);
    }
  }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const std::size_t nc = static_cast<std::size_t>(n) * C + c;
      dgamma[static_cast<std::size_t>(c)] += static_cast<float>(sums_gx[nc]);
      dbeta[static_cast<std::size_t>(c)] += static_cast<float>(sums_g[nc]);
    }
}

void leaky_relu_forward(Tensor& x, float slope) {
  float* p = x.data.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) p[i] = p[i] < 0.0f ? p[i] * slope : p[i];
}

void leaky_relu_backward(const Tensor& y, Tensor& dy, float slope) {
  const float* out = y.data.data();
  float* g = dy.data.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) g[i] = out[i] < 0.0f ? g[i] * slope : g[i];
}

void softmax_channels(Tensor& x) {
  const int N = x.batch(), C = x.channels();
  const auto m = static_cast<std::ptrdiff_t>(x.spatial_size());
  for (int n = 0; n < N; ++n) {
    float* base = x.channel_ptr(n, 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) {
      float mx = base[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, base[c * m + i]);
      float sum = 0.0f;
      for (int c = 0; c < C; ++c) {
        const float e = std::exp(base[c * m + i] - mx);
        base[c * m + i] = e;
        sum += e;
      }
      const float inv = 1.0f / sum;
      for (int c = 0; c < C; ++c) base[c * m + i] *= inv;
    }
  }
}

}  // namespace tassnet::kernels
