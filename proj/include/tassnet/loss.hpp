#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tassnet/tensor.hpp"

namespace tassnet {

/// Soft Dice plus focal cross-entropy.
struct DiceFocalConfig {
  double dice_weight = 1.0;
  double focal_weight = 1.0;
  double focal_gamma = 2.0;
  /// Additive smoothing in the Dice numerator and denominator.
  double smooth = 1e-5;

  void validate() const {
    if (dice_weight < 0.0 || focal_weight < 0.0 || focal_gamma < 0.0 || smooth <= 0.0)
      throw std::invalid_argument("invalid DiceFocal configuration");
  }
  bool operator==(const DiceFocalConfig&) const = default;
};

namespace detail {
inline constexpr double kProbFloor = 1e-12;
}

/// Loss over probabilities laid out (batch, classes, voxels). Dice is averaged over every
/// (sample, class) pair, background included; focal is averaged over voxels. When `grad` is
/// non-empty it receives d(loss)/d(probs).
template <typename T>
T dice_focal_loss_raw(std::span<const T> probs, std::span<const T> target, int batch, int classes,
                      const DiceFocalConfig& cfg, std::span<T> grad = {}) {
  const std::size_t voxels = probs.size() / (static_cast<std::size_t>(batch) * classes);
  const T eps = static_cast<T>(cfg.smooth);
  const T gamma = static_cast<T>(cfg.focal_gamma);
  const T dice_scale = static_cast<T>(cfg.dice_weight) / static_cast<T>(batch * classes);
  const T focal_scale = static_cast<T>(cfg.focal_weight) / static_cast<T>(batch * voxels);
  const bool want_grad = !grad.empty();

  T dice_sum = 0;
  T focal_sum = 0;
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < classes; ++k) {
      const std::size_t off = (static_cast<std::size_t>(b) * classes + k) * voxels;
      T inter = 0, psum = 0, gsum = 0;
      for (std::size_t v = 0; v < voxels; ++v) {
        inter += probs[off + v] * target[off + v];
        psum += probs[off + v];
        gsum += target[off + v];
      }
      const T denom = psum + gsum + eps;
      const T numer = T(2) * inter + eps;
      dice_sum += numer / denom;
      for (std::size_t v = 0; v < voxels; ++v) {
        const T p = probs[off + v];
        const T g = target[off + v];
        T d_focal = 0;
        if (g != T(0)) {
          const T pc = std::max(p, static_cast<T>(detail::kProbFloor));
          const T q = T(1) - pc;
          const T logp = std::log(pc);
          const T qg = std::pow(q, gamma);
          focal_sum += -g * qg * logp;
          if (want_grad) {
            const T qg1 = q > T(0) ? gamma * std::pow(q, gamma - T(1)) : T(0);
            d_focal = g * (qg1 * logp - qg / pc);
          }
        }
        if (want_grad) {
          const T d_dice = -(T(2) * g * denom - numer) / (denom * denom);
          grad[off + v] = dice_scale * d_dice + focal_scale * d_focal;
        }
      }
    }
  }
  const T dice_loss = T(1) - dice_sum / static_cast<T>(batch * classes);
  const T focal_loss = focal_sum / static_cast<T>(batch * voxels);
  return static_cast<T>(cfg.dice_weight) * dice_loss + static_cast<T>(cfg.focal_weight) * focal_loss;
}

/// Channel softmax of (batch, classes, voxels) logits.
template <typename T>
std::vector<T> softmax_raw(std::span<const T> logits, int batch, int classes) {
  const std::size_t voxels = logits.size() / (static_cast<std::size_t>(batch) * classes);
  std::vector<T> p(logits.size());
  for (int b = 0; b < batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * classes * voxels;
    for (std::size_t v = 0; v < voxels; ++v) {
      T mx = logits[base + v];
      for (int k = 1; k < classes; ++k) mx = std::max(mx, logits[base + k * voxels + v]);
      T sum = 0;
      for (int k = 0; k < classes; ++k) {
        const T e = std::exp(logits[base + k * voxels + v] - mx);
        p[base + k * voxels + v] = e;
        sum += e;
      }
      for (int k = 0; k < classes; ++k) p[base + k * voxels + v] /= sum;
    }
  }
  return p;
}

/// DiceFocal applied to softmax(logits); `grad` (optional) receives d(loss)/d(logits).
template <typename T>
T dice_focal_from_logits_raw(std::span<const T> logits, std::span<const T> target, int batch,
                             int classes, const DiceFocalConfig& cfg, std::span<T> grad = {}) {
  const std::vector<T> p = softmax_raw(logits, batch, classes);
  if (grad.empty()) return dice_focal_loss_raw<T>(p, target, batch, classes, cfg);
  std::vector<T> gp(p.size());
  const T loss = dice_focal_loss_raw<T>(p, target, batch, classes, cfg, gp);
  const std::size_t voxels = logits.size() / (static_cast<std::size_t>(batch) * classes);
  for (int b = 0; b < batch; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * classes * voxels;
    for (std::size_t v = 0; v < voxels; ++v) {
      T dot = 0;
      for (int k = 0; k < classes; ++k) dot += p[base + k * voxels + v] * gp[base + k * voxels + v];
      for (int k = 0; k < classes; ++k) {
        const std::size_t i = base + k * voxels + v;
        grad[i] = p[i] * (gp[i] - dot);
      }
    }
  }
  return loss;
}

/// Validated entry point on probability tensors: shapes must match and every voxel's
/// probabilities must sum to 1 within 1e-4.
double dice_focal_loss(const Tensor& probs, const Tensor& target, const DiceFocalConfig& cfg,
                       Tensor* grad = nullptr);

/// Training entry point on logits; `grad` receives d(loss)/d(logits).
double dice_focal_loss_from_logits(const Tensor& logits, const Tensor& target,
                                   const DiceFocalConfig& cfg, Tensor* grad = nullptr);

}  // namespace tassnet
