#include "tassnet/loss.hpp"

#include <string>

namespace tassnet {
namespace {

void check_pair(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("prediction " + shape_string(pred.dims) +
                                " and target " + shape_string(target.dims) + " differ in shape");
  if (pred.channels() < 2) throw std::invalid_argument("loss needs at least two classes");
}

}  // namespace

double dice_focal_loss(const Tensor& probs, const Tensor& target, const DiceFocalConfig& cfg,
                       Tensor* grad) {
  cfg.validate();
  check_pair(probs, target);
  const std::size_t voxels = probs.spatial_size();
  for (int n = 0; n < probs.batch(); ++n)
    for (std::size_t v = 0; v < voxels; ++v) {
      double sum = 0.0;
      for (int k = 0; k < probs.channels(); ++k) sum += probs.channel_ptr(n, k)[v];
      if (std::abs(sum - 1.0) > 1e-4)
        throw std::invalid_argument("prediction is not normalized at sample " + std::to_string(n) +
                                    ", voxel " + std::to_string(v));
    }
  std::vector<double> p(probs.data.begin(), probs.data.end());
  std::vector<double> g(target.data.begin(), target.data.end());
  std::vector<double> dg(grad ? p.size() : 0);
  const double loss =
      dice_focal_loss_raw<double>(p, g, probs.batch(), probs.channels(), cfg, dg);
  if (grad) {
    *grad = Tensor(probs.batch(), probs.channels(), probs.depth(), probs.height(), probs.width());
    for (std::size_t i = 0; i < dg.size(); ++i) grad->data[i] = static_cast<float>(dg[i]);
  }
  return loss;
}

double dice_focal_loss_from_logits(const Tensor& logits, const Tensor& target,
                                   const DiceFocalConfig& cfg, Tensor* grad) {
  cfg.validate();
  check_pair(logits, target);
  std::vector<double> z(logits.data.begin(), logits.data.end());
  std::vector<double> g(target.data.begin(), target.data.end());
  std::vector<double> dz(grad ? z.size() : 0);
  const double loss =
      dice_focal_from_logits_raw<double>(z, g, logits.batch(), logits.channels(), cfg, dz);
  if (grad) {
    *grad = Tensor(logits.batch(), logits.channels(), logits.depth(), logits.height(),
                   logits.width());
    for (std::size_t i = 0; i < dz.size(); ++i) grad->data[i] = static_cast<float>(dz[i]);
  }
  return loss;
}

}  // namespace tassnet
