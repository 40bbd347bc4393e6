#pragma once

#include <vector>

#include "tassnet/layers.hpp"

namespace tassnet {

struct AdamWConfig {
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  bool operator==(const AdamWConfig&) const = default;
};

/// Adam with decoupled weight decay: parameters shrink by lr * weight_decay before the
/// moment-based update, and the decay never enters the moment estimates.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);

  void step(double lr);
  long steps() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long step_ = 0;
};

}  // namespace tassnet
