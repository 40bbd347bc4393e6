#include "tassnet/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace tassnet {

void AdamWConfig::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(weight_decay) || !open_unit(beta1) || !open_unit(beta2))
    throw std::invalid_argument("AdamW coefficients must lie in (0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("AdamW eps must be positive");
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void AdamW::step(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  const auto decay = static_cast<float>(1.0 - lr * cfg_.weight_decay);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    const auto n = static_cast<std::ptrdiff_t>(p.size());
#pragma omp parallel for simd schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const float g = p.grad[static_cast<std::size_t>(j)];
      m[static_cast<std::size_t>(j)] = b1 * m[static_cast<std::size_t>(j)] + (1.0f - b1) * g;
      v[static_cast<std::size_t>(j)] = b2 * v[static_cast<std::size_t>(j)] + (1.0f - b2) * g * g;
      float& w = p.value[static_cast<std::size_t>(j)];
      w *= decay;
      w -= step_size * m[static_cast<std::size_t>(j)] /
           (std::sqrt(v[static_cast<std::size_t>(j)]) * inv_sqrt_bc2 + eps);
    }
  }
}

}  // namespace tassnet
