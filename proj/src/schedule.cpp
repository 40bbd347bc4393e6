#include "tassnet/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tassnet {

void LRScheduleConfig::validate() const {
  if (total_epochs < 1 || cycles < 1)
    throw std::invalid_argument("total_epochs and cycles must be positive");
  if (total_epochs % cycles != 0)
    throw std::invalid_argument("total_epochs (" + std::to_string(total_epochs) +
                                ") is not divisible by cycles (" + std::to_string(cycles) + ")");
  if (!(lr_min > 0.0)) throw std::invalid_argument("lr_min must be positive");
  if (!(lr_max > lr_min)) throw std::invalid_argument("lr_max must exceed lr_min");
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
}

double lr_at(const LRScheduleConfig& cfg, int epoch) {
  cfg.validate();
  if (epoch < 0 || epoch >= cfg.total_epochs)
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.total_epochs) + ")");
  const int t = epoch % cfg.epochs_per_cycle();
  if (t == 0) return cfg.lr_max;
  return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * std::exp(-cfg.decay() * t);
}

}  // namespace tassnet
