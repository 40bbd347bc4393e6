#pragma once

namespace tassnet {

/// Cyclical learning rate with exponential decay inside each cycle. The rate resets to
/// `lr_max` at the first epoch of every cycle and decays toward `lr_min` as
/// lr_min + (lr_max - lr_min) * exp(-decay * t), t being the epoch offset within the cycle.
struct LRScheduleConfig {
  int total_epochs = 1000;
  int cycles = 4;
  double lr_max = 0.1;
  double lr_min = 0.01;
  /// Decay scale; the per-epoch decay rate is scale / epochs_per_cycle.
  double scale = 4.0;

  int epochs_per_cycle() const { return total_epochs / cycles; }
  double decay() const { return scale / static_cast<double>(epochs_per_cycle()); }
  /// Throws std::invalid_argument unless total_epochs is a positive multiple of cycles,
  /// lr_max > lr_min > 0 and scale > 0.
  void validate() const;

  bool operator==(const LRScheduleConfig&) const = default;
};

/// Learning rate for epoch `epoch` in [0, total_epochs); throws std::out_of_range otherwise.
double lr_at(const LRScheduleConfig& cfg, int epoch);

}  // namespace tassnet
