#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tassnet/augment.hpp"
#include "tassnet/loss.hpp"
#include "tassnet/network.hpp"
#include "tassnet/optimizer.hpp"
#include "tassnet/schedule.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

struct TrainConfig {
  int batch_size = 4;
  int epochs = 1000;
  int iterations_per_epoch = 250;
  int early_stop_patience = 100;
  AdamWConfig optimizer;
  DiceFocalConfig loss;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;

  /// 250 epochs, patience 50.
  static TrainConfig coarse();
  /// 1000 epochs, patience 100.
  static TrainConfig fine();

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_time = 0.0;  // seconds since training started
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  bool stopped_early = false;

  /// One JSON object per line: epoch, lr, train_loss, val_loss, wall_time.
  void write_jsonl(const std::filesystem::path& path) const;
  static TrainingLog read_jsonl(const std::filesystem::path& path);
};

/// One training or validation case; the image is expected to be intensity-normalized.
struct Case {
  std::string id;
  Volume image;
  LabelMap labels;
};

enum class SampleMode { Volumetric, Slices };

struct Batch {
  Tensor image;   // (n, 1, d, h, w)
  Tensor target;  // one-hot, (n, classes, d, h, w)
};

/// Uniformly sampled (with replacement) training cases; slice mode draws one random axial
/// slice per sample. All cases must share one grid.
class SegmentationDataset {
 public:
  SegmentationDataset(std::vector<Case> train, std::vector<Case> validation, SampleMode mode);

  SampleMode mode() const { return mode_; }
  const ClassScheme& scheme() const { return scheme_; }
  const Index3& case_shape() const { return shape_; }
  const std::vector<Case>& train_cases() const { return train_; }
  const std::vector<Case>& validation_cases() const { return validation_; }

  /// Throws std::invalid_argument when the network cannot consume these cases.
  void check_compatible(const NetworkConfig& cfg) const;

  /// Sample `slot` of every batch draws from an rng seeded by (seed, epoch, iteration, slot),
  /// so batches are reproducible independently of how they are produced.
  Batch sample_batch(int batch_size, const AugmentationConfig& aug, std::uint64_t seed, int epoch,
                     int iteration) const;
  /// Unaugmented validation data; slices are grouped into batches of at most `max_batch`.
  std::vector<Batch> validation_batches(int max_batch) const;

 private:
  std::vector<Case> train_;
  std::vector<Case> validation_;
  SampleMode mode_;
  ClassScheme scheme_;
  Index3 shape_{};
};

/// Seed for one sample slot.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c);

Tensor image_tensor(const std::vector<const Volume*>& volumes);
Tensor one_hot_tensor(const std::vector<const LabelMap*>& labels);

struct TrainHooks {
  /// Replaces the dataset validation loss when set.
  std::function<double(Network&, int epoch)> validator;
  std::function<void(long step, double loss)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Network best;
  TrainingLog log;
};

/// Runs up to `schedule.total_epochs` epochs of `iterations_per_epoch` AdamW steps. The
/// learning rate is set from the cyclical schedule at the start of each epoch. Validation
/// runs after every epoch; training stops after `early_stop_patience` epochs without a
/// strictly lower validation loss. Returns the parameters of the best validation epoch.
TrainResult train(Network& net, const SegmentationDataset& data, const TrainConfig& cfg,
                  const LRScheduleConfig& schedule, const TrainHooks& hooks = {});

double validation_loss(Network& net, const SegmentationDataset& data, const DiceFocalConfig& loss);

}  // namespace tassnet
