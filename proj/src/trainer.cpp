#include "tassnet/trainer.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace tassnet {

TrainConfig TrainConfig::coarse() {
  TrainConfig c;
  c.epochs = 250;
  c.early_stop_patience = 50;
  return c;
}

TrainConfig TrainConfig::fine() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (batch_size < 1 || epochs < 1 || iterations_per_epoch < 1)
    throw std::invalid_argument("batch_size, epochs and iterations_per_epoch must be positive");
  if (early_stop_patience < 1 || early_stop_patience >= epochs)
    throw std::invalid_argument("early_stop_patience must be in [1, epochs)");
  optimizer.validate();
  loss.validate();
  augmentation.validate();
}

void TrainingLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  for (const auto& r : epochs) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"lr", r.lr},
                        {"train_loss", r.train_loss},
                        {"val_loss", r.val_loss},
                        {"wall_time", r.wall_time}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

TrainingLog TrainingLog::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open training log");
  TrainingLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.lr = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_loss = j.at("val_loss").get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    if (log.best_epoch < 0 || r.val_loss < log.best_val_loss) {
      log.best_epoch = r.epoch;
      log.best_val_loss = r.val_loss;
    }
    log.epochs.push_back(r);
  }
  return log;
}

SegmentationDataset::SegmentationDataset(std::vector<Case> train, std::vector<Case> validation,
                                         SampleMode mode)
    : train_(std::move(train)), validation_(std::move(validation)), mode_(mode),
      scheme_(ClassScheme::fine()) {
  if (train_.empty()) throw std::invalid_argument("training set is empty");
  shape_ = train_.front().image.shape();
  scheme_ = train_.front().labels.scheme();
  auto check = [&](const Case& c) {
    if (c.image.shape() != shape_ || c.labels.shape() != shape_)
      throw std::invalid_argument("case '" + c.id + "' does not share the dataset grid");
    if (c.labels.scheme() != scheme_)
      throw std::invalid_argument("case '" + c.id + "' uses a different class scheme");
  };
  for (const auto& c : train_) check(c);
  for (const auto& c : validation_) check(c);
}

void SegmentationDataset::check_compatible(const NetworkConfig& cfg) const {
  if (cfg.num_classes != scheme_.size())
    throw std::invalid_argument("network predicts " + std::to_string(cfg.num_classes) +
                                " classes but the dataset has " + std::to_string(scheme_.size()));
  if (cfg.in_channels != 1) throw std::invalid_argument("dataset provides single-channel images");
  if ((mode_ == SampleMode::Slices) != (cfg.dims == 2))
    throw std::invalid_argument("2D networks train on slices and 3D networks on volumes");
  const std::array<int, 3> spatial{mode_ == SampleMode::Slices ? 1 : static_cast<int>(shape_[2]),
                                   static_cast<int>(shape_[1]), static_cast<int>(shape_[0])};
  (void)cfg.stage_extents(spatial);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return mix(mix(mix(mix(seed) ^ a) ^ b) ^ c);
}

Tensor image_tensor(const std::vector<const Volume*>& volumes) {
  const auto& s = volumes.front()->shape();
  Tensor t(static_cast<int>(volumes.size()), 1, static_cast<int>(s[2]), static_cast<int>(s[1]),
           static_cast<int>(s[0]));
  for (std::size_t n = 0; n < volumes.size(); ++n) {
    if (volumes[n]->shape() != s) throw std::invalid_argument("batch volumes differ in shape");
    const auto d = volumes[n]->data();
    std::copy(d.begin(), d.end(), t.channel_ptr(static_cast<int>(n), 0));
  }
  return t;
}

Tensor one_hot_tensor(const std::vector<const LabelMap*>& labels) {
  const auto& s = labels.front()->shape();
  const int k = labels.front()->scheme().size();
  Tensor t(static_cast<int>(labels.size()), k, static_cast<int>(s[2]), static_cast<int>(s[1]),
           static_cast<int>(s[0]));
  const std::size_t m = t.spatial_size();
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n]->shape() != s) throw std::invalid_argument("batch label maps differ in shape");
    const auto l = labels[n]->labels();
    float* base = t.channel_ptr(static_cast<int>(n), 0);
    for (std::size_t v = 0; v < m; ++v) base[static_cast<std::size_t>(l[v]) * m + v] = 1.0f;
  }
  return t;
}

namespace {

Volume slice_of(const Volume& v, std::int64_t z) {
  const auto& s = v.shape();
  const std::size_t plane = static_cast<std::size_t>(s[0] * s[1]);
  const auto d = v.data().subspan(static_cast<std::size_t>(z) * plane, plane);
  return Volume(Geometry({s[0], s[1], 1}, v.spacing()), std::vector<float>(d.begin(), d.end()));
}

LabelMap slice_of(const LabelMap& l, std::int64_t z) {
  const auto& s = l.shape();
  const std::size_t plane = static_cast<std::size_t>(s[0] * s[1]);
  const auto d = l.labels().subspan(static_cast<std::size_t>(z) * plane, plane);
  return LabelMap(Geometry({s[0], s[1], 1}, l.spacing()),
                  std::vector<std::uint8_t>(d.begin(), d.end()), l.scheme());
}

Batch make_batch(const std::vector<Volume>& images, const std::vector<LabelMap>& labels) {
  std::vector<const Volume*> iv;
  std::vector<const LabelMap*> lv;
  for (const auto& v : images) iv.push_back(&v);
  for (const auto& l : labels) lv.push_back(&l);
  return {image_tensor(iv), one_hot_tensor(lv)};
}

}  // namespace

Batch SegmentationDataset::sample_batch(int batch_size, const AugmentationConfig& aug,
                                        std::uint64_t seed, int epoch, int iteration) const {
  std::vector<Volume> images;
  std::vector<LabelMap> labels;
  for (int slot = 0; slot < batch_size; ++slot) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(iteration),
                                    static_cast<std::uint64_t>(slot)));
    const auto idx =
        std::uniform_int_distribution<std::size_t>(0, train_.size() - 1)(rng);
    const Case& c = train_[idx];
    if (mode_ == SampleMode::Slices) {
      const auto z = std::uniform_int_distribution<std::int64_t>(0, shape_[2] - 1)(rng);
      auto [im, lb] = apply_augmentations(aug, slice_of(c.image, z), slice_of(c.labels, z), rng);
      images.push_back(std::move(im));
      labels.push_back(std::move(lb));
    } else {
      auto [im, lb] = apply_augmentations(aug, c.image, c.labels, rng);
      images.push_back(std::move(im));
      labels.push_back(std::move(lb));
    }
  }
  return make_batch(images, labels);
}

std::vector<Batch> SegmentationDataset::validation_batches(int max_batch) const {
  std::vector<Batch> out;
  if (mode_ == SampleMode::Volumetric) {
    for (const auto& c : validation_)
      out.push_back(make_batch({c.image}, {c.labels}));
    return out;
  }
  std::vector<Volume> images;
  std::vector<LabelMap> labels;
  for (const auto& c : validation_) {
    for (std::int64_t z = 0; z < shape_[2]; ++z) {
      images.push_back(slice_of(c.image, z));
      labels.push_back(slice_of(c.labels, z));
      if (static_cast<int>(images.size()) == max_batch) {
        out.push_back(make_batch(images, labels));
        images.clear();
        labels.clear();
      }
    }
  }
  if (!images.empty()) out.push_back(make_batch(images, labels));
  return out;
}

double validation_loss(Network& net, const SegmentationDataset& data, const DiceFocalConfig& loss) {
  double total = 0.0;
  std::size_t samples = 0;
  for (const auto& b : data.validation_batches(16)) {
    const Tensor logits = net.forward(b.image, false);
    total += dice_focal_loss_from_logits(logits, b.target, loss) * b.image.batch();
    samples += static_cast<std::size_t>(b.image.batch());
  }
  if (samples == 0) throw std::invalid_argument("validation set is empty");
  return total / static_cast<double>(samples);
}

TrainResult train(Network& net, const SegmentationDataset& data, const TrainConfig& cfg,
                  const LRScheduleConfig& schedule, const TrainHooks& hooks) {
  cfg.validate();
  schedule.validate();
  if (schedule.total_epochs != cfg.epochs)
    throw std::invalid_argument("schedule covers " + std::to_string(schedule.total_epochs) +
                                " epochs but training runs " + std::to_string(cfg.epochs));
  if (data.validation_cases().empty() && !hooks.validator)
    throw std::invalid_argument("training needs at least one validation case");
  data.check_compatible(net.config());

  AdamW opt(net.parameters(), cfg.optimizer);
  TrainResult result{Network(net.config()), {}};
  result.best.copy_parameters_from(net);
  TrainingLog& log = result.log;
  const auto t0 = std::chrono::steady_clock::now();
  int since_best = 0;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    double loss_sum = 0.0;
    for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
      const Batch b = data.sample_batch(cfg.batch_size, cfg.augmentation, cfg.seed, epoch, it);
      net.zero_grad();
      const Tensor logits = net.forward(b.image, true);
      Tensor grad;
      const double loss = dice_focal_loss_from_logits(logits, b.target, cfg.loss, &grad);
      net.backward(grad);
      opt.step(lr);
      loss_sum += loss;
      if (hooks.on_step) hooks.on_step(step, loss);
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / cfg.iterations_per_epoch;
    rec.val_loss = hooks.validator ? hooks.validator(net, epoch) : validation_loss(net, data, cfg.loss);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (log.best_epoch < 0 || rec.val_loss < log.best_val_loss) {
      log.best_epoch = epoch;
      log.best_val_loss = rec.val_loss;
      result.best.copy_parameters_from(net);
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      log.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace tassnet
