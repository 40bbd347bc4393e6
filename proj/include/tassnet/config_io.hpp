#pragma once

#include <filesystem>

#include "json.hpp"
#include "tassnet/augment.hpp"
#include "tassnet/loss.hpp"
#include "tassnet/network.hpp"
#include "tassnet/optimizer.hpp"
#include "tassnet/schedule.hpp"
#include "tassnet/trainer.hpp"
#include "tassnet/volume.hpp"

namespace tassnet {

// Missing keys keep their defaults, so configuration files only need the fields they change.
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LRScheduleConfig, total_epochs, cycles, lr_max,
                                                lr_min, scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamWConfig, weight_decay, beta1, beta2, eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiceFocalConfig, dice_weight, focal_weight,
                                                focal_gamma, smooth)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    AugmentationConfig, rotation, rotation_max_deg, rotation_prob, scaling, scale_min, scale_max,
    scaling_prob, noise, noise_max_sigma, noise_prob, contrast, contrast_min, contrast_max,
    contrast_prob, gamma, gamma_min, gamma_max, gamma_prob, inversion, inversion_prob, mirroring,
    mirror_prob)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, batch_size, epochs,
                                                iterations_per_epoch, early_stop_patience,
                                                optimizer, loss, augmentation, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetworkConfig, dims, in_channels, num_classes,
                                                stage_features, cardinality, bottleneck_ratio,
                                                kernel, downsample_z_min, input_shape, leaky_slope)

void to_json(nlohmann::json& j, const ClassScheme& s);
ClassScheme class_scheme_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace tassnet
