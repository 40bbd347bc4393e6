#pragma once

#include <filesystem>

#include "tassnet/volume.hpp"

namespace tassnet {

/// Reads a 3D NIfTI-1 image (`.nii` or `.nii.gz`). Intensities are promoted to float
/// after applying scl_slope/scl_inter. Spacing comes from pixdim; the affine from sform
/// when present, else qform, else pixdim on the diagonal.
Volume load_volume(const std::filesystem::path& path);

/// Reads an integer-valued NIfTI-1 image as labels of `scheme`.
LabelMap load_label_map(const std::filesystem::path& path,
                        const ClassScheme& scheme = ClassScheme::fine());

/// Writes float32 data. Gzip compression is chosen by a `.gz` suffix.
void save_volume(const Volume& v, const std::filesystem::path& path);

/// Writes uint8 labels.
void save_label_map(const LabelMap& l, const std::filesystem::path& path);

/// Writes one float32 file per class: `<stem>_class<k>.nii.gz` inside `directory`.
std::vector<std::filesystem::path> save_probability_channels(const ProbabilityMap& p,
                                                             const std::filesystem::path& directory,
                                                             const std::string& stem);

}  // namespace tassnet
