#pragma once

#include <string_view>

#include "perfvox/volume.hpp"

namespace perfvox {

enum class NormalizationMode { ZScore, Mean1 };

NormalizationMode parse_normalization_mode(std::string_view text);
std::string_view to_string(NormalizationMode mode);

// Standardizes masked intensities. Voxels outside the mask are set to 0.
// ZScore uses the population standard deviation over masked voxels.
Volume3D normalize_intensity(const Volume3D& volume, const BrainMask& mask, NormalizationMode mode);

// Voxel i is inside iff intensity > threshold_fraction * max intensity.
BrainMask auto_mask(const Volume3D& volume, double threshold_fraction);

inline constexpr double kDefaultMaskFraction = 0.05;

}  // namespace perfvox
