#include "perfvox/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "perfvox/error.hpp"

namespace perfvox {

NormalizationMode parse_normalization_mode(std::string_view text) {
  if (text == "zscore") return NormalizationMode::ZScore;
  if (text == "mean1") return NormalizationMode::Mean1;
  throw Error(ErrorCode::Parse, "unknown normalization mode '" + std::string(text) + "' (expected zscore|mean1)");
}

std::string_view to_string(NormalizationMode mode) {
  return mode == NormalizationMode::ZScore ? "zscore" : "mean1";
}

Volume3D normalize_intensity(const Volume3D& volume, const BrainMask& mask, NormalizationMode mode) {
  require_same_dims(volume.dims(), mask.dims(), "normalize_intensity");
  if (mask.count() < 2) {
    throw Error(ErrorCode::DegenerateInput, "normalization needs at least 2 masked voxels");
  }
  const auto n = static_cast<double>(mask.count());
  double sum = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) sum += volume[i];
  }
  const double mean = sum / n;

  Volume3D out(volume.dims(), volume.spacing(), 0.0);
  out.set_affine(volume.affine());

  if (mode == NormalizationMode::Mean1) {
    if (mean == 0.0) throw Error(ErrorCode::DegenerateInput, "masked mean is zero; mean1 normalization undefined");
    for (std::size_t i = 0; i < volume.size(); ++i) {
      if (mask[i]) out[i] = volume[i] / mean;
    }
    return out;
  }

  double ss = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) {
      double d = volume[i] - mean;
      ss += d * d;
    }
  }
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0) || sd <= 1e-300) {
    throw Error(ErrorCode::DegenerateInput, "masked intensities are constant; zscore undefined");
  }
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) out[i] = (volume[i] - mean) / sd;
  }
  return out;
}

BrainMask auto_mask(const Volume3D& volume, double threshold_fraction) {
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0)) {
    throw Error(ErrorCode::Domain, "mask threshold fraction must lie in (0, 1)");
  }
  auto data = volume.data();
  double vmax = *std::max_element(data.begin(), data.end());
  if (!(vmax > 0.0)) {
    throw Error(ErrorCode::DegenerateInput, "volume has no positive intensity; cannot derive a mask");
  }
  const double threshold = threshold_fraction * vmax;
  std::vector<std::uint8_t> inside(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) inside[i] = data[i] > threshold ? 1 : 0;
  return BrainMask(volume.dims(), std::move(inside));
}

}  // namespace perfvox
