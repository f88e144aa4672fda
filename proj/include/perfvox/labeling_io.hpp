#pragma once

#include <filesystem>

#include <json.hpp>
#include "perfvox/slic.hpp"

namespace perfvox {

nlohmann::json to_json(const SlicParams& params);
SlicParams slic_params_from_json(const nlohmann::json& j);

nlohmann::json labeling_sidecar(const SupervoxelLabeling& labeling, const SlicParams& params);

// Writes labels as an int32 NIfTI (background -1) plus the JSON sidecar.
void save_labeling(const SupervoxelLabeling& labeling, const SlicParams& params, const Spacing& spacing,
                   const std::filesystem::path& nifti_path, const std::filesystem::path& sidecar_path);

SupervoxelLabeling load_labeling(const std::filesystem::path& nifti_path, const std::filesystem::path& sidecar_path);

}  // namespace perfvox
