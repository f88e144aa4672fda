#pragma once

#include <cstddef>
#include <filesystem>

#include "perfvox/volume.hpp"

namespace perfvox {

enum class NiftiDatatype : short {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

struct NiftiLoadReport {
  std::size_t nan_replaced = 0;
  NiftiDatatype datatype = NiftiDatatype::Float32;
  bool big_endian = false;
  bool gzipped = false;
};

struct LoadedNifti {
  Volume3D volume;
  NiftiLoadReport report;
};

// Reads a single-frame 3D NIfTI-1 image (.nii, .nii.gz, or .hdr/.img pair).
// Non-finite intensities are replaced by 0 and counted in the report.
LoadedNifti load_nifti_with_report(const std::filesystem::path& path);
Volume3D load_nifti(const std::filesystem::path& path);

// Writes little-endian NIfTI-1 single file; gzip-compressed when the path ends in ".gz".
// Integer datatypes store rounded values.
void save_nifti(const Volume3D& volume, const std::filesystem::path& path,
                NiftiDatatype datatype = NiftiDatatype::Float32);

}  // namespace perfvox
