#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace perfvox {

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  double operator[](int axis) const { return axis == 0 ? sx : (axis == 1 ? sy : sz); }
  double min() const;
  bool operator==(const Spacing&) const = default;
};

using Affine = std::array<double, 16>;  // row-major voxel -> world

// Volumetric scalar field, x fastest. Intensities are always finite.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, Spacing spacing, std::vector<double> data, std::optional<Affine> affine = std::nullopt);
  Volume3D(Dims dims, Spacing spacing, double fill = 0.0);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  const std::optional<Affine>& affine() const { return affine_; }
  void set_affine(std::optional<Affine> affine) { affine_ = affine; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t x, std::size_t y, std::size_t z) const { return data_[dims_.index(x, y, z)]; }
  double& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }

  bool operator==(const Volume3D&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<double> data_;
  std::optional<Affine> affine_;
};

// Per-voxel brain membership with at least one voxel set.
class BrainMask {
 public:
  BrainMask() = default;
  BrainMask(Dims dims, std::vector<std::uint8_t> inside);
  static BrainMask full(Dims dims);

  const Dims& dims() const { return dims_; }
  bool operator[](std::size_t i) const { return inside_[i] != 0; }
  std::span<const std::uint8_t> data() const { return inside_; }
  std::size_t count() const { return count_; }

  bool operator==(const BrainMask&) const = default;

 private:
  Dims dims_;
  std::vector<std::uint8_t> inside_;
  std::size_t count_ = 0;
};

void require_same_dims(const Dims& a, const Dims& b, const char* what);

}  // namespace perfvox
