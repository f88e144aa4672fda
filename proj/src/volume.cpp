#include "perfvox/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "perfvox/error.hpp"

namespace perfvox {

namespace {

void validate_geometry(const Dims& dims, const Spacing& spacing) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
    throw Error(ErrorCode::Dimensionality, "volume dimensions must be positive");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw Error(ErrorCode::Domain, "voxel spacing must be positive and finite");
    }
  }
}

}  // namespace

double Spacing::min() const { return std::min({sx, sy, sz}); }

Volume3D::Volume3D(Dims dims, Spacing spacing, std::vector<double> data, std::optional<Affine> affine)
    : dims_(dims), spacing_(spacing), data_(std::move(data)), affine_(affine) {
  validate_geometry(dims_, spacing_);
  if (data_.size() != dims_.count()) {
    throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) +
                                              " does not match dims product " + std::to_string(dims_.count()));
  }
  if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::NonFinite, "volume intensities must be finite");
  }
}

Volume3D::Volume3D(Dims dims, Spacing spacing, double fill) : dims_(dims), spacing_(spacing) {
  validate_geometry(dims_, spacing_);
  data_.assign(dims_.count(), fill);
}

BrainMask::BrainMask(Dims dims, std::vector<std::uint8_t> inside) : dims_(dims), inside_(std::move(inside)) {
  if (inside_.size() != dims_.count()) {
    throw Error(ErrorCode::ShapeMismatch, "mask length does not match dims");
  }
  for (auto& v : inside_) v = v ? 1 : 0;
  count_ = static_cast<std::size_t>(std::count(inside_.begin(), inside_.end(), std::uint8_t{1}));
  if (count_ == 0) {
    throw Error(ErrorCode::DegenerateInput, "brain mask is empty");
  }
}

BrainMask BrainMask::full(Dims dims) { return BrainMask(dims, std::vector<std::uint8_t>(dims.count(), 1)); }

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": dims " + std::to_string(a.nx) + "x" + std::to_string(a.ny) + "x" +
                    std::to_string(a.nz) + " vs " + std::to_string(b.nx) + "x" + std::to_string(b.ny) + "x" +
                    std::to_string(b.nz));
  }
}

}  // namespace perfvox
