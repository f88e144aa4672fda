#include "perfvox/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "perfvox/error.hpp"

namespace perfvox {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

std::vector<unsigned char> read_all(const std::filesystem::path& path, bool* gzipped) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::Io, "cannot open " + path.string());
  }
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  if (gzipped) *gzipped = gzdirect(f) == 0;
  std::vector<unsigned char> buf;
  std::array<unsigned char, 1 << 16> chunk{};
  for (;;) {
    int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(f);
      throw Error(ErrorCode::Io, "read failure in " + path.string());
    }
    if (n == 0) break;
    buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(f);
  return buf;
}

class ByteReader {
 public:
  ByteReader(const unsigned char* base, bool swap) : base_(base), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    std::array<unsigned char, sizeof(T)> raw{};
    std::memcpy(raw.data(), base_ + offset, sizeof(T));
    if (swap_) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }

 private:
  const unsigned char* base_;
  bool swap_;
};

bool host_little_endian() { return std::endian::native == std::endian::little; }

std::size_t bytes_per_voxel(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::UInt8: return 1;
    case NiftiDatatype::Int16: return 2;
    case NiftiDatatype::Int32: return 4;
    case NiftiDatatype::Float32: return 4;
    case NiftiDatatype::Float64: return 8;
  }
  return 0;
}

bool is_supported(short code) {
  switch (code) {
    case 2: case 4: case 8: case 16: case 64: return true;
    default: return false;
  }
}

Affine quaternion_affine(const ByteReader& r, const std::array<double, 8>& pixdim) {
  double b = r.get<float>(256), c = r.get<float>(260), d = r.get<float>(264);
  double qx = r.get<float>(268), qy = r.get<float>(272), qz = r.get<float>(276);
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    double norm = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= norm; c *= norm; d *= norm;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  double qfac = pixdim[0] < 0.0 ? -1.0 : 1.0;
  double dx = pixdim[1], dy = pixdim[2], dz = pixdim[3] * qfac;
  Affine m{};
  m[0] = (a * a + b * b - c * c - d * d) * dx;
  m[1] = 2.0 * (b * c - a * d) * dy;
  m[2] = 2.0 * (b * d + a * c) * dz;
  m[3] = qx;
  m[4] = 2.0 * (b * c + a * d) * dx;
  m[5] = (a * a + c * c - b * b - d * d) * dy;
  m[6] = 2.0 * (c * d - a * b) * dz;
  m[7] = qy;
  m[8] = 2.0 * (b * d - a * c) * dx;
  m[9] = 2.0 * (c * d + a * b) * dy;
  m[10] = (a * a + d * d - c * c - b * b) * dz;
  m[11] = qz;
  m[15] = 1.0;
  return m;
}

std::filesystem::path image_path_for_pair(const std::filesystem::path& header_path) {
  std::string s = header_path.string();
  bool gz = s.size() > 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
  if (gz) s.resize(s.size() - 3);
  if (s.size() > 4 && s.compare(s.size() - 4, 4, ".hdr") == 0) s.replace(s.size() - 4, 4, ".img");
  std::filesystem::path img(s);
  if (gz && std::filesystem::exists(std::filesystem::path(s + ".gz"))) return s + ".gz";
  return img;
}

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T value) {
  std::array<unsigned char, sizeof(T)> raw{};
  std::memcpy(raw.data(), &value, sizeof(T));
  if (!host_little_endian()) std::reverse(raw.begin(), raw.end());
  std::memcpy(buf.data() + offset, raw.data(), sizeof(T));
}

template <typename T>
T to_integer(double v) {
  double r = std::nearbyint(v);
  r = std::clamp(r, static_cast<double>(std::numeric_limits<T>::lowest()),
                 static_cast<double>(std::numeric_limits<T>::max()));
  return static_cast<T>(r);
}

}  // namespace

LoadedNifti load_nifti_with_report(const std::filesystem::path& path) {
  LoadedNifti out;
  NiftiLoadReport& report = out.report;
  std::vector<unsigned char> buf = read_all(path, &report.gzipped);
  if (buf.size() < kHeaderSize) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": file shorter than a NIfTI-1 header");
  }

  bool swap = false;
  {
    ByteReader native(buf.data(), false);
    if (native.get<std::int32_t>(0) != kHeaderSize) {
      ByteReader swapped(buf.data(), true);
      if (swapped.get<std::int32_t>(0) != kHeaderSize) {
        throw Error(ErrorCode::MalformedHeader, path.string() + ": sizeof_hdr is not 348 (NIfTI-2 is not supported)");
      }
      swap = true;
    }
  }
  report.big_endian = host_little_endian() ? swap : !swap;
  ByteReader r(buf.data(), swap);

  const char* magic = reinterpret_cast<const char*>(buf.data() + 344);
  bool single_file = std::memcmp(magic, "n+1\0", 4) == 0;
  bool pair_file = std::memcmp(magic, "ni1\0", 4) == 0;
  if (!single_file && !pair_file) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": bad magic (expected \"n+1\" or \"ni1\")");
  }

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = r.get<std::int16_t>(40 + 2 * i);
  if (dim[0] != 3) {
    throw Error(ErrorCode::Dimensionality,
                path.string() + ": dim[0] = " + std::to_string(dim[0]) + ", only 3D volumes are supported");
  }
  if (dim[1] <= 0 || dim[2] <= 0 || dim[3] <= 0) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": non-positive dimension");
  }

  short dt_code = r.get<std::int16_t>(70);
  if (!is_supported(dt_code)) {
    throw Error(ErrorCode::UnsupportedDatatype, path.string() + ": datatype code " + std::to_string(dt_code));
  }
  auto dt = static_cast<NiftiDatatype>(dt_code);
  report.datatype = dt;

  std::array<double, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[i] = r.get<float>(76 + 4 * i);
  double vox_offset = r.get<float>(108);
  double slope = r.get<float>(112);
  double inter = r.get<float>(116);
  short qform_code = r.get<std::int16_t>(252);
  short sform_code = r.get<std::int16_t>(254);

  Dims dims{static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]), static_cast<std::size_t>(dim[3])};
  Spacing spacing{std::abs(pixdim[1]), std::abs(pixdim[2]), std::abs(pixdim[3])};
  for (int a = 0; a < 3; ++a) {
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw Error(ErrorCode::MalformedHeader, path.string() + ": pixdim must be positive");
    }
  }

  std::optional<Affine> affine;
  if (sform_code > 0) {
    Affine m{};
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 4; ++col) m[row * 4 + col] = r.get<float>(280 + 16 * row + 4 * col);
    }
    m[15] = 1.0;
    affine = m;
  } else if (qform_code > 0) {
    affine = quaternion_affine(r, pixdim);
  }

  std::vector<unsigned char> image_buf;
  const unsigned char* data_base = nullptr;
  std::size_t available = 0;
  std::size_t nbytes = dims.count() * bytes_per_voxel(dt);
  if (single_file) {
    auto offset = static_cast<std::size_t>(std::max(0.0, vox_offset));
    if (offset < kHeaderSize) offset = kVoxOffset;
    if (buf.size() < offset) throw Error(ErrorCode::MalformedHeader, path.string() + ": vox_offset beyond file end");
    data_base = buf.data() + offset;
    available = buf.size() - offset;
  } else {
    image_buf = read_all(image_path_for_pair(path), nullptr);
    auto offset = static_cast<std::size_t>(std::max(0.0, vox_offset));
    if (image_buf.size() < offset) throw Error(ErrorCode::MalformedHeader, path.string() + ": image file too short");
    data_base = image_buf.data() + offset;
    available = image_buf.size() - offset;
  }
  if (available < nbytes) {
    throw Error(ErrorCode::Io, path.string() + ": truncated voxel data (" + std::to_string(available) + " of " +
                                   std::to_string(nbytes) + " bytes)");
  }

  ByteReader voxels(data_base, swap);
  std::vector<double> data(dims.count());
  bool scale = slope != 0.0 && std::isfinite(slope) && std::isfinite(inter);
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = 0.0;
    switch (dt) {
      case NiftiDatatype::UInt8: v = data_base[i]; break;
      case NiftiDatatype::Int16: v = voxels.get<std::int16_t>(2 * i); break;
      case NiftiDatatype::Int32: v = voxels.get<std::int32_t>(4 * i); break;
      case NiftiDatatype::Float32: v = voxels.get<float>(4 * i); break;
      case NiftiDatatype::Float64: v = voxels.get<double>(8 * i); break;
    }
    if (scale) v = v * slope + inter;
    if (!std::isfinite(v)) {
      v = 0.0;
      ++report.nan_replaced;
    }
    data[i] = v;
  }

  out.volume = Volume3D(dims, spacing, std::move(data), affine);
  return out;
}

Volume3D load_nifti(const std::filesystem::path& path) { return load_nifti_with_report(path).volume; }

void save_nifti(const Volume3D& volume, const std::filesystem::path& path, NiftiDatatype datatype) {
  const Dims& d = volume.dims();
  if (d.nx > 32767 || d.ny > 32767 || d.nz > 32767) {
    throw Error(ErrorCode::Dimensionality, "dimension exceeds NIfTI-1 limit");
  }
  std::size_t bpv = bytes_per_voxel(datatype);
  std::vector<unsigned char> buf(kVoxOffset + d.count() * bpv, 0);

  put<std::int32_t>(buf, 0, kHeaderSize);
  std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny),
                                  static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(buf, 40 + 2 * i, dim[i]);
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(datatype));
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(bpv * 8));
  std::array<float, 8> pixdim{1.0f, static_cast<float>(volume.spacing().sx), static_cast<float>(volume.spacing().sy),
                              static_cast<float>(volume.spacing().sz), 0.0f, 0.0f, 0.0f, 0.0f};
  for (int i = 0; i < 8; ++i) put<float>(buf, 76 + 4 * i, pixdim[i]);
  put<float>(buf, 108, static_cast<float>(kVoxOffset));
  put<float>(buf, 112, 0.0f);
  put<float>(buf, 116, 0.0f);
  buf[123] = 10;  // xyzt_units: mm, seconds
  if (const auto& affine = volume.affine()) {
    put<std::int16_t>(buf, 254, 1);
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 4; ++col) {
        put<float>(buf, 280 + 16 * row + 4 * col, static_cast<float>((*affine)[row * 4 + col]));
      }
    }
  }
  std::memcpy(buf.data() + 344, "n+1\0", 4);

  auto data = volume.data();
  unsigned char* out = buf.data() + kVoxOffset;
  for (std::size_t i = 0; i < data.size(); ++i) {
    switch (datatype) {
      case NiftiDatatype::UInt8: out[i] = to_integer<std::uint8_t>(data[i]); break;
      case NiftiDatatype::Int16: put<std::int16_t>(buf, kVoxOffset + 2 * i, to_integer<std::int16_t>(data[i])); break;
      case NiftiDatatype::Int32: put<std::int32_t>(buf, kVoxOffset + 4 * i, to_integer<std::int32_t>(data[i])); break;
      case NiftiDatatype::Float32: put<float>(buf, kVoxOffset + 4 * i, static_cast<float>(data[i])); break;
      case NiftiDatatype::Float64: put<double>(buf, kVoxOffset + 8 * i, data[i]); break;
    }
  }

  std::string p = path.string();
  bool gz = p.size() > 3 && p.compare(p.size() - 3, 3, ".gz") == 0;
  gzFile f = gzopen(p.c_str(), gz ? "wb6" : "wbT");
  if (!f) throw Error(ErrorCode::Io, "cannot write " + p);
  std::size_t written = 0;
  while (written < buf.size()) {
    auto chunk = static_cast<unsigned>(std::min<std::size_t>(buf.size() - written, 1u << 30));
    int n = gzwrite(f, buf.data() + written, chunk);
    if (n <= 0) {
      gzclose(f);
      throw Error(ErrorCode::Io, "write failure in " + p);
    }
    written += static_cast<std::size_t>(n);
  }
  if (gzclose(f) != Z_OK) throw Error(ErrorCode::Io, "close failure in " + p);
}

}  // namespace perfvox
