#include "perfvox/features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

std::vector<double> supervoxel_means(const Volume3D& volume, const SupervoxelLabeling& labeling) {
  require_same_dims(volume.dims(), labeling.dims, "supervoxel_means");
  const auto k = static_cast<std::size_t>(labeling.k());
  std::vector<double> sums(k, 0.0);
  std::vector<std::int64_t> counts(k, 0);
  for (std::size_t i = 0; i < labeling.labels.size(); ++i) {
    std::int32_t lab = labeling.labels[i];
    if (lab < 0) continue;
    sums[static_cast<std::size_t>(lab)] += volume[i];
    ++counts[static_cast<std::size_t>(lab)];
  }
  for (std::size_t c = 0; c < k; ++c) sums[c] = counts[c] ? sums[c] / static_cast<double>(counts[c]) : 0.0;
  return sums;
}

BrainMask mask_from_labeling(const SupervoxelLabeling& labeling) {
  std::vector<std::uint8_t> inside(labeling.labels.size());
  for (std::size_t i = 0; i < inside.size(); ++i) inside[i] = labeling.labels[i] >= 0 ? 1 : 0;
  return BrainMask(labeling.dims, std::move(inside));
}

ShellMatrix shell_means(const Volume3D& volume, const SupervoxelLabeling& labeling, const BrainMask& mask,
                        std::span<const double> margins_mm) {
  require_same_dims(volume.dims(), labeling.dims, "shell_means");
  require_same_dims(volume.dims(), mask.dims(), "shell_means mask");
  for (std::size_t m = 0; m < margins_mm.size(); ++m) {
    if (!(margins_mm[m] > 0.0) || (m > 0 && !(margins_mm[m] > margins_mm[m - 1]))) {
      throw Error(ErrorCode::Config, "shell margins must be positive and strictly ascending");
    }
  }
  const Dims& d = volume.dims();
  const auto k = static_cast<std::size_t>(labeling.k());

  struct Box {
    std::size_t lo[3] = {SIZE_MAX, SIZE_MAX, SIZE_MAX};
    std::size_t hi[3] = {0, 0, 0};
    bool any = false;
  };
  std::vector<Box> boxes(k);
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::int32_t lab = labeling.labels[d.index(x, y, z)];
        if (lab < 0) continue;
        Box& b = boxes[static_cast<std::size_t>(lab)];
        std::size_t c[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], c[a]);
          b.hi[a] = std::max(b.hi[a], c[a]);
        }
        b.any = true;
      }
    }
  }

  ShellMatrix out;
  out.k = k;
  out.margins = margins_mm.size();
  out.values.assign(k * out.margins, 0.0);
  out.empty.assign(k * out.margins, 1);
  const std::size_t extent[3] = {d.nx, d.ny, d.nz};

  for (std::size_t c = 0; c < k; ++c) {
    const Box& b = boxes[c];
    if (!b.any) continue;
    for (std::size_t m = 0; m < out.margins; ++m) {
      std::size_t lo[3], hi[3];
      for (int a = 0; a < 3; ++a) {
        auto grow = static_cast<std::size_t>(std::ceil(margins_mm[m] / volume.spacing()[a]));
        grow = std::max<std::size_t>(grow, 1);
        lo[a] = b.lo[a] >= grow ? b.lo[a] - grow : 0;
        hi[a] = std::min(b.hi[a] + grow, extent[a] - 1);
      }
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t z = lo[2]; z <= hi[2]; ++z) {
        for (std::size_t y = lo[1]; y <= hi[1]; ++y) {
          for (std::size_t x = lo[0]; x <= hi[0]; ++x) {
            std::size_t i = d.index(x, y, z);
            if (!mask[i] || labeling.labels[i] == static_cast<std::int32_t>(c)) continue;
            sum += volume[i];
            ++n;
          }
        }
      }
      if (n > 0) {
        out.values[c * out.margins + m] = sum / static_cast<double>(n);
        out.empty[c * out.margins + m] = 0;
      }
    }
  }
  return out;
}

FeatureVector extract_features(const std::string& id, const Volume3D& volume, const SupervoxelLabeling& labeling,
                               std::span<const double> margins_mm) {
  FeatureVector fv;
  fv.participant_id = id;
  fv.cluster_means = supervoxel_means(volume, labeling);
  fv.cluster_sizes.assign(static_cast<std::size_t>(labeling.k()), 0);
  for (std::int32_t lab : labeling.labels) {
    if (lab >= 0) ++fv.cluster_sizes[static_cast<std::size_t>(lab)];
  }
  if (!margins_mm.empty()) {
    fv.shells = shell_means(volume, labeling, mask_from_labeling(labeling), margins_mm);
  } else {
    fv.shells.k = static_cast<std::size_t>(labeling.k());
  }
  return fv;
}

std::string margin_label(double margin_mm) { return format_double(margin_mm); }

std::vector<std::string> FeatureMatrix::column_names() const {
  std::vector<std::string> names{"id", "age", "sex"};
  for (int c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
  for (int c = 0; c < k; ++c) {
    for (double m : margins_mm) names.push_back("s" + std::to_string(c) + "_" + margin_label(m));
  }
  return names;
}

std::vector<double> FeatureMatrix::cluster_column(int cluster) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.cluster_means[static_cast<std::size_t>(cluster)]);
  return out;
}

std::vector<double> FeatureMatrix::cluster_matrix() const {
  std::vector<double> out;
  out.reserve(rows.size() * static_cast<std::size_t>(k));
  for (const auto& r : rows) out.insert(out.end(), r.cluster_means.begin(), r.cluster_means.end());
  return out;
}

std::vector<Sex> FeatureMatrix::sexes() const {
  std::vector<Sex> out;
  for (const auto& m : meta) out.push_back(m.sex);
  return out;
}

std::string FeatureMatrix::to_csv() const {
  std::ostringstream out;
  auto names = column_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << meta[r].id << ',' << meta[r].age << ',' << to_string(meta[r].sex);
    for (double v : rows[r].cluster_means) out << ',' << format_double(v);
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      for (std::size_t m = 0; m < margins_mm.size(); ++m) out << ',' << format_double(rows[r].shells.at(c, m));
    }
    out << '\n';
  }
  return out.str();
}

FeatureMatrix FeatureMatrix::from_csv(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  const auto& h = table.header;
  if (h.size() < 4 || h[0] != "id" || h[1] != "age" || h[2] != "sex") {
    throw Error(ErrorCode::Parse, path.string() + ": feature header must start with id,age,sex");
  }
  FeatureMatrix fm;
  std::size_t col = 3;
  while (col < h.size() && h[col] == "c" + std::to_string(fm.k)) {
    ++fm.k;
    ++col;
  }
  if (fm.k == 0) throw Error(ErrorCode::Parse, path.string() + ": no cluster columns");
  // Margins are read from the first cluster's shell columns.
  while (col < h.size() && h[col].rfind("s0_", 0) == 0) {
    fm.margins_mm.push_back(parse_double(std::string_view(h[col]).substr(3), "margin"));
    ++col;
  }
  if (h != fm.column_names()) throw Error(ErrorCode::Parse, path.string() + ": unexpected feature column layout");

  const std::size_t k = static_cast<std::size_t>(fm.k), nm = fm.margins_mm.size();
  for (const auto& f : table.rows) {
    ParticipantMeta meta;
    meta.id = f[0];
    meta.age = static_cast<int>(parse_int(f[1], "age"));
    meta.sex = parse_sex(f[2]);
    FeatureVector fv;
    fv.participant_id = meta.id;
    for (std::size_t c = 0; c < k; ++c) fv.cluster_means.push_back(parse_double(f[3 + c], h[3 + c]));
    fv.shells.k = k;
    fv.shells.margins = nm;
    for (std::size_t j = 0; j < k * nm; ++j) {
      fv.shells.values.push_back(parse_double(f[3 + k + j], h[3 + k + j]));
      fv.shells.empty.push_back(0);
    }
    fm.meta.push_back(std::move(meta));
    fm.rows.push_back(std::move(fv));
  }
  return fm;
}

FeatureMatrix build_feature_matrix(const CohortManifest& manifest, std::span<const SupervoxelLabeling> labelings,
                                   std::span<const Volume3D> volumes, std::span<const double> margins_mm) {
  if (labelings.size() != manifest.size() || volumes.size() != manifest.size()) {
    throw Error(ErrorCode::MissingVolume, "expected " + std::to_string(manifest.size()) +
                                              " volumes and labelings, got " + std::to_string(volumes.size()) +
                                              " and " + std::to_string(labelings.size()));
  }
  FeatureMatrix fm;
  fm.margins_mm.assign(margins_mm.begin(), margins_mm.end());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& row = manifest.rows[i];
    require_same_dims(volumes[i].dims(), labelings[i].dims, row.id.c_str());
    if (i == 0) {
      fm.k = labelings[i].k();
    } else if (labelings[i].k() != fm.k) {
      throw Error(ErrorCode::ShapeMismatch, row.id + ": cluster count differs from the first participant");
    }
    fm.meta.push_back(row);
    fm.rows.push_back(extract_features(row.id, volumes[i], labelings[i], margins_mm));
  }
  return fm;
}

}  // namespace perfvox
