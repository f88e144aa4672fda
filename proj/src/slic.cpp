#include "perfvox/slic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "perfvox/error.hpp"

namespace perfvox {

namespace {

struct Offset {
  int dx, dy, dz;
};

std::vector<Offset> neighbor_offsets(Connectivity connectivity) {
  std::vector<Offset> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::Six && manhattan != 1) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

// Calls fn(j) for each in-volume neighbor j of voxel (x, y, z).
template <typename Fn>
void for_each_neighbor(const Dims& d, std::size_t x, std::size_t y, std::size_t z,
                       const std::vector<Offset>& offsets, Fn&& fn) {
  for (const auto& o : offsets) {
    auto nx = static_cast<std::int64_t>(x) + o.dx;
    auto ny = static_cast<std::int64_t>(y) + o.dy;
    auto nz = static_cast<std::int64_t>(z) + o.dz;
    if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::int64_t>(d.nx) ||
        ny >= static_cast<std::int64_t>(d.ny) || nz >= static_cast<std::int64_t>(d.nz)) {
      continue;
    }
    fn(d.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny), static_cast<std::size_t>(nz)));
  }
}

std::array<std::size_t, 3> coords(const Dims& d, std::size_t i) {
  return {i % d.nx, (i / d.nx) % d.ny, i / (d.nx * d.ny)};
}

std::vector<double> gaussian_kernel(double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double sum = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    double v = std::exp(-0.5 * (t * t) / (sigma * sigma));
    w[t + radius] = v;
    sum += v;
  }
  for (auto& v : w) v /= sum;
  return w;
}

// 1D convolution along one axis with zero padding outside the volume.
void convolve_axis(std::vector<double>& field, const Dims& d, int axis, const std::vector<double>& w) {
  const int radius = static_cast<int>(w.size() / 2);
  const std::size_t n = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
  std::vector<double> line(n), out(n);
  const std::size_t lines = d.count() / n;
  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t base;
    if (axis == 0) {
      base = l * d.nx;
    } else if (axis == 1) {
      base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
    } else {
      base = l;
    }
    for (std::size_t i = 0; i < n; ++i) line[i] = field[base + i * stride];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        auto j = static_cast<std::int64_t>(i) + t;
        if (j < 0 || j >= static_cast<std::int64_t>(n)) continue;
        acc += w[t + radius] * line[static_cast<std::size_t>(j)];
      }
      out[i] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) field[base + i * stride] = out[i];
  }
}

struct Scale {
  double x, y, z;
};

Scale axis_scale(const Spacing& s) {
  double m = s.min();
  return {s.sx / m, s.sy / m, s.sz / m};
}

double squared_gradient(const Volume3D& v, std::size_t x, std::size_t y, std::size_t z) {
  const Dims& d = v.dims();
  auto clamp_get = [&](std::int64_t xx, std::int64_t yy, std::int64_t zz) {
    xx = std::clamp<std::int64_t>(xx, 0, static_cast<std::int64_t>(d.nx) - 1);
    yy = std::clamp<std::int64_t>(yy, 0, static_cast<std::int64_t>(d.ny) - 1);
    zz = std::clamp<std::int64_t>(zz, 0, static_cast<std::int64_t>(d.nz) - 1);
    return v.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy), static_cast<std::size_t>(zz));
  };
  auto X = static_cast<std::int64_t>(x), Y = static_cast<std::int64_t>(y), Z = static_cast<std::int64_t>(z);
  double gx = clamp_get(X + 1, Y, Z) - clamp_get(X - 1, Y, Z);
  double gy = clamp_get(X, Y + 1, Z) - clamp_get(X, Y - 1, Z);
  double gz = clamp_get(X, Y, Z + 1) - clamp_get(X, Y, Z - 1);
  return gx * gx + gy * gy + gz * gz;
}

void perturb_seeds(SeedGrid& grid, const Volume3D& v, const BrainMask& mask) {
  const Dims& d = v.dims();
  for (auto& seed : grid.seeds) {
    auto sx = static_cast<std::int64_t>(seed.x), sy = static_cast<std::int64_t>(seed.y),
         sz = static_cast<std::int64_t>(seed.z);
    double best = squared_gradient(v, static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                   static_cast<std::size_t>(sz));
    std::int64_t bx = sx, by = sy, bz = sz;
    for (std::int64_t z = sz - 1; z <= sz + 1; ++z) {
      for (std::int64_t y = sy - 1; y <= sy + 1; ++y) {
        for (std::int64_t x = sx - 1; x <= sx + 1; ++x) {
          if (x < 0 || y < 0 || z < 0 || x >= static_cast<std::int64_t>(d.nx) ||
              y >= static_cast<std::int64_t>(d.ny) || z >= static_cast<std::int64_t>(d.nz)) {
            continue;
          }
          auto ux = static_cast<std::size_t>(x), uy = static_cast<std::size_t>(y), uz = static_cast<std::size_t>(z);
          if (!mask[d.index(ux, uy, uz)]) continue;
          double g = squared_gradient(v, ux, uy, uz);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
            bz = z;
          }
        }
      }
    }
    seed.x = static_cast<double>(bx);
    seed.y = static_cast<double>(by);
    seed.z = static_cast<double>(bz);
    seed.intensity = v.at(static_cast<std::size_t>(bx), static_cast<std::size_t>(by), static_cast<std::size_t>(bz));
  }
}

}  // namespace

Connectivity parse_connectivity(int value) {
  if (value == 6) return Connectivity::Six;
  if (value == 26) return Connectivity::TwentySix;
  throw Error(ErrorCode::Config, "connectivity must be 6 or 26, got " + std::to_string(value));
}

void validate(const SlicParams& p) {
  if (p.k < 1) throw Error(ErrorCode::Config, "k must be >= 1, got " + std::to_string(p.k));
  if (!(p.compactness > 0.0) || !std::isfinite(p.compactness)) {
    throw Error(ErrorCode::Config, "compactness must be > 0");
  }
  if (!(p.smoothing_sigma_mm >= 0.0) || !std::isfinite(p.smoothing_sigma_mm)) {
    throw Error(ErrorCode::Config, "smoothing sigma must be >= 0");
  }
  if (p.max_iters < 1) throw Error(ErrorCode::Config, "max_iters must be >= 1");
  if (!(p.tol >= 0.0)) throw Error(ErrorCode::Config, "tol must be >= 0");
}

Volume3D gaussian_smooth(const Volume3D& volume, double sigma_mm, const BrainMask& mask) {
  require_same_dims(volume.dims(), mask.dims(), "gaussian_smooth");
  if (!(sigma_mm >= 0.0)) throw Error(ErrorCode::Domain, "sigma must be >= 0");
  if (sigma_mm == 0.0) return volume;

  const Dims& d = volume.dims();
  std::vector<double> num(d.count()), den(d.count());
  for (std::size_t i = 0; i < d.count(); ++i) {
    den[i] = mask[i] ? 1.0 : 0.0;
    num[i] = den[i] * volume[i];
  }
  for (int axis = 0; axis < 3; ++axis) {
    auto w = gaussian_kernel(sigma_mm / volume.spacing()[axis]);
    convolve_axis(num, d, axis, w);
    convolve_axis(den, d, axis, w);
  }
  Volume3D out = volume;
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (mask[i] && den[i] > 0.0) out[i] = num[i] / den[i];
  }
  return out;
}

SeedGrid init_centroids(const Volume3D& volume, const BrainMask& mask, int k) {
  require_same_dims(volume.dims(), mask.dims(), "init_centroids");
  if (k < 1) throw Error(ErrorCode::Config, "k must be >= 1");
  if (static_cast<std::size_t>(k) > mask.count()) {
    throw Error(ErrorCode::DegenerateInput, "k = " + std::to_string(k) + " exceeds masked voxel count " +
                                                std::to_string(mask.count()));
  }
  const Dims& d = volume.dims();
  const Scale sc = axis_scale(volume.spacing());
  const double step = std::cbrt(static_cast<double>(mask.count()) / k);

  auto cells_along = [&](std::size_t n) { return static_cast<std::size_t>(std::floor((n - 1) / step)) + 1; };
  const std::size_t ncx = cells_along(d.nx), ncy = cells_along(d.ny), ncz = cells_along(d.nz);
  auto cell_of = [&](std::size_t c) { return static_cast<std::size_t>(std::floor(c / step)); };

  std::map<std::int64_t, std::vector<std::size_t>> cell_voxels;
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (!mask[i]) continue;
    auto [x, y, z] = coords(d, i);
    std::size_t cx = std::min(cell_of(x), ncx - 1), cy = std::min(cell_of(y), ncy - 1),
                cz = std::min(cell_of(z), ncz - 1);
    cell_voxels[static_cast<std::int64_t>(cx + ncx * (cy + ncy * cz))].push_back(i);
  }

  struct Cell {
    std::int64_t grid_index;
    const std::vector<std::size_t>* voxels;
    std::vector<std::size_t> seeds;  // voxel indices
  };
  std::vector<Cell> cells;
  cells.reserve(cell_voxels.size());
  for (auto& [gi, voxels] : cell_voxels) {
    auto cx = static_cast<std::size_t>(gi) % ncx;
    auto cy = (static_cast<std::size_t>(gi) / ncx) % ncy;
    auto cz = static_cast<std::size_t>(gi) / (ncx * ncy);
    double px = (cx + 0.5) * step - 0.5, py = (cy + 0.5) * step - 0.5, pz = (cz + 0.5) * step - 0.5;
    std::size_t best = voxels.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i : voxels) {
      auto [x, y, z] = coords(d, i);
      double dx = (x - px) * sc.x, dy = (y - py) * sc.y, dz = (z - pz) * sc.z;
      double dist = dx * dx + dy * dy + dz * dz;
      if (dist < best_d) {
        best_d = dist;
        best = i;
      }
    }
    cells.push_back({gi, &voxels, {best}});
  }

  auto seed_count = [&] {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.seeds.size();
    return n;
  };

  std::size_t count = seed_count();
  if (count > static_cast<std::size_t>(k)) {
    std::vector<std::size_t> order(cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cells[a].voxels->size() < cells[b].voxels->size();
    });
    for (std::size_t i = 0; i < count - static_cast<std::size_t>(k); ++i) cells[order[i]].seeds.clear();
  }
  while (seed_count() < static_cast<std::size_t>(k)) {
    Cell* target = nullptr;
    double best_ratio = -1.0;
    for (auto& c : cells) {
      if (c.seeds.size() >= c.voxels->size()) continue;
      double ratio = static_cast<double>(c.voxels->size()) / static_cast<double>(c.seeds.size() + 1);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        target = &c;
      }
    }
    if (!target) throw Error(ErrorCode::DegenerateInput, "cannot place k seeds");
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i : *target->voxels) {
      auto [x, y, z] = coords(d, i);
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t s : target->seeds) {
        auto [sx, sy, sz] = coords(d, s);
        double dx = (double(x) - double(sx)) * sc.x, dy = (double(y) - double(sy)) * sc.y,
               dz = (double(z) - double(sz)) * sc.z;
        nearest = std::min(nearest, dx * dx + dy * dy + dz * dz);
      }
      if (nearest > best_d) {
        best_d = nearest;
        best = i;
      }
    }
    target->seeds.push_back(best);
  }

  SeedGrid grid;
  grid.step = step;
  for (const auto& c : cells) {
    for (std::size_t s = 0; s < c.seeds.size(); ++s) {
      auto [x, y, z] = coords(d, c.seeds[s]);
      grid.seeds.push_back({double(x), double(y), double(z), volume[c.seeds[s]]});
      grid.keys.push_back({c.grid_index, static_cast<int>(s)});
    }
  }
  return grid;
}

void recompute_centroids(SupervoxelLabeling& l, const Volume3D& volume) {
  require_same_dims(l.dims, volume.dims(), "recompute_centroids");
  const std::size_t k = l.centroids.size();
  std::vector<std::array<double, 4>> sums(k, {0.0, 0.0, 0.0, 0.0});
  std::vector<std::int64_t> counts(k, 0);
  for (std::size_t i = 0; i < l.labels.size(); ++i) {
    std::int32_t lab = l.labels[i];
    if (lab < 0) continue;
    auto [x, y, z] = coords(l.dims, i);
    auto& s = sums[static_cast<std::size_t>(lab)];
    s[0] += double(x);
    s[1] += double(y);
    s[2] += double(z);
    s[3] += volume[i];
    ++counts[static_cast<std::size_t>(lab)];
  }
  l.sizes = counts;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      l.centroids[c].intensity = 0.0;
      continue;
    }
    auto n = static_cast<double>(counts[c]);
    l.centroids[c] = {sums[c][0] / n, sums[c][1] / n, sums[c][2] / n, sums[c][3] / n};
  }
}

SupervoxelLabeling run_slic(const Volume3D& volume, const BrainMask& mask, const SlicParams& params) {
  validate(params);
  require_same_dims(volume.dims(), mask.dims(), "run_slic");
  const Volume3D feature = gaussian_smooth(volume, params.smoothing_sigma_mm, mask);
  SeedGrid grid = init_centroids(feature, mask, params.k);
  if (params.perturb_seeds) perturb_seeds(grid, feature, mask);

  const Dims& d = volume.dims();
  const Scale sc = axis_scale(volume.spacing());
  const double S = grid.step;
  const double spatial_weight = (params.compactness * params.compactness) / (S * S);
  const std::size_t k = grid.seeds.size();

  std::vector<std::size_t> masked;
  masked.reserve(mask.count());
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (mask[i]) masked.push_back(i);
  }

  SupervoxelLabeling out;
  out.dims = d;
  out.grid_step = S;
  out.seed_keys = grid.keys;
  out.centroids = grid.seeds;
  out.labels.assign(d.count(), kBackground);

  std::vector<double> best(d.count(), std::numeric_limits<double>::infinity());
  auto cost = [&](std::size_t i, const Centroid& c) {
    auto [x, y, z] = coords(d, i);
    const double dc = feature[i] - c.intensity;
    const double dx = (static_cast<double>(x) - c.x) * sc.x;
    const double dy = (static_cast<double>(y) - c.y) * sc.y;
    const double dz = (static_cast<double>(z) - c.z) * sc.z;
    return dc * dc + spatial_weight * (dx * dx + dy * dy + dz * dz);
  };

  auto axis_range = [&](double center, double radius, std::size_t n) {
    auto lo = static_cast<std::int64_t>(std::ceil(center - radius));
    auto hi = static_cast<std::int64_t>(std::floor(center + radius));
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(n) - 1);
    return std::pair<std::int64_t, std::int64_t>{lo, hi};
  };

  for (int iter = 0; iter < params.max_iters; ++iter) {
    // Assignment. The current label always stays a candidate, so the total cost
    // cannot rise even when a centroid drifts out of a voxel's window.
    for (std::size_t i : masked) {
      std::int32_t cur = out.labels[i];
      best[i] = cur >= 0 ? cost(i, out.centroids[static_cast<std::size_t>(cur)])
                         : std::numeric_limits<double>::infinity();
    }
    for (std::size_t c = 0; c < k; ++c) {
      const Centroid& cen = out.centroids[c];
      auto [x0, x1] = axis_range(cen.x, S, d.nx);
      auto [y0, y1] = axis_range(cen.y, S, d.ny);
      auto [z0, z1] = axis_range(cen.z, S, d.nz);
      for (std::int64_t z = z0; z <= z1; ++z) {
        const double dz = (static_cast<double>(z) - cen.z) * sc.z;
        const double dzz = dz * dz;
        for (std::int64_t y = y0; y <= y1; ++y) {
          const double dy = (static_cast<double>(y) - cen.y) * sc.y;
          const double dyy = dy * dy;
          std::size_t row = d.index(0, static_cast<std::size_t>(y), static_cast<std::size_t>(z));
          for (std::int64_t x = x0; x <= x1; ++x) {
            std::size_t i = row + static_cast<std::size_t>(x);
            if (!mask[i]) continue;
            const double dx = (static_cast<double>(x) - cen.x) * sc.x;
            const double dc = feature[i] - cen.intensity;
            double dist = dc * dc + spatial_weight * (dx * dx + dyy + dzz);
            auto lab = static_cast<std::int32_t>(c);
            if (dist < best[i] || (dist == best[i] && lab < out.labels[i])) {
              best[i] = dist;
              out.labels[i] = lab;
            }
          }
        }
      }
    }
    double total = 0.0;
    for (std::size_t i : masked) {
      if (out.labels[i] < 0) {
        // Unclaimed by every window: fall back to the globally nearest centroid.
        double bd = std::numeric_limits<double>::infinity();
        std::int32_t bl = 0;
        for (std::size_t c = 0; c < k; ++c) {
          double dist = cost(i, out.centroids[c]);
          if (dist < bd) {
            bd = dist;
            bl = static_cast<std::int32_t>(c);
          }
        }
        best[i] = bd;
        out.labels[i] = bl;
      }
      total += best[i];
    }
    out.cost_history.push_back(total);
    out.iterations = iter + 1;

    // Update.
    std::vector<Centroid> previous = out.centroids;
    recompute_centroids(out, feature);
    double moved = 0.0;
    std::size_t nonempty = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (out.sizes[c] == 0) {
        out.centroids[c] = previous[c];  // empty clusters stay put
        continue;
      }
      double dx = (out.centroids[c].x - previous[c].x) * sc.x;
      double dy = (out.centroids[c].y - previous[c].y) * sc.y;
      double dz = (out.centroids[c].z - previous[c].z) * sc.z;
      moved += std::sqrt(dx * dx + dy * dy + dz * dz);
      ++nonempty;
    }
    if (nonempty > 0 && moved / static_cast<double>(nonempty) < params.tol) break;
  }

  if (params.enforce_connectivity) {
    out = enforce_connectivity(out, mask, params.connectivity);
  }
  recompute_centroids(out, feature);
  return apply_ordering(out, cluster_ordering(out));
}

namespace {

struct Components {
  std::vector<std::int32_t> id;        // per voxel, -1 for background
  std::vector<std::int32_t> label;     // per component
  std::vector<std::int64_t> size;      // per component
  std::vector<std::size_t> first;      // first voxel (scan order) per component
};

Components label_components(const SupervoxelLabeling& l, const std::vector<Offset>& offsets) {
  Components comp;
  comp.id.assign(l.labels.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < l.labels.size(); ++i) {
    if (l.labels[i] < 0 || comp.id[i] >= 0) continue;
    auto cid = static_cast<std::int32_t>(comp.label.size());
    std::int32_t lab = l.labels[i];
    comp.label.push_back(lab);
    comp.first.push_back(i);
    std::int64_t size = 0;
    comp.id[i] = cid;
    stack.push_back(i);
    while (!stack.empty()) {
      std::size_t v = stack.back();
      stack.pop_back();
      ++size;
      auto [x, y, z] = coords(l.dims, v);
      for_each_neighbor(l.dims, x, y, z, offsets, [&](std::size_t j) {
        if (comp.id[j] < 0 && l.labels[j] == lab) {
          comp.id[j] = cid;
          stack.push_back(j);
        }
      });
    }
    comp.size.push_back(size);
  }
  return comp;
}

}  // namespace

std::vector<int> count_components(const SupervoxelLabeling& l, Connectivity connectivity) {
  Components comp = label_components(l, neighbor_offsets(connectivity));
  std::vector<int> counts(static_cast<std::size_t>(l.k()), 0);
  for (std::int32_t lab : comp.label) ++counts[static_cast<std::size_t>(lab)];
  return counts;
}

SupervoxelLabeling enforce_connectivity(const SupervoxelLabeling& labeling, const BrainMask& mask,
                                        Connectivity connectivity) {
  require_same_dims(labeling.dims, mask.dims(), "enforce_connectivity");
  SupervoxelLabeling out = labeling;
  const auto offsets = neighbor_offsets(connectivity);
  const Dims& d = out.dims;
  const std::size_t k = out.sizes.size();

  std::vector<std::size_t> stamp(d.count(), 0);
  std::size_t stamp_id = 0;
  std::vector<std::int64_t> votes(k, 0);

  for (;;) {
    Components comp = label_components(out, offsets);
    std::vector<std::int32_t> largest(k, -1);
    for (std::size_t c = 0; c < comp.label.size(); ++c) {
      auto lab = static_cast<std::size_t>(comp.label[c]);
      if (largest[lab] < 0 || comp.size[c] > comp.size[static_cast<std::size_t>(largest[lab])]) {
        largest[lab] = static_cast<std::int32_t>(c);
      }
    }
    bool changed = false;
    std::vector<std::size_t> members;
    for (std::size_t c = 0; c < comp.label.size(); ++c) {
      if (largest[static_cast<std::size_t>(comp.label[c])] == static_cast<std::int32_t>(c)) continue;
      // Gather the fragment through its component id, then count distinct
      // adjacent voxels of other labels.
      members.clear();
      std::vector<std::size_t> stack{comp.first[c]};
      ++stamp_id;
      stamp[comp.first[c]] = stamp_id;
      const std::int32_t lab = out.labels[comp.first[c]];
      while (!stack.empty()) {
        std::size_t v = stack.back();
        stack.pop_back();
        members.push_back(v);
        auto [x, y, z] = coords(d, v);
        for_each_neighbor(d, x, y, z, offsets, [&](std::size_t j) {
          if (stamp[j] != stamp_id && comp.id[j] == static_cast<std::int32_t>(c)) {
            stamp[j] = stamp_id;
            stack.push_back(j);
          }
        });
      }
      std::fill(votes.begin(), votes.end(), 0);
      ++stamp_id;
      for (std::size_t v : members) {
        auto [x, y, z] = coords(d, v);
        for_each_neighbor(d, x, y, z, offsets, [&](std::size_t j) {
          std::int32_t other = out.labels[j];
          if (other < 0 || other == lab || stamp[j] == stamp_id) return;
          stamp[j] = stamp_id;
          ++votes[static_cast<std::size_t>(other)];
        });
      }
      std::int32_t target = -1;
      std::int64_t best = 0;
      for (std::size_t l = 0; l < k; ++l) {
        if (votes[l] > best) {
          best = votes[l];
          target = static_cast<std::int32_t>(l);
        }
      }
      if (target < 0) {
        // Whole mask island with no foreign neighbors: move it to an empty label.
        for (std::size_t l = 0; l < k; ++l) {
          if (out.sizes[l] == 0) {
            target = static_cast<std::int32_t>(l);
            break;
          }
        }
        if (target < 0) continue;
      }
      for (std::size_t v : members) out.labels[v] = target;
      out.sizes[static_cast<std::size_t>(lab)] -= static_cast<std::int64_t>(members.size());
      out.sizes[static_cast<std::size_t>(target)] += static_cast<std::int64_t>(members.size());
      changed = true;
    }
    if (!changed) break;
  }
  return out;
}

std::vector<std::int32_t> cluster_ordering(const SupervoxelLabeling& labeling) {
  const std::size_t k = labeling.seed_keys.size();
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labeling.seed_keys[a] < labeling.seed_keys[b]; });
  std::vector<std::int32_t> perm(k);
  for (std::size_t rank = 0; rank < k; ++rank) perm[order[rank]] = static_cast<std::int32_t>(rank);
  return perm;
}

SupervoxelLabeling apply_ordering(const SupervoxelLabeling& labeling, const std::vector<std::int32_t>& perm) {
  const std::size_t k = labeling.sizes.size();
  if (perm.size() != k) throw Error(ErrorCode::LengthMismatch, "permutation length does not match k");
  SupervoxelLabeling out = labeling;
  for (std::size_t old = 0; old < k; ++old) {
    auto nw = static_cast<std::size_t>(perm[old]);
    out.centroids[nw] = labeling.centroids[old];
    out.sizes[nw] = labeling.sizes[old];
    out.seed_keys[nw] = labeling.seed_keys[old];
  }
  for (auto& lab : out.labels) {
    if (lab >= 0) lab = perm[static_cast<std::size_t>(lab)];
  }
  return out;
}

}  // namespace perfvox
