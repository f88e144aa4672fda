#include "perfvox/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "perfvox/error.hpp"
#include "perfvox/labeling_io.hpp"
#include "perfvox/nifti.hpp"
#include "perfvox/parallel.hpp"
#include "perfvox/rng.hpp"

namespace perfvox {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::Config, msg);
}

std::vector<int> split_total(int total, std::size_t bins) {
  std::vector<int> out(bins, total / static_cast<int>(bins));
  for (int r = 0; r < total % static_cast<int>(bins); ++r) ++out[static_cast<std::size_t>(r)];
  return out;
}

std::string participant_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%04zu", i + 1);
  return buf;
}

}  // namespace

void validate(const PhantomSpec& spec) {
  require(spec.dims.nx >= 4 && spec.dims.ny >= 4 && spec.dims.nz >= 4, "phantom dims must each be >= 4");
  for (int a = 0; a < 3; ++a) {
    require(std::isfinite(spec.spacing[a]) && spec.spacing[a] > 0.0, "phantom spacing must be positive");
  }
  require(std::isfinite(spec.base_mean) && spec.base_mean > 0.0, "base_mean must be > 0");
  require(std::isfinite(spec.radial_decay) && spec.radial_decay >= 0.0, "radial_decay must be >= 0");
  require(std::isfinite(spec.noise_sigma) && spec.noise_sigma >= 0.0, "noise_sigma must be >= 0");
}

Volume3D phantom_mean(const PhantomSpec& spec) {
  validate(spec);
  const Dims& d = spec.dims;
  const double cx = (static_cast<double>(d.nx) - 1.0) / 2.0;
  const double cy = (static_cast<double>(d.ny) - 1.0) / 2.0;
  const double cz = (static_cast<double>(d.nz) - 1.0) / 2.0;
  std::vector<double> data(d.count());
  std::size_t i = 0;
  for (std::size_t z = 0; z < d.nz; ++z) {
    const double dz = (static_cast<double>(z) - cz) * spec.spacing.sz;
    for (std::size_t y = 0; y < d.ny; ++y) {
      const double dy = (static_cast<double>(y) - cy) * spec.spacing.sy;
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        const double dx = (static_cast<double>(x) - cx) * spec.spacing.sx;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        data[i] = std::max(0.0, spec.base_mean - spec.radial_decay * r);
      }
    }
  }
  return Volume3D(d, spec.spacing, std::move(data));
}

Volume3D generate_phantom(const PhantomSpec& spec) {
  Volume3D v = phantom_mean(spec);
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    for (double& x : v.data()) x += rng.normal(0.0, spec.noise_sigma);
  }
  return v;
}

void validate(const CohortSpec& spec) {
  require(spec.age_bins.size() > 0, "cohort needs at least one age bin");
  require(std::isfinite(spec.effect_size) && spec.effect_size >= 0.0, "effect_size must be >= 0");
  require(std::isfinite(spec.age_slope) && spec.age_slope >= 0.0, "age_slope must be >= 0");
  const auto& bins = spec.age_bins.bins();
  const double span = static_cast<double>(bins.back().hi - bins.front().lo);
  require(spec.age_slope * span < 1.0, "age_slope too large: scale factor reaches zero within the bins");
  const auto nbins = static_cast<int>(bins.size());
  require(spec.n_per_group >= 1, "n_per_group must be >= 1");
  if (spec.n_female_total) require(*spec.n_female_total >= nbins, "n_female_total must give every bin a participant");
  if (spec.n_male_total) require(*spec.n_male_total >= nbins, "n_male_total must give every bin a participant");
  std::set<int> seen;
  for (int c : spec.effect_clusters) {
    require(c >= 0, "effect cluster indices must be >= 0");
    require(seen.insert(c).second, "duplicate effect cluster " + std::to_string(c));
  }
  validate(spec.reference_slic);
  require(spec.mask_fraction > 0.0 && spec.mask_fraction < 1.0, "mask_fraction must be in (0, 1)");
}

SyntheticCohort generate_cohort(const CohortSpec& spec, const PhantomSpec& phantom, int jobs) {
  validate(spec);
  validate(phantom);
  SyntheticCohort out;

  const Volume3D clean = phantom_mean(phantom);
  out.reference_mask = auto_mask(clean, spec.mask_fraction);
  out.reference_params = spec.reference_slic;
  out.reference = run_slic(normalize_intensity(clean, out.reference_mask, NormalizationMode::ZScore),
                           out.reference_mask, spec.reference_slic);
  for (int c : spec.effect_clusters) {
    if (c >= out.reference.k()) {
      throw Error(ErrorCode::Config, "effect cluster " + std::to_string(c) + " is outside the reference labeling (K=" +
                                         std::to_string(out.reference.k()) + ")");
    }
  }
  out.footprint.assign(clean.size(), 0);
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(out.reference.k()), 0);
  for (int c : spec.effect_clusters) chosen[static_cast<std::size_t>(c)] = 1;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto lab = out.reference.labels[i];
    if (lab >= 0 && chosen[static_cast<std::size_t>(lab)]) out.footprint[i] = 1;
  }

  const auto& bins = spec.age_bins.bins();
  const auto nf = spec.n_female_total ? split_total(*spec.n_female_total, bins.size())
                                      : std::vector<int>(bins.size(), spec.n_per_group);
  const auto nm = spec.n_male_total ? split_total(*spec.n_male_total, bins.size())
                                    : std::vector<int>(bins.size(), spec.n_per_group);
  struct Slot {
    std::size_t bin;
    Sex sex;
    int rank;
    int cell_size;
  };
  std::vector<Slot> slots;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    for (int j = 0; j < nf[b]; ++j) slots.push_back({b, Sex::F, j, nf[b]});
    for (int j = 0; j < nm[b]; ++j) slots.push_back({b, Sex::M, j, nm[b]});
  }

  const int min_age = bins.front().lo;
  out.manifest.rows.resize(slots.size());
  out.volumes.resize(slots.size());
  parallel_for(slots.size(), jobs, [&](std::size_t i) {
    const Slot& s = slots[i];
    Rng rng(substream_seed(spec.seed, i));
    const AgeBin& bin = bins[s.bin];
    const double width = static_cast<double>(bin.hi - bin.lo + 1);
    const double u = (static_cast<double>(s.rank) + rng.uniform()) / static_cast<double>(s.cell_size);
    const int age = std::min(bin.hi, bin.lo + static_cast<int>(std::floor(u * width)));

    const double age_factor = 1.0 - spec.age_slope * static_cast<double>(age - min_age);
    const double sex_factor = s.sex == Sex::F ? 1.0 + spec.effect_size : 1.0;
    std::vector<double> data(clean.size());
    for (std::size_t v = 0; v < clean.size(); ++v) {
      double value = clean[v] * age_factor;
      if (out.footprint[v]) value *= sex_factor;
      if (phantom.noise_sigma > 0.0) value += rng.normal(0.0, phantom.noise_sigma);
      data[v] = value;
    }
    const std::string id = participant_id(i);
    out.manifest.rows[i] = ParticipantMeta{id, age, s.sex, id + ".nii.gz"};
    out.volumes[i] = Volume3D(clean.dims(), clean.spacing(), std::move(data));
  });
  return out;
}

PhantomSpec canonical_phantom(std::uint64_t seed) {
  PhantomSpec p;
  p.dims = {32, 32, 32};
  p.base_mean = 50.0;
  p.radial_decay = 1.0;
  p.noise_sigma = 0.05 * p.base_mean;
  p.seed = seed;
  return p;
}

std::vector<int> spread_clusters(int count, int k) {
  std::vector<int> out;
  for (int j = 0; j < count; ++j) out.push_back(static_cast<int>(std::floor((j + 0.5) * k / count)));
  return out;
}

CohortSpec canonical_cohort(std::uint64_t seed) {
  CohortSpec c;
  c.age_bins = AgeBins::standard();
  c.n_female_total = 97;
  c.n_male_total = 89;
  c.effect_size = 0.10;
  c.age_slope = 0.003;
  c.reference_slic.k = 100;
  c.effect_clusters = spread_clusters(15, c.reference_slic.k);
  c.seed = seed;
  return c;
}

void write_cohort(const SyntheticCohort& cohort, const std::filesystem::path& dir, int jobs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  parallel_for(cohort.volumes.size(), jobs, [&](std::size_t i) {
    save_nifti(cohort.volumes[i], dir / cohort.manifest.rows[i].volume_path, NiftiDatatype::Float64);
  });
  const Volume3D& first = cohort.volumes.front();
  std::vector<double> mv(cohort.reference_mask.data().begin(), cohort.reference_mask.data().end());
  save_nifti(Volume3D(first.dims(), first.spacing(), std::move(mv)), dir / "mask.nii.gz", NiftiDatatype::UInt8);
  save_labeling(cohort.reference, cohort.reference_params, first.spacing(), dir / "reference_labels.nii.gz",
                dir / "reference_labels.json");
  CohortManifest m = cohort.manifest;
  m.base_dir = dir;
  save_manifest(m, dir / "manifest.csv");
}

}  // namespace perfvox
