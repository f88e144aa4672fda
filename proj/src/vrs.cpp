#include "perfvox/vrs.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"

namespace perfvox {

using nlohmann::json;

CbfWeighting parse_cbf_weighting(std::string_view text) {
  if (text == "voxel_weighted") return CbfWeighting::VoxelWeighted;
  if (text == "cluster_mean") return CbfWeighting::ClusterMean;
  throw Error(ErrorCode::Config, "weighting must be voxel_weighted or cluster_mean, got '" + std::string(text) + "'");
}

std::string_view to_string(CbfWeighting w) {
  return w == CbfWeighting::VoxelWeighted ? "voxel_weighted" : "cluster_mean";
}

double participant_mean_cbf(const FeatureVector& fv, CbfWeighting weighting) {
  if (fv.cluster_means.empty()) throw Error(ErrorCode::DegenerateInput, "no cluster means for " + fv.participant_id);
  const bool have_sizes = fv.cluster_sizes.size() == fv.cluster_means.size();
  if (weighting == CbfWeighting::VoxelWeighted) {
    if (!have_sizes) {
      throw Error(ErrorCode::DegenerateInput, "voxel weighting needs cluster sizes for " + fv.participant_id);
    }
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::size_t c = 0; c < fv.cluster_means.size(); ++c) {
      sum += fv.cluster_means[c] * static_cast<double>(fv.cluster_sizes[c]);
      n += fv.cluster_sizes[c];
    }
    if (n == 0) throw Error(ErrorCode::DegenerateInput, "all clusters empty for " + fv.participant_id);
    return sum / static_cast<double>(n);
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < fv.cluster_means.size(); ++c) {
    if (have_sizes && fv.cluster_sizes[c] == 0) continue;
    sum += fv.cluster_means[c];
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::DegenerateInput, "all clusters empty for " + fv.participant_id);
  return sum / static_cast<double>(n);
}

double masked_mean(const Volume3D& volume, const BrainMask& mask) {
  require_same_dims(volume.dims(), mask.dims(), "masked_mean");
  double sum = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) sum += volume[i];
  }
  return sum / static_cast<double>(mask.count());
}

const NormativeCell& NormativeTable::cell(std::size_t bin, Sex sex) const {
  return cells.at(2 * bin + (sex == Sex::F ? 0 : 1));
}

std::string NormativeTable::to_json() const {
  json b = json::array();
  for (const auto& bin : bins.bins()) b.push_back({bin.lo, bin.hi});
  json c = json::array();
  for (const auto& cell : cells) {
    c.push_back({{"lo", cell.bin.lo},
                 {"hi", cell.bin.hi},
                 {"sex", std::string(perfvox::to_string(cell.sex))},
                 {"mu", cell.mu},
                 {"sigma", cell.sigma},
                 {"n", cell.n},
                 {"usable", cell.usable}});
  }
  return json{{"bins", b}, {"normalization", normalization}, {"cells", c}}.dump(2) + "\n";
}

NormativeTable NormativeTable::from_json(std::string_view text) {
  NormativeTable t;
  try {
    const json j = json::parse(text);
    std::vector<AgeBin> bins;
    for (const auto& b : j.at("bins")) bins.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    t.bins = AgeBins(std::move(bins));
    if (j.contains("normalization")) t.normalization = j.at("normalization").get<std::string>();
    for (const auto& c : j.at("cells")) {
      NormativeCell cell;
      cell.bin = {c.at("lo").get<int>(), c.at("hi").get<int>()};
      cell.sex = parse_sex(c.at("sex").get<std::string>());
      cell.mu = c.at("mu").get<double>();
      cell.sigma = c.at("sigma").get<double>();
      cell.n = c.at("n").get<int>();
      cell.usable = c.at("usable").get<bool>();
      t.cells.push_back(cell);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("normative table: ") + e.what());
  }
  if (t.cells.size() != 2 * t.bins.size()) throw Error(ErrorCode::Parse, "normative table: expected 2 cells per bin");
  for (std::size_t b = 0; b < t.bins.size(); ++b) {
    for (Sex s : {Sex::F, Sex::M}) {
      const auto& c = t.cell(b, s);
      if (c.bin != t.bins[b] || c.sex != s) throw Error(ErrorCode::Parse, "normative table: cells out of order");
      if (!std::isfinite(c.mu) || !std::isfinite(c.sigma) || c.sigma < 0.0) {
        throw Error(ErrorCode::Parse, "normative table: non-finite or negative cell statistics");
      }
    }
  }
  return t;
}

namespace {

NormativeCell summarize(const AgeBin& bin, Sex sex, const std::vector<double>& values) {
  NormativeCell c;
  c.bin = bin;
  c.sex = sex;
  c.n = static_cast<int>(values.size());
  if (values.empty()) return c;
  double sum = 0.0;
  for (double v : values) sum += v;
  c.mu = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - c.mu) * (v - c.mu);
    c.sigma = std::sqrt(ss / static_cast<double>(values.size() - 1));
    c.usable = true;
  }
  return c;
}

std::vector<std::vector<double>> group_by_cell(std::span<const double> cbf, std::span<const int> ages,
                                               std::span<const Sex> sexes, const AgeBins& bins) {
  if (cbf.size() != ages.size() || cbf.size() != sexes.size()) {
    throw Error(ErrorCode::LengthMismatch, "cbf, ages and sexes must have equal length");
  }
  if (bins.size() == 0) throw Error(ErrorCode::Config, "no age bins");
  std::vector<std::vector<double>> groups(2 * bins.size());
  for (std::size_t i = 0; i < cbf.size(); ++i) {
    if (!std::isfinite(cbf[i])) throw Error(ErrorCode::NonFinite, "participant mean CBF is not finite");
    const std::size_t b = bins.index_of(ages[i]);
    groups[2 * b + (sexes[i] == Sex::F ? 0 : 1)].push_back(cbf[i]);
  }
  return groups;
}

}  // namespace

NormativeTable fit_normative(std::span<const double> cbf, std::span<const int> ages, std::span<const Sex> sexes,
                             const AgeBins& bins) {
  const auto groups = group_by_cell(cbf, ages, sexes, bins);
  NormativeTable t;
  t.bins = bins;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    t.cells.push_back(summarize(bins[b], Sex::F, groups[2 * b]));
    t.cells.push_back(summarize(bins[b], Sex::M, groups[2 * b + 1]));
  }
  return t;
}

std::vector<NormativeCell> age_trend(std::span<const double> cbf, std::span<const int> ages,
                                     std::span<const Sex> sexes, const AgeBins& bins) {
  return fit_normative(cbf, ages, sexes, bins).cells;
}

std::string trend_to_csv(const std::vector<NormativeCell>& cells) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,sex,mean,std,n\n";
  for (const auto& c : cells) {
    out << c.bin.lo << ',' << c.bin.hi << ',' << perfvox::to_string(c.sex) << ',' << format_double(c.mu) << ','
        << format_double(c.sigma) << ',' << c.n << '\n';
  }
  return out.str();
}

std::vector<NormativeCell> trend_from_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::vector<std::string> want{"bin_lo", "bin_hi", "sex", "mean", "std", "n"};
  if (t.header != want) throw Error(ErrorCode::Parse, path.string() + ": expected header bin_lo,bin_hi,sex,mean,std,n");
  if (t.rows.empty()) throw Error(ErrorCode::Parse, path.string() + ": no data rows");
  std::vector<NormativeCell> out;
  for (const auto& r : t.rows) {
    NormativeCell c;
    c.bin = {static_cast<int>(parse_int(r[0], "bin_lo")), static_cast<int>(parse_int(r[1], "bin_hi"))};
    try {
      c.sex = parse_sex(r[2]);
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, path.string() + ": " + e.detail());
    }
    c.mu = parse_double(r[3], "mean");
    c.sigma = parse_double(r[4], "std");
    c.n = static_cast<int>(parse_int(r[5], "n"));
    c.usable = c.n >= 2;
    out.push_back(c);
  }
  return out;
}

std::string_view to_string(VrsStatus status) { return status == VrsStatus::Normal ? "Normal" : "AtRisk"; }

namespace {

void require_k(double k) {
  if (!std::isfinite(k) || k <= 0.0) throw Error(ErrorCode::InvalidK, "k must be > 0, got " + format_double(k));
}

VrsResult score_against(double cbf, int age, Sex sex, std::size_t bin, const NormativeCell& cell, double k) {
  if (!cell.usable) {
    throw Error(ErrorCode::UnusableCell, "normative cell " + cell.bin.label() + "/" +
                                             std::string(perfvox::to_string(sex)) + " has n=" +
                                             std::to_string(cell.n));
  }
  VrsResult r;
  r.cbf = cbf;
  r.age = age;
  r.bin = bin;
  r.sex = sex;
  r.k = k;
  r.lower_bound = cell.mu - cell.sigma;
  if (cbf >= r.lower_bound) {
    r.status = VrsStatus::Normal;
    r.deficit = 0.0;
  } else {
    r.status = VrsStatus::AtRisk;
    r.deficit = r.lower_bound - cbf;
  }
  r.vrs = k * r.deficit;
  return r;
}

}  // namespace

VrsResult score(double cbf, int age, Sex sex, const NormativeTable& table, double k) {
  require_k(k);
  const std::size_t bin = table.bins.index_of(age);
  return score_against(cbf, age, sex, bin, table.cell(bin, sex), k);
}

std::vector<VrsResult> score_cohort(std::span<const ParticipantMeta> meta, std::span<const double> cbf,
                                    const NormativeTable& table, double k, bool leave_one_out) {
  require_k(k);
  if (meta.size() != cbf.size()) throw Error(ErrorCode::LengthMismatch, "participants and CBF values differ");
  std::vector<VrsResult> out;
  out.reserve(meta.size());
  std::vector<std::vector<std::size_t>> members;
  if (leave_one_out) {
    members.resize(table.cells.size());
    for (std::size_t i = 0; i < meta.size(); ++i) {
      const std::size_t b = table.bins.index_of(meta[i].age);
      members[2 * b + (meta[i].sex == Sex::F ? 0 : 1)].push_back(i);
    }
  }
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const std::size_t bin = table.bins.index_of(meta[i].age);
    NormativeCell cell = table.cell(bin, meta[i].sex);
    if (leave_one_out) {
      std::vector<double> rest;
      for (std::size_t j : members[2 * bin + (meta[i].sex == Sex::F ? 0 : 1)]) {
        if (j != i) rest.push_back(cbf[j]);
      }
      cell = summarize(cell.bin, cell.sex, rest);
    }
    VrsResult r = score_against(cbf[i], meta[i].age, meta[i].sex, bin, cell, k);
    r.id = meta[i].id;
    out.push_back(std::move(r));
  }
  return out;
}

std::string vrs_to_csv(const std::vector<VrsResult>& results) {
  std::ostringstream out;
  out << "id,age,sex,cbf,lower_bound,status,deficit,vrs\n";
  for (const auto& r : results) {
    out << r.id << ',' << r.age << ',' << to_string(r.sex) << ',' << format_double(r.cbf) << ','
        << format_double(r.lower_bound) << ',' << to_string(r.status) << ',' << format_double(r.deficit) << ','
        << format_double(r.vrs) << '\n';
  }
  return out.str();
}

}  // namespace perfvox
