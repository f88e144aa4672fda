#include "perfvox/labeling_io.hpp"

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/nifti.hpp"

namespace perfvox {

using nlohmann::json;

json to_json(const SlicParams& p) {
  return json{{"k", p.k},
              {"compactness", p.compactness},
              {"smoothing_sigma_mm", p.smoothing_sigma_mm},
              {"max_iters", p.max_iters},
              {"tol", p.tol},
              {"connectivity", static_cast<int>(p.connectivity)},
              {"perturb_seeds", p.perturb_seeds},
              {"enforce_connectivity", p.enforce_connectivity}};
}

SlicParams slic_params_from_json(const json& j) {
  SlicParams p;
  p.k = j.at("k").get<int>();
  p.compactness = j.at("compactness").get<double>();
  p.smoothing_sigma_mm = j.at("smoothing_sigma_mm").get<double>();
  p.max_iters = j.at("max_iters").get<int>();
  p.tol = j.at("tol").get<double>();
  p.connectivity = parse_connectivity(j.at("connectivity").get<int>());
  p.perturb_seeds = j.value("perturb_seeds", true);
  p.enforce_connectivity = j.value("enforce_connectivity", true);
  return p;
}

json labeling_sidecar(const SupervoxelLabeling& l, const SlicParams& params) {
  json centroids = json::array();
  for (const auto& c : l.centroids) centroids.push_back({c.x, c.y, c.z, c.intensity});
  json keys = json::array();
  for (const auto& s : l.seed_keys) keys.push_back({s.grid_index, s.split});
  std::int64_t total = 0;
  for (auto s : l.sizes) total += s;
  return json{{"k", l.k()},
              {"dims", {l.dims.nx, l.dims.ny, l.dims.nz}},
              {"grid_step", l.grid_step},
              {"params", to_json(params)},
              {"sizes", l.sizes},
              {"masked_voxels", total},
              {"centroids", centroids},
              {"seed_keys", keys},
              {"iterations", l.iterations},
              {"cost_history", l.cost_history}};
}

void save_labeling(const SupervoxelLabeling& l, const SlicParams& params, const Spacing& spacing,
                   const std::filesystem::path& nifti_path, const std::filesystem::path& sidecar_path) {
  std::vector<double> data(l.labels.begin(), l.labels.end());
  save_nifti(Volume3D(l.dims, spacing, std::move(data)), nifti_path, NiftiDatatype::Int32);
  write_text_file(sidecar_path, labeling_sidecar(l, params).dump(2) + "\n");
}

SupervoxelLabeling load_labeling(const std::filesystem::path& nifti_path, const std::filesystem::path& sidecar_path) {
  Volume3D v = load_nifti(nifti_path);
  json j;
  try {
    j = json::parse(read_text_file(sidecar_path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, sidecar_path.string() + ": " + e.what());
  }
  SupervoxelLabeling l;
  l.dims = v.dims();
  const int k = j.at("k").get<int>();
  l.labels.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double lab = v[i];
    if (lab < -1 || lab >= k) throw Error(ErrorCode::Parse, nifti_path.string() + ": label out of range");
    l.labels[i] = static_cast<std::int32_t>(lab);
  }
  l.grid_step = j.at("grid_step").get<double>();
  l.sizes = j.at("sizes").get<std::vector<std::int64_t>>();
  for (const auto& c : j.at("centroids")) {
    l.centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>()});
  }
  for (const auto& s : j.at("seed_keys")) l.seed_keys.push_back({s.at(0).get<std::int64_t>(), s.at(1).get<int>()});
  l.iterations = j.value("iterations", 0);
  l.cost_history = j.value("cost_history", std::vector<double>{});
  if (static_cast<int>(l.sizes.size()) != k || static_cast<int>(l.centroids.size()) != k ||
      static_cast<int>(l.seed_keys.size()) != k) {
    throw Error(ErrorCode::Parse, sidecar_path.string() + ": table lengths do not match k");
  }
  return l;
}

}  // namespace perfvox
