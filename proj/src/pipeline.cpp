#include "perfvox/pipeline.hpp"

#include <chrono>
#include <json.hpp>
#include <sstream>

#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/labeling_io.hpp"
#include "perfvox/nifti.hpp"
#include "perfvox/parallel.hpp"
#include "perfvox/plot.hpp"
#include "perfvox/preprocess.hpp"

namespace perfvox {

namespace fs = std::filesystem;
using nlohmann::json;

Volume3D cohort_template(std::span<const Volume3D> volumes) {
  if (volumes.empty()) throw Error(ErrorCode::DegenerateInput, "cohort template needs at least one volume");
  std::vector<double> sum(volumes[0].size(), 0.0);
  for (const auto& v : volumes) {
    require_same_dims(volumes[0].dims(), v.dims(), "cohort volumes");
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  for (double& s : sum) s /= static_cast<double>(volumes.size());
  return Volume3D(volumes[0].dims(), volumes[0].spacing(), std::move(sum), volumes[0].affine());
}

std::string feature_schema_json(const FeatureMatrix& features, const RunConfig& config) {
  json cols = json::array();
  cols.push_back({{"name", "id"}, {"type", "string"}, {"description", "participant id"}});
  cols.push_back({{"name", "age"}, {"type", "integer"}, {"description", "age in years"}});
  cols.push_back({{"name", "sex"}, {"type", "string"}, {"description", "F or M"}});
  for (int c = 0; c < features.k; ++c) {
    cols.push_back({{"name", "c" + std::to_string(c)},
                    {"type", "number"},
                    {"description", "mean intensity of cluster " + std::to_string(c) + " (0 when empty)"}});
  }
  for (int c = 0; c < features.k; ++c) {
    for (double m : features.margins_mm) {
      cols.push_back({{"name", "s" + std::to_string(c) + "_" + margin_label(m)},
                      {"type", "number"},
                      {"description", "mean intensity of the " + margin_label(m) + " mm shell around cluster " +
                                          std::to_string(c) + ", excluding the cluster"}});
    }
  }
  json j{{"k", features.k},
         {"margins_mm", features.margins_mm},
         {"feature_space", std::string(to_string(config.feature_space))},
         {"cluster_order", "seed grid cell index, z-major"},
         {"columns", cols}};
  return j.dump(2) + "\n";
}

std::vector<Volume3D> load_cohort_volumes(const CohortManifest& manifest, int jobs, std::size_t* nan_replaced) {
  std::vector<Volume3D> volumes(manifest.size());
  std::vector<std::size_t> nans(manifest.size(), 0);
  parallel_for(manifest.size(), jobs, [&](std::size_t i) {
    const fs::path p = manifest.resolve(manifest.rows[i]);
    if (!fs::exists(p)) {
      throw Error(ErrorCode::MissingVolume, "participant " + manifest.rows[i].id + ": volume not found: " + p.string());
    }
    LoadedNifti loaded = load_nifti_with_report(p);
    volumes[i] = std::move(loaded.volume);
    nans[i] = loaded.report.nan_replaced;
  });
  if (nan_replaced) {
    *nan_replaced = 0;
    for (std::size_t n : nans) *nan_replaced += n;
  }
  for (const auto& v : volumes) require_same_dims(volumes[0].dims(), v.dims(), "cohort volumes");
  return volumes;
}

SupervoxelLabeling segment_volume(const Volume3D& volume, const BrainMask& mask, const RunConfig& config) {
  if (config.slic_raw) return run_slic(volume, mask, config.slic);
  return run_slic(normalize_intensity(volume, mask, config.normalization), mask, config.slic);
}

namespace {

void precheck(const CohortManifest& manifest, const RunConfig& config) {
  validate(config);
  validate_manifest(manifest);
  std::size_t nf = 0;
  for (const auto& r : manifest.rows) {
    config.age_bins.index_of(r.age);
    if (r.sex == Sex::F) ++nf;
  }
  const std::size_t nm = manifest.size() - nf;
  if (nf < 2 || nm < 2) {
    throw Error(ErrorCode::DegenerateInput, "group statistics need at least 2 participants per sex");
  }
  if (config.classifier != ClassifierChoice::None) {
    const auto k = static_cast<std::size_t>(config.folds);
    if (nf < k || nm < k) {
      throw Error(ErrorCode::DegenerateInput, std::to_string(config.folds) + "-fold CV needs at least " +
                                                  std::to_string(config.folds) + " participants per sex");
    }
  }
  if (config.vrs_k <= 0.0) throw Error(ErrorCode::InvalidK, "vrs.k must be > 0");
}

class Runner {
 public:
  Runner(fs::path out, const RunConfig& config, std::size_t n) : out_(std::move(out)), config_(config), n_(n) {}

  template <typename Fn>
  void stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      timings_.push_back({name, seconds_since(t0)});
      write_text_file(out_ / "FAILED", "stage " + name + ": " + e.what() + "\n");
      write_manifest("failed", name);
      throw;
    }
    timings_.push_back({name, seconds_since(t0)});
  }

  void output(const std::string& rel) { outputs_.push_back(rel); }
  void set_nan_replaced(std::size_t n) { nan_replaced_ = n; }
  const std::vector<StageTiming>& timings() const { return timings_; }

  void write_manifest(const std::string& status, const std::string& failed_stage = "") const {
    json cfg = json::object();
    for (const auto& [k, v] : config_.entries()) cfg[k] = v;
    json stages = json::array();
    for (const auto& t : timings_) stages.push_back({{"name", t.name}, {"wall_seconds", t.seconds}});
    json j{{"tool", "perfvox"},
           {"version", kVersion},
           {"status", status},
           {"seed", config_.seed},
           {"jobs", config_.jobs},
           {"participants", n_},
           {"nan_replaced", nan_replaced_},
           {"config", cfg},
           {"stages", stages},
           {"outputs", outputs_}};
    if (!failed_stage.empty()) j["failed_stage"] = failed_stage;
    write_text_file(out_ / "run_manifest.json", j.dump(2) + "\n");
  }

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  fs::path out_;
  const RunConfig& config_;
  std::size_t n_;
  std::size_t nan_replaced_ = 0;
  std::vector<StageTiming> timings_;
  std::vector<std::string> outputs_;
};

std::string participant_cbf_csv(const CohortManifest& manifest, const std::vector<double>& cbf) {
  std::ostringstream out;
  out << "id,age,sex,cbf\n";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.rows[i];
    out << r.id << ',' << r.age << ',' << to_string(r.sex) << ',' << format_double(cbf[i]) << '\n';
  }
  return out.str();
}

PipelineResult run_impl(const CohortManifest& manifest, std::optional<std::vector<Volume3D>> preloaded,
                        const RunConfig& config, const PipelineOptions& options) {
  precheck(manifest, config);
  const fs::path out = config.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + out.string() + ": " + ec.message());
  fs::remove(out / "FAILED", ec);

  PipelineResult res;
  Runner run(out, config, manifest.size());
  std::vector<Volume3D> volumes;
  Volume3D templ;

  run.stage("load", [&] {
    if (preloaded) {
      if (preloaded->size() != manifest.size()) {
        throw Error(ErrorCode::MissingVolume, "expected " + std::to_string(manifest.size()) + " volumes, got " +
                                                  std::to_string(preloaded->size()));
      }
      volumes = std::move(*preloaded);
      for (const auto& v : volumes) require_same_dims(volumes[0].dims(), v.dims(), "cohort volumes");
    } else {
      volumes = load_cohort_volumes(manifest, config.jobs, &res.nan_replaced);
      run.set_nan_replaced(res.nan_replaced);
    }
    templ = cohort_template(volumes);
    if (options.mask) {
      require_same_dims(volumes[0].dims(), options.mask->dims(), "mask");
      res.mask = *options.mask;
    } else if (options.mask_path) {
      const Volume3D m = load_nifti(*options.mask_path);
      require_same_dims(volumes[0].dims(), m.dims(), "mask");
      std::vector<std::uint8_t> inside(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) inside[i] = m[i] > 0.0 ? 1 : 0;
      res.mask = BrainMask(m.dims(), std::move(inside));
    } else {
      res.mask = auto_mask(templ, config.mask_fraction);
    }
    std::vector<double> mv(res.mask.data().begin(), res.mask.data().end());
    save_nifti(Volume3D(templ.dims(), templ.spacing(), std::move(mv), templ.affine()), out / "mask.nii.gz",
               NiftiDatatype::UInt8);
    run.output("mask.nii.gz");
  });

  run.stage("segment", [&] {
    res.labelings.resize(volumes.size());
    if (options.write_labelings) fs::create_directories(out / "labels");
    parallel_for(volumes.size(), config.jobs, [&](std::size_t i) {
      res.labelings[i] = segment_volume(volumes[i], res.mask, config);
      if (options.write_labelings) {
        const std::string id = manifest.rows[i].id;
        save_labeling(res.labelings[i], config.slic, volumes[i].spacing(), out / "labels" / (id + "_labels.nii.gz"),
                      out / "labels" / (id + "_labels.json"));
      }
    });
    if (options.write_labelings) run.output("labels/");
  });

  run.stage("features", [&] {
    if (config.feature_space == FeatureSpace::Raw) {
      res.features = build_feature_matrix(manifest, res.labelings, volumes, config.margins_mm);
    } else {
      std::vector<Volume3D> normalized(volumes.size());
      parallel_for(volumes.size(), config.jobs, [&](std::size_t i) {
        normalized[i] = normalize_intensity(volumes[i], res.mask, config.normalization);
      });
      res.features = build_feature_matrix(manifest, res.labelings, normalized, config.margins_mm);
    }
    write_text_file(out / "features.csv", res.features.to_csv());
    write_text_file(out / "features.schema.json", feature_schema_json(res.features, config));
    run.output("features.csv");
    run.output("features.schema.json");
  });

  run.stage("stats", [&] {
    res.stats = analyze_clusters(res.features, config.alpha);
    write_text_file(out / "stats.csv", res.stats.to_csv());
    write_text_file(out / "stats.json", res.stats.summary().dump(2) + "\n");
    std::vector<ClusterPValue> pv;
    for (const auto& c : res.stats.clusters) pv.push_back({c.cluster_id, c.p_raw, c.significant});
    write_text_file(out / "stats.svg", stats_svg(pv, config.alpha));
    run.output("stats.csv");
    run.output("stats.json");
    run.output("stats.svg");
  });

  run.stage("classify", [&] {
    if (config.classifier == ClassifierChoice::None) return;
    const auto cm = res.features.cluster_matrix();
    const Matrix x(res.features.size(), static_cast<std::size_t>(res.features.k), cm);
    const auto sexes = res.features.sexes();
    const auto y = sex_labels(sexes);
    std::vector<ModelKind> kinds;
    if (config.classifier != ClassifierChoice::Logistic) kinds.push_back(ModelKind::ConvNet);
    if (config.classifier != ClassifierChoice::ConvNet) kinds.push_back(ModelKind::Logistic);
    json models = json::array();
    std::string csv;
    for (ModelKind kind : kinds) {
      CvOptions opt;
      opt.kind = kind;
      opt.net = config.net;
      opt.logreg_l2 = config.logreg_l2;
      opt.folds = config.folds;
      opt.seed = config.seed;
      opt.jobs = config.jobs;
      res.cv.push_back(cross_validate(x, y, opt));
      models.push_back(json::parse(res.cv.back().to_json()));
      std::istringstream lines(res.cv.back().to_csv());
      std::string line;
      bool first = true;
      while (std::getline(lines, line)) {
        if (first) {
          if (csv.empty()) csv = "model," + line + "\n";
          first = false;
          continue;
        }
        csv += std::string(to_string(kind)) + "," + line + "\n";
      }
    }
    write_text_file(out / "cv_report.json", json{{"models", models}}.dump(2) + "\n");
    write_text_file(out / "cv_report.csv", csv);
    run.output("cv_report.json");
    run.output("cv_report.csv");
  });

  run.stage("normfit", [&] {
    res.participant_cbf.reserve(res.features.size());
    for (const auto& row : res.features.rows) res.participant_cbf.push_back(participant_mean_cbf(row, config.weighting));
    std::vector<int> ages;
    std::vector<Sex> sexes;
    for (const auto& m : manifest.rows) {
      ages.push_back(m.age);
      sexes.push_back(m.sex);
    }
    res.normative = fit_normative(res.participant_cbf, ages, sexes, config.age_bins);
    res.normative.normalization =
        config.feature_space == FeatureSpace::Raw ? "raw" : std::string(to_string(config.normalization));
    write_text_file(out / "normative.json", res.normative.to_json());
    write_text_file(out / "participant_cbf.csv", participant_cbf_csv(manifest, res.participant_cbf));
    write_text_file(out / "age_trend.csv", trend_to_csv(res.normative.cells));
    write_text_file(out / "age_trend.svg", trend_svg(res.normative.cells));
    run.output("normative.json");
    run.output("participant_cbf.csv");
    run.output("age_trend.csv");
    run.output("age_trend.svg");
  });

  run.stage("score", [&] {
    res.vrs = score_cohort(manifest.rows, res.participant_cbf, res.normative, config.vrs_k, config.loocv);
    write_text_file(out / "vrs.csv", vrs_to_csv(res.vrs));
    run.output("vrs.csv");
  });

  if (options.atlas_path) {
    run.stage("atlas", [&] {
      if (!options.atlas_lut_path) throw Error(ErrorCode::Config, "--atlas requires --atlas-lut");
      AtlasVolume atlas(load_nifti(*options.atlas_path), load_roi_lookup(*options.atlas_lut_path));
      const SupervoxelLabeling template_labels = segment_volume(templ, res.mask, config);
      res.atlas_assignment = majority_label(template_labels, atlas);
      write_text_file(out / "atlas_assignment.csv", res.atlas_assignment->to_csv());
      run.output("atlas_assignment.csv");
      const auto sig = res.stats.significant_ids();
      if (!sig.empty()) {
        try {
          res.roi_tests = roi_sex_compare(res.features, *res.atlas_assignment, sig);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptySelection) throw;
        }
      }
      write_text_file(out / "roi_ttests.csv", roi_comparisons_to_csv(res.roi_tests));
      run.output("roi_ttests.csv");
    });
  }

  res.timings = run.timings();
  run.write_manifest("ok");
  return res;
}

}  // namespace

PipelineResult run_pipeline(const CohortManifest& manifest, const RunConfig& config, const PipelineOptions& options) {
  return run_impl(manifest, std::nullopt, config, options);
}

PipelineResult run_pipeline(const CohortManifest& manifest, std::vector<Volume3D> volumes, const RunConfig& config,
                            const PipelineOptions& options) {
  return run_impl(manifest, std::move(volumes), config, options);
}

}  // namespace perfvox
