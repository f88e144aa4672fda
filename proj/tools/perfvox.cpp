#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "perfvox/atlas.hpp"
#include "perfvox/classify.hpp"
#include "perfvox/config.hpp"
#include "perfvox/csv.hpp"
#include "perfvox/error.hpp"
#include "perfvox/features.hpp"
#include "perfvox/labeling_io.hpp"
#include "perfvox/manifest.hpp"
#include "perfvox/nifti.hpp"
#include "perfvox/parallel.hpp"
#include "perfvox/pipeline.hpp"
#include "perfvox/plot.hpp"
#include "perfvox/preprocess.hpp"
#include "perfvox/stats.hpp"
#include "perfvox/synth.hpp"
#include "perfvox/vrs.hpp"

namespace fs = std::filesystem;
using namespace perfvox;

namespace {

// A command-line flag that maps onto a config key.
struct Override {
  std::string flag;
  std::string key;
  std::string value;
  bool given = false;
};

struct Globals {
  std::string config_path;
  std::vector<std::string> settings;  // key=value
  std::vector<Override> overrides;
};

void add_flag(CLI::App* cmd, std::vector<Override>& store, std::size_t index, const std::string& help) {
  cmd->add_option_function<std::string>(
      store[index].flag,
      [&store, index](const std::string& v) {
        store[index].value = v;
        store[index].given = true;
      },
      help);
}

RunConfig build_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
    validate(cfg);
  }
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, "--set expects key=value, got '" + s + "'");
    try {
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
      validate(cfg);
    } catch (const Error& e) {
      throw Error(e.code(), "--set " + s.substr(0, eq) + ": " + e.detail());
    }
  }
  for (const auto& o : g.overrides) {
    if (!o.given) continue;
    try {
      cfg.set(o.key, o.value);
      validate(cfg);
    } catch (const Error& e) {
      throw Error(e.code(), o.flag + ": " + e.detail());
    }
  }
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
}

std::string stem_of(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* ext : {".nii.gz", ".nii", ".hdr", ".img"}) {
    const std::string e(ext);
    if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
      return name.substr(0, name.size() - e.size());
    }
  }
  return p.stem().string();
}

BrainMask mask_from_file(const fs::path& path, const Dims& dims) {
  const Volume3D m = load_nifti(path);
  require_same_dims(dims, m.dims(), "mask");
  std::vector<std::uint8_t> inside(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) inside[i] = m[i] > 0.0 ? 1 : 0;
  return BrainMask(m.dims(), std::move(inside));
}

struct CbfTable {
  std::vector<ParticipantMeta> meta;
  std::vector<double> cbf;
};

CbfTable read_cbf_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t id = t.column("id"), age = t.column("age"), sex = t.column("sex"), cbf = t.column("cbf");
  CbfTable out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ParticipantMeta m;
    m.id = row[id];
    m.age = static_cast<int>(parse_int(row[age], "age"));
    try {
      m.sex = parse_sex(row[sex]);
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(t.line_numbers[r]) + ": " + e.detail());
    }
    out.meta.push_back(m);
    out.cbf.push_back(parse_double(row[cbf], "cbf"));
  }
  if (out.meta.empty()) throw Error(ErrorCode::Parse, path.string() + ": no rows");
  return out;
}

std::string cbf_csv(const std::vector<ParticipantMeta>& meta, const std::vector<double>& cbf) {
  std::ostringstream out;
  out << "id,age,sex,cbf\n";
  for (std::size_t i = 0; i < meta.size(); ++i) {
    out << meta[i].id << ',' << meta[i].age << ',' << to_string(meta[i].sex) << ',' << format_double(cbf[i]) << '\n';
  }
  return out.str();
}

void write_normative_outputs(const fs::path& out, const NormativeTable& table, const std::vector<ParticipantMeta>& meta,
                             const std::vector<double>& cbf) {
  write_text_file(out / "normative.json", table.to_json());
  write_text_file(out / "participant_cbf.csv", cbf_csv(meta, cbf));
  write_text_file(out / "age_trend.csv", trend_to_csv(table.cells));
  write_text_file(out / "age_trend.svg", trend_svg(table.cells));
}

int run(int argc, char** argv) {
  CLI::App app{"Supervoxel perfusion analytics: segmentation, regional features, group statistics, "
               "sex classification and vascular risk scoring."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  Globals g;
  g.overrides.reserve(64);
  app.add_option("--config", g.config_path, "flat key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.settings, "override one configuration key (key=value); repeatable");
  auto global = [&](const std::string& flag, const std::string& key, const std::string& help) {
    g.overrides.push_back({flag, key, "", false});
    add_flag(&app, g.overrides, g.overrides.size() - 1, help);
  };
  global("--seed", "seed", "random seed");
  global("--jobs", "jobs", "worker threads for per-participant and per-fold work");
  global("--out", "out", "output directory (output file for plot)");

  auto flag = [&](CLI::App* cmd, const std::string& f, const std::string& key, const std::string& help) {
    g.overrides.push_back({f, key, "", false});
    add_flag(cmd, g.overrides, g.overrides.size() - 1, help);
  };
  auto slic_flags = [&](CLI::App* cmd) {
    flag(cmd, "--k", "slic.k", "number of supervoxels");
    flag(cmd, "--compactness", "slic.compactness", "SLIC compactness m");
    flag(cmd, "--sigma", "slic.sigma_mm", "Gaussian pre-smoothing sigma in mm");
    flag(cmd, "--max-iters", "slic.max_iters", "SLIC iteration cap");
    flag(cmd, "--connectivity", "slic.connectivity", "6 or 26");
    flag(cmd, "--normalization", "normalization", "zscore or mean1");
    flag(cmd, "--raw", "slic.raw", "true: cluster raw intensities instead of normalized ones");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort (volumes + manifest.csv)");
  std::string preset = "canonical";
  int n_per_group = -1, n_female = -1, n_male = -1;
  double base = -1, decay = -1, noise = -1, effect_size = -1, age_slope = -1;
  std::string dims_text, bins_text, effect_text;
  int ref_k = -1;
  synth->add_option("--preset", preset, "canonical or small")->check(CLI::IsMember({"canonical", "small"}));
  synth->add_option("--dims", dims_text, "nx,ny,nz");
  synth->add_option("--base", base, "base intensity");
  synth->add_option("--decay", decay, "radial decay per mm");
  synth->add_option("--noise", noise, "noise standard deviation");
  synth->add_option("--n-per-group", n_per_group, "participants per (sex, bin) cell");
  synth->add_option("--n-female", n_female, "female total spread over bins");
  synth->add_option("--n-male", n_male, "male total spread over bins");
  synth->add_option("--bins", bins_text, "standard, coarse or lo-hi,lo-hi,...");
  synth->add_option("--effect-clusters", effect_text, "comma-separated cluster indices");
  synth->add_option("--effect-size", effect_size, "female uplift inside the effect clusters");
  synth->add_option("--age-slope", age_slope, "fractional decline per year");
  synth->add_option("--ref-k", ref_k, "clusters in the reference labeling");

  // segment
  auto* segment = app.add_subcommand("segment", "segment one volume into supervoxels");
  std::string seg_volume, seg_mask;
  segment->add_option("--volume", seg_volume, "input NIfTI")->required()->check(CLI::ExistingFile);
  segment->add_option("--mask", seg_mask, "brain mask NIfTI (default: auto mask)")->check(CLI::ExistingFile);
  slic_flags(segment);
  flag(segment, "--mask-fraction", "mask_fraction", "auto-mask threshold as a fraction of the maximum");

  // features
  auto* features = app.add_subcommand("features", "build the feature matrix from volumes and labelings");
  std::string feat_manifest, feat_labels;
  features->add_option("--manifest", feat_manifest, "cohort manifest CSV")->required()->check(CLI::ExistingFile);
  features->add_option("--labels-dir", feat_labels, "directory with <id>_labels.nii.gz + .json")->required();
  flag(features, "--margins", "margins_mm", "shell margins in mm, ascending");

  // stats
  auto* stats = app.add_subcommand("stats", "per-cluster female vs male ANOVA with Bonferroni correction");
  std::string stats_features;
  stats->add_option("--features", stats_features, "features.csv")->required()->check(CLI::ExistingFile);
  flag(stats, "--alpha", "alpha", "family-wise significance level");

  // classify
  auto* classify = app.add_subcommand("classify", "stratified k-fold cross-validation of sex classifiers");
  std::string cls_features;
  bool save_models = false;
  classify->add_option("--features", cls_features, "features.csv")->required()->check(CLI::ExistingFile);
  classify->add_flag("--save-model", save_models, "also fit on all rows and write model files");
  flag(classify, "--model", "classifier", "convnet, logistic or both");
  flag(classify, "--folds", "folds", "number of folds");
  flag(classify, "--epochs", "net.epochs", "training epochs");

  // normfit
  auto* normfit = app.add_subcommand("normfit", "fit the age/sex normative table of mean CBF");
  std::string nf_manifest, nf_mask, nf_cbf;
  auto* nf_m = normfit->add_option("--manifest", nf_manifest, "cohort manifest CSV")->check(CLI::ExistingFile);
  auto* nf_c = normfit->add_option("--cbf-csv", nf_cbf, "id,age,sex,cbf CSV")->check(CLI::ExistingFile);
  nf_m->excludes(nf_c);
  normfit->add_option("--mask", nf_mask, "brain mask NIfTI (with --manifest)")->check(CLI::ExistingFile);
  flag(normfit, "--bins", "age_bins", "standard, coarse or lo-hi,...");

  // score
  auto* score_cmd = app.add_subcommand("score", "vascular risk scores against a normative table");
  std::string sc_table, sc_cbf;
  score_cmd->add_option("--normative", sc_table, "normative.json")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--cbf-csv", sc_cbf, "id,age,sex,cbf CSV")->required()->check(CLI::ExistingFile);
  flag(score_cmd, "--k-scale", "vrs.k", "VRS scale factor k > 0");
  flag(score_cmd, "--loocv", "vrs.loocv", "true: refit each participant's cell without them");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "segment, features, stats, classify, normfit and score");
  std::string pl_manifest, pl_mask, pl_atlas, pl_lut;
  pipeline->add_option("--manifest", pl_manifest, "cohort manifest CSV")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--mask", pl_mask, "brain mask NIfTI (default: auto mask of the cohort mean)")
      ->check(CLI::ExistingFile);
  pipeline->add_option("--atlas", pl_atlas, "atlas label NIfTI on the same grid")->check(CLI::ExistingFile);
  pipeline->add_option("--atlas-lut", pl_lut, "roi_id,name CSV")->check(CLI::ExistingFile);
  slic_flags(pipeline);
  flag(pipeline, "--model", "classifier", "convnet, logistic, both or none");
  flag(pipeline, "--epochs", "net.epochs", "training epochs");

  // plot
  auto* plot = app.add_subcommand("plot", "render an age-trend or stats CSV as SVG");
  std::string plot_input;
  plot->add_option("--input", plot_input, "age_trend.csv or stats.csv")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const RunConfig cfg = build_config(g);
  const fs::path out = cfg.out;

  if (*synth) {
    PhantomSpec ph = canonical_phantom(cfg.seed);
    CohortSpec cs = canonical_cohort(cfg.seed);
    if (preset == "small") {
      cs.n_female_total.reset();
      cs.n_male_total.reset();
      cs.n_per_group = 5;
    }
    try {
      if (!dims_text.empty()) {
        const auto d = parse_int_list(dims_text);
        if (d.size() != 3) throw Error(ErrorCode::Config, "expected nx,ny,nz");
        ph.dims = {static_cast<std::size_t>(std::max(0, d[0])), static_cast<std::size_t>(std::max(0, d[1])),
                   static_cast<std::size_t>(std::max(0, d[2]))};
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, std::string("--dims: ") + e.detail());
    }
    if (base >= 0) ph.base_mean = base;
    if (decay >= 0) ph.radial_decay = decay;
    if (noise >= 0) ph.noise_sigma = noise;
    if (n_per_group >= 0) {
      cs.n_per_group = n_per_group;
      cs.n_female_total.reset();
      cs.n_male_total.reset();
    }
    if (n_female >= 0) cs.n_female_total = n_female;
    if (n_male >= 0) cs.n_male_total = n_male;
    if (!bins_text.empty()) cs.age_bins = AgeBins::preset(bins_text);
    if (ref_k >= 0) {
      cs.reference_slic.k = ref_k;
      if (effect_text.empty()) cs.effect_clusters = spread_clusters(15, std::max(1, ref_k));
    }
    if (!effect_text.empty()) cs.effect_clusters = parse_int_list(effect_text);
    if (effect_size >= 0) cs.effect_size = effect_size;
    if (age_slope >= 0) cs.age_slope = age_slope;
    validate(ph);
    validate(cs);
    const SyntheticCohort cohort = generate_cohort(cs, ph, cfg.jobs);
    write_cohort(cohort, out, cfg.jobs);
    nlohmann::json spec{{"dims", {ph.dims.nx, ph.dims.ny, ph.dims.nz}},
                        {"base_mean", ph.base_mean},
                        {"radial_decay", ph.radial_decay},
                        {"noise_sigma", ph.noise_sigma},
                        {"seed", cfg.seed},
                        {"age_bins", cs.age_bins.to_string()},
                        {"effect_clusters", cs.effect_clusters},
                        {"effect_size", cs.effect_size},
                        {"age_slope", cs.age_slope},
                        {"reference_k", cs.reference_slic.k},
                        {"participants", cohort.manifest.size()}};
    write_text_file(out / "cohort.json", spec.dump(2) + "\n");
    std::cout << "wrote " << cohort.manifest.size() << " participants to " << out.string() << "\n";
    return 0;
  }

  if (*segment) {
    const LoadedNifti loaded = load_nifti_with_report(seg_volume);
    const Volume3D& v = loaded.volume;
    if (loaded.report.nan_replaced > 0) {
      std::cout << "replaced " << loaded.report.nan_replaced << " non-finite voxels with 0\n";
    }
    const BrainMask mask = seg_mask.empty() ? auto_mask(v, cfg.mask_fraction) : mask_from_file(seg_mask, v.dims());
    if (static_cast<std::size_t>(cfg.slic.k) > mask.count()) {
      throw Error(ErrorCode::Config, "--k: " + std::to_string(cfg.slic.k) + " exceeds the " +
                                         std::to_string(mask.count()) + " masked voxels");
    }
    const SupervoxelLabeling l = segment_volume(v, mask, cfg);
    ensure_dir(out);
    const std::string stem = stem_of(seg_volume);
    save_labeling(l, cfg.slic, v.spacing(), out / (stem + "_labels.nii.gz"), out / (stem + "_labels.json"));
    std::cout << "segmented " << seg_volume << " into " << l.k() << " supervoxels\n";
    return 0;
  }

  if (*features) {
    const CohortManifest manifest = load_manifest(feat_manifest);
    std::size_t nans = 0;
    const auto volumes = load_cohort_volumes(manifest, cfg.jobs, &nans);
    if (nans > 0) std::cout << "replaced " << nans << " non-finite voxels with 0\n";
    std::vector<SupervoxelLabeling> labelings(manifest.size());
    parallel_for(manifest.size(), cfg.jobs, [&](std::size_t i) {
      const fs::path base_path = fs::path(feat_labels) / (manifest.rows[i].id + "_labels");
      const fs::path nii = base_path.string() + ".nii.gz";
      if (!fs::exists(nii)) {
        throw Error(ErrorCode::MissingVolume, "participant " + manifest.rows[i].id + ": labeling not found: " + nii.string());
      }
      labelings[i] = load_labeling(nii, base_path.string() + ".json");
    });
    const FeatureMatrix fm = build_feature_matrix(manifest, labelings, volumes, cfg.margins_mm);
    ensure_dir(out);
    write_text_file(out / "features.csv", fm.to_csv());
    write_text_file(out / "features.schema.json", feature_schema_json(fm, cfg));
    std::cout << "wrote " << fm.size() << " x " << fm.column_names().size() << " feature matrix\n";
    return 0;
  }

  if (*stats) {
    const FeatureMatrix fm = FeatureMatrix::from_csv(stats_features);
    const StatsReport report = analyze_clusters(fm, cfg.alpha);
    ensure_dir(out);
    write_text_file(out / "stats.csv", report.to_csv());
    write_text_file(out / "stats.json", report.summary().dump(2) + "\n");
    std::cout << report.significant_ids().size() << " of " << report.n_tests << " clusters significant\n";
    return 0;
  }

  if (*classify) {
    const FeatureMatrix fm = FeatureMatrix::from_csv(cls_features);
    const Matrix x(fm.size(), static_cast<std::size_t>(fm.k), fm.cluster_matrix());
    const auto sexes = fm.sexes();
    const auto y = sex_labels(sexes);
    std::vector<ModelKind> kinds;
    if (cfg.classifier == ClassifierChoice::None) throw Error(ErrorCode::Config, "--model: none selects no model");
    if (cfg.classifier != ClassifierChoice::Logistic) kinds.push_back(ModelKind::ConvNet);
    if (cfg.classifier != ClassifierChoice::ConvNet) kinds.push_back(ModelKind::Logistic);
    ensure_dir(out);
    nlohmann::json models = nlohmann::json::array();
    std::string csv;
    std::vector<std::size_t> all(fm.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (ModelKind kind : kinds) {
      CvOptions opt;
      opt.kind = kind;
      opt.net = cfg.net;
      opt.logreg_l2 = cfg.logreg_l2;
      opt.folds = cfg.folds;
      opt.seed = cfg.seed;
      opt.jobs = cfg.jobs;
      const CvReport r = cross_validate(x, y, opt);
      models.push_back(nlohmann::json::parse(r.to_json()));
      std::istringstream lines(r.to_csv());
      std::string line;
      std::getline(lines, line);
      if (csv.empty()) csv = "model," + line + "\n";
      while (std::getline(lines, line)) csv += std::string(to_string(kind)) + "," + line + "\n";
      std::cout << to_string(kind) << ": pooled accuracy " << format_double(r.aggregate.accuracy) << "\n";
      if (save_models) {
        TrainedModel m;
        if (kind == ModelKind::ConvNet) {
          NetConfig net = cfg.net;
          net.input_len = fm.k;
          net.seed = cfg.seed;
          m = train(net, x, y, all);
        } else {
          m = train_logreg(x, y, all, cfg.logreg_l2);
        }
        const std::string name = "model_" + std::string(to_string(kind));
        perfvox::save_model(m, out / (name + ".json"), out / (name + ".bin"));
      }
    }
    write_text_file(out / "cv_report.json", nlohmann::json{{"models", models}}.dump(2) + "\n");
    write_text_file(out / "cv_report.csv", csv);
    return 0;
  }

  if (*normfit) {
    std::vector<ParticipantMeta> meta;
    std::vector<double> cbf;
    if (!nf_manifest.empty()) {
      const CohortManifest manifest = load_manifest(nf_manifest);
      for (const auto& r : manifest.rows) cfg.age_bins.index_of(r.age);
      std::size_t nans = 0;
      const auto volumes = load_cohort_volumes(manifest, cfg.jobs, &nans);
      if (nans > 0) std::cout << "replaced " << nans << " non-finite voxels with 0\n";
      const BrainMask mask = nf_mask.empty() ? auto_mask(cohort_template(volumes), cfg.mask_fraction)
                                             : mask_from_file(nf_mask, volumes[0].dims());
      meta = manifest.rows;
      cbf.resize(volumes.size());
      for (std::size_t i = 0; i < volumes.size(); ++i) cbf[i] = masked_mean(volumes[i], mask);
    } else if (!nf_cbf.empty()) {
      auto t = read_cbf_csv(nf_cbf);
      meta = std::move(t.meta);
      cbf = std::move(t.cbf);
    } else {
      throw Error(ErrorCode::Config, "normfit needs --manifest or --cbf-csv");
    }
    std::vector<int> ages;
    std::vector<Sex> sexes;
    for (const auto& m : meta) {
      ages.push_back(m.age);
      sexes.push_back(m.sex);
    }
    const NormativeTable table = fit_normative(cbf, ages, sexes, cfg.age_bins);
    ensure_dir(out);
    write_normative_outputs(out, table, meta, cbf);
    std::cout << "fit " << table.cells.size() << " normative cells from " << meta.size() << " participants\n";
    return 0;
  }

  if (*score_cmd) {
    const NormativeTable table = NormativeTable::from_json(read_text_file(sc_table));
    const CbfTable t = read_cbf_csv(sc_cbf);
    const auto results = score_cohort(t.meta, t.cbf, table, cfg.vrs_k, cfg.loocv);
    ensure_dir(out);
    write_text_file(out / "vrs.csv", vrs_to_csv(results));
    std::size_t at_risk = 0;
    for (const auto& r : results) at_risk += r.status == VrsStatus::AtRisk ? 1 : 0;
    std::cout << at_risk << " of " << results.size() << " participants AtRisk\n";
    return 0;
  }

  if (*pipeline) {
    const CohortManifest manifest = load_manifest(pl_manifest);
    PipelineOptions opt;
    if (!pl_mask.empty()) opt.mask_path = pl_mask;
    if (!pl_atlas.empty()) opt.atlas_path = pl_atlas;
    if (!pl_lut.empty()) opt.atlas_lut_path = pl_lut;
    if (opt.atlas_path && !opt.atlas_lut_path) throw Error(ErrorCode::Config, "--atlas requires --atlas-lut");
    const PipelineResult r = run_pipeline(manifest, cfg, opt);
    std::cout << "participants: " << manifest.size() << "\n";
    if (r.nan_replaced > 0) std::cout << "replaced " << r.nan_replaced << " non-finite voxels with 0\n";
    std::cout << "significant clusters: " << r.stats.significant_ids().size() << " of " << r.stats.n_tests << "\n";
    for (const auto& cv : r.cv) {
      std::cout << to_string(cv.kind) << " CV accuracy: " << format_double(cv.aggregate.accuracy) << "\n";
    }
    std::cout << "outputs in " << out.string() << "\n";
    return 0;
  }

  if (*plot) {
    const std::string svg = plot_csv(plot_input);
    fs::path target = out;
    if (target.extension() != ".svg") {
      ensure_dir(target);
      target /= stem_of(plot_input) + ".svg";
    } else if (target.has_parent_path()) {
      ensure_dir(target.parent_path());
    }
    write_text_file(target, svg);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
