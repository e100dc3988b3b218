#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <algorithm>

#include "CLI11.hpp"
#include "hm/distance.hpp"
#include "hm/errors.hpp"
#include "hm/features.hpp"
#include "hm/io.hpp"
#include "hm/region.hpp"
#include "hm/seg_metrics.hpp"
#include "hm/selection.hpp"
#include "hm/synth.hpp"
#include "json.hpp"

namespace hm::cli {

namespace fs = std::filesystem;

namespace {

// Bad invocation detected after flag parsing (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return "SchemaError";
  if (dynamic_cast<const MorphologyError*>(&e)) return "MorphologyError";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const SerializationError*>(&e)) return "SerializationError";
  if (dynamic_cast<const TaggingError*>(&e)) return "TaggingError";
  if (dynamic_cast<const NoTargetError*>(&e)) return "NoTargetError";
  if (dynamic_cast<const DistanceUndefined*>(&e)) return "DistanceUndefined";
  if (dynamic_cast<const ParameterError*>(&e)) return "ParameterError";
  if (dynamic_cast<const AssemblyError*>(&e)) return "AssemblyError";
  if (dynamic_cast<const StratificationError*>(&e)) return "StratificationError";
  if (dynamic_cast<const SelectionError*>(&e)) return "SelectionError";
  if (dynamic_cast<const TrainError*>(&e)) return "TrainError";
  if (dynamic_cast<const MetricError*>(&e)) return "MetricError";
  if (dynamic_cast<const GenerationError*>(&e)) return "GenerationError";
  if (dynamic_cast<const UsageError*>(&e)) return "UsageError";
  return "Error";
}

void report_error(std::ostream& err, const std::string& command, const std::exception& e) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["command"] = command;
  j["kind"] = error_kind(e);
  j["message"] = e.what();
  err << j.dump() << "\n";
}

struct Common {
  std::string out_path;
  std::optional<int> workers;
};

int resolve_worker_flag(const Common& c) {
  if (c.workers) return *c.workers;
  if (const char* env = std::getenv("HM_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0 || v > 4096) throw UsageError(std::string("HM_WORKERS must be a non-negative integer, got '") + env + "'");
    return static_cast<int>(v);
  }
  return 0;
}

void emit(const Common& c, std::ostream& out, std::string_view bytes) {
  if (c.out_path.empty() || c.out_path == "-")
    out << bytes;
  else
    write_file(c.out_path, bytes);
}

void add_common(CLI::App* sub, Common& c, bool with_workers = true) {
  sub->add_option("--out", c.out_path, "Output file (default: standard output)");
  if (with_workers)
    sub->add_option("--workers", c.workers, "Worker threads; 0 uses every core (env HM_WORKERS)")
        ->check(CLI::Range(0, 4096));
}

// --- features ---------------------------------------------------------------

struct FeaturesArgs {
  Common common;
  std::string cells, mask, mask_format, meta, registry;
  std::optional<double> mpp;
  std::optional<std::int64_t> downsample, width, height;
  std::optional<double> vicinity_um;
};

std::string run_features(const FeaturesArgs& a) {
  MetaFields fields;
  if (!a.meta.empty()) fields = parse_meta(read_file(a.meta));
  if (a.mpp) fields.microns_per_pixel = a.mpp;
  if (a.downsample) fields.mask_downsample = a.downsample;
  if (a.width) fields.width_px = a.width;
  if (a.height) fields.height_px = a.height;
  if (a.vicinity_um) fields.vicinity_um = a.vicinity_um;
  if (!fields.microns_per_pixel) throw UsageError("--mpp is required (flag or sidecar meta)");
  if (!fields.mask_downsample) throw UsageError("--downsample is required (flag or sidecar meta)");
  if (*fields.microns_per_pixel <= 0.0) throw UsageError("--mpp must be positive");
  if (*fields.mask_downsample < 1) throw UsageError("--downsample must be at least 1");

  const std::string mask_bytes = read_file(a.mask);
  std::string format = a.mask_format;
  if (format.empty()) format = mask_bytes.rfind("P5", 0) == 0 ? "pgm" : "rle";

  SlideMeta meta;
  meta.microns_per_pixel = *fields.microns_per_pixel;
  meta.mask_downsample = *fields.mask_downsample;
  TumorMask mask;
  if (format == "pgm") {
    mask = parse_mask_pgm(mask_bytes);
    meta.width_px = fields.width_px.value_or(mask.width * meta.mask_downsample);
    meta.height_px = fields.height_px.value_or(mask.height * meta.mask_downsample);
  } else {
    if (!fields.width_px || !fields.height_px)
      throw UsageError("an RLE mask needs --width and --height (flag or sidecar meta)");
    meta.width_px = *fields.width_px;
    meta.height_px = *fields.height_px;
    mask = parse_mask_rle(mask_bytes, meta.mask_width(), meta.mask_height());
  }
  meta.validate();

  const FeatureRegistry reg = a.registry.empty() ? default_registry() : parse_registry(read_file(a.registry));
  const int workers = resolve_worker_flag(a.common);
  AlignedSlide slide = align_slide(meta, parse_cells(read_file(a.cells)), std::move(mask), fields.vicinity_um.value_or(1000.0), workers);
  return write_feature_vector(extract_features(slide, reg, workers)) + "\n";
}

// --- select -----------------------------------------------------------------

struct SelectArgs {
  Common common;
  std::string cohort, method = "mrmr";
  std::size_t folds = 3;
  std::uint64_t seed = 0;
};

std::string run_select(const SelectArgs& a) {
  const SelectionMethod method = a.method == "mrmr" ? SelectionMethod::Mrmr : SelectionMethod::MannWhitney;
  const Cohort cohort = parse_cohort_csv(read_file(a.cohort));
  const SweepResult sweep = cv_sweep(cohort, a.folds, method, a.seed, resolve_worker_flag(a.common));
  std::vector<std::vector<std::string>> rankings;
  for (const auto& f : sweep.folds) rankings.push_back(f.ranked);
  const auto scores = aggregate_scores(rankings, sweep.n_best, cohort.feature_names);
  return write_selection_report(sweep, scores, method, a.folds, a.seed);
}

// --- metrics ----------------------------------------------------------------

struct MetricsArgs {
  Common common;
  std::string pred, gt, mode = "instances", aggregate = "image";
};

std::vector<std::string> list_pgm(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::string class_sidecar(const fs::path& pgm) {
  fs::path p = pgm;
  p.replace_extension(".json");
  return p.string();
}

std::string run_metrics(const MetricsArgs& a) {
  const fs::path pred(a.pred), gt(a.gt);
  const bool pred_dir = fs::is_directory(pred), gt_dir = fs::is_directory(gt);
  if (pred_dir != gt_dir) throw UsageError("--pred and --gt must both be files or both be directories");

  std::vector<std::pair<fs::path, fs::path>> files;
  if (pred_dir) {
    const auto pn = list_pgm(pred), gn = list_pgm(gt);
    if (pn.empty() || gn.empty()) throw UsageError("no .pgm files in " + (pn.empty() ? pred : gt).string());
    if (pn != gn)
      throw MetricError("prediction and ground-truth directories hold different files (" +
                        std::to_string(pn.size()) + " vs " + std::to_string(gn.size()) + ")");
    for (const auto& n : pn) files.emplace_back(pred / n, gt / n);
  } else {
    files.emplace_back(pred, gt);
  }

  const Aggregation agg = a.aggregate == "pooled" ? Aggregation::Pooled : Aggregation::Image;
  const int workers = resolve_worker_flag(a.common);
  if (a.mode == "semantic") {
    std::vector<MaskPair> pairs;
    for (const auto& [p, g] : files)
      pairs.push_back({p.filename().string(), parse_mask_pgm(read_file(p.string())), parse_mask_pgm(read_file(g.string()))});
    return write_report(evaluate_semantic(pairs, agg, workers));
  }
  std::vector<InstancePair> pairs;
  for (const auto& [p, g] : files)
    pairs.push_back({p.filename().string(),
                     parse_instance_map(read_file(p.string()), read_file(class_sidecar(p))),
                     parse_instance_map(read_file(g.string()), read_file(class_sidecar(g)))});
  return write_report(evaluate_instances(pairs, agg, workers));
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string config, out_dir, mask_format = "pgm";
  std::optional<std::uint64_t> seed;
};

std::string run_synth(const SynthArgs& a) {
  SynthConfig cfg = parse_synth_config(read_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const SynthSlide s = generate(cfg);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  write_file((dir / "cells.json").string(), serialize_cells(s.cells));
  const std::string mask_name = a.mask_format == "rle" ? "mask.rle" : "mask.pgm";
  write_file((dir / mask_name).string(), a.mask_format == "rle" ? write_mask_rle(s.mask) : write_mask_pgm(s.mask));
  write_file((dir / "meta.json").string(), write_meta(s.meta, cfg.vicinity_um) + "\n");
  write_file((dir / "truth.json").string(), write_truth(s.truth));
  nlohmann::ordered_json summary;
  summary["cells"] = (dir / "cells.json").string();
  summary["mask"] = (dir / mask_name).string();
  summary["meta"] = (dir / "meta.json").string();
  summary["truth"] = (dir / "truth.json").string();
  summary["n_cells"] = s.cells.size();
  summary["n_tumor_instances"] = s.truth.n_tumor_instances;
  return summary.dump() + "\n";
}

// --- overestimate -------------------------------------------------------------

struct OverestimateArgs {
  Common common;
  int n = 2;
  std::int64_t trials = 1000000;
  std::uint64_t seed = 0;
};

std::string run_overestimate(const OverestimateArgs& a) {
  const double p = estimate_overestimation_probability(a.n, a.trials, a.seed, resolve_worker_flag(a.common));
  nlohmann::ordered_json j;
  j["n"] = a.n;
  j["trials"] = a.trials;
  j["seed"] = a.seed;
  j["probability"] = p;
  return j.dump() + "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tissue feature extraction, feature selection and segmentation metrics", "hm"};
  app.set_version_flag("--version", "hm 1.0.0");
  app.require_subcommand(1);

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Extract the feature vector of one slide");
  features->add_option("--cells", fa.cells, "Cell JSON")->required()->check(CLI::ExistingFile);
  features->add_option("--mask", fa.mask, "Tumor mask (PGM or RLE text)")->required()->check(CLI::ExistingFile);
  features->add_option("--mask-format", fa.mask_format, "pgm or rle (default: detect)")
      ->check(CLI::IsMember({"pgm", "rle"}));
  features->add_option("--mpp", fa.mpp, "Microns per full-resolution pixel");
  features->add_option("--downsample", fa.downsample, "Mask downsample factor");
  features->add_option("--width", fa.width, "Slide width in pixels (default: mask width * downsample)");
  features->add_option("--height", fa.height, "Slide height in pixels (default: mask height * downsample)");
  features->add_option("--meta", fa.meta, "Sidecar meta JSON; flags take precedence")->check(CLI::ExistingFile);
  features->add_option("--registry", fa.registry, "Feature registry JSON")->check(CLI::ExistingFile);
  features->add_option("--vicinity-um", fa.vicinity_um, "Vicinity band width in microns (default 1000)")->check(CLI::PositiveNumber);
  add_common(features, fa.common);

  SelectArgs sa;
  auto* select = app.add_subcommand("select", "Cross-validated feature selection on a cohort CSV");
  select->add_option("cohort,--cohort", sa.cohort, "Cohort CSV")->required()->check(CLI::ExistingFile);
  select->add_option("--folds", sa.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  select->add_option("--method", sa.method, "mrmr or mannwhitney")->check(CLI::IsMember({"mrmr", "mannwhitney"}));
  select->add_option("--seed", sa.seed, "Fold shuffling seed");
  add_common(select, sa.common);

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "Segmentation metrics for a prediction/ground-truth pair or directories");
  metrics->add_option("--pred", ma.pred, "Prediction file or directory")->required()->check(CLI::ExistingPath);
  metrics->add_option("--gt", ma.gt, "Ground-truth file or directory")->required()->check(CLI::ExistingPath);
  metrics->add_option("--mode", ma.mode, "instances or semantic")->check(CLI::IsMember({"instances", "semantic"}));
  metrics->add_option("--aggregate", ma.aggregate, "image or pooled")->check(CLI::IsMember({"image", "pooled"}));
  add_common(metrics, ma.common);

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slide with ground truth");
  synth->add_option("config,--config", ya.config, "Synthetic slide config JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out-dir", ya.out_dir, "Directory for the generated files")->required();
  synth->add_option("--mask-format", ya.mask_format, "pgm or rle")->check(CLI::IsMember({"pgm", "rle"}));
  synth->add_option("--seed", ya.seed, "Override the config seed");

  OverestimateArgs oa;
  auto* over = app.add_subcommand("overestimate", "Monte Carlo overestimation probability of the rectangle search");
  over->add_option("n,--n", oa.n, "Points per trial")->required()->check(CLI::Range(1, 1000000));
  over->add_option("trials,--trials", oa.trials, "Trials (at least 1e5)")->check(CLI::Range(std::int64_t{100000}, std::int64_t{1} << 40));
  over->add_option("--seed", oa.seed, "Random seed");
  add_common(over, oa.common);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  if (argv.empty()) argv.push_back("hm");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*features) {
      emit(fa.common, out, run_features(fa));
    } else if (*select) {
      emit(sa.common, out, run_select(sa));
    } else if (*metrics) {
      emit(ma.common, out, run_metrics(ma));
    } else if (*synth) {
      out << run_synth(ya);
    } else if (*over) {
      emit(oa.common, out, run_overestimate(oa));
    }
  } catch (const UsageError& e) {
    report_error(err, command, e);
    return kExitUsage;
  } catch (const std::exception& e) {
    report_error(err, command, e);
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace hm::cli
