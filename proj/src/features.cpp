#include "hm/features.hpp"

#include <cmath>
#include <set>

#include "hm/errors.hpp"
#include "hm/morphology.hpp"
#include "json.hpp"

namespace hm {

namespace {

constexpr std::array<FeatureRegion, 4> kRegions = {FeatureRegion::Tumor, FeatureRegion::Vicinity,
                                                   FeatureRegion::Outside, FeatureRegion::WholeSlide};
constexpr std::array<Family, 5> kFamilies = {Family::Percentage, Family::Density, Family::Ratio, Family::Distance,
                                             Family::Morphology};
constexpr std::array<MorphStat, 4> kStats = {MorphStat::AreaMean, MorphStat::AreaStd, MorphStat::CircularityMean,
                                             MorphStat::CircularityStd};

bool in_region(const AlignedSlide& slide, std::size_t i, FeatureRegion region) {
  switch (region) {
    case FeatureRegion::Tumor: return slide.cell_region_tags[i] == RegionTag::Tumor;
    case FeatureRegion::Vicinity: return slide.cell_region_tags[i] == RegionTag::Vicinity;
    case FeatureRegion::Outside: return slide.cell_region_tags[i] == RegionTag::Outside;
    case FeatureRegion::WholeSlide: return true;
  }
  return false;
}

template <typename T, std::size_t N>
T lookup(const std::array<T, N>& values, std::string_view name, std::string_view (*namer)(T), const char* what) {
  for (T v : values)
    if (namer(v) == name) return v;
  throw ParseError(std::string("unknown ") + what + " '" + std::string(name) + "'");
}

CellClass class_param(const nlohmann::json& params, const char* key) {
  if (!params.contains(key) || !params[key].is_string())
    throw ParseError(std::string("registry entry missing class parameter '") + key + "'");
  auto c = class_from_name(params[key].get<std::string>());
  if (!c) throw ParseError("unknown class '" + params[key].get<std::string>() + "'");
  return *c;
}

}  // namespace

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Percentage: return "percentage";
    case Family::Density: return "density";
    case Family::Ratio: return "ratio";
    case Family::Distance: return "distance";
    case Family::Morphology: return "morphology";
  }
  return "?";
}

std::string_view feature_region_name(FeatureRegion r) {
  switch (r) {
    case FeatureRegion::Tumor: return "tumor";
    case FeatureRegion::Vicinity: return "vicinity";
    case FeatureRegion::Outside: return "outside";
    case FeatureRegion::WholeSlide: return "whole_slide";
  }
  return "?";
}

std::string_view morph_stat_name(MorphStat s) {
  switch (s) {
    case MorphStat::AreaMean: return "area_mean";
    case MorphStat::AreaStd: return "area_std";
    case MorphStat::CircularityMean: return "circularity_mean";
    case MorphStat::CircularityStd: return "circularity_std";
  }
  return "?";
}

std::vector<std::string> FeatureRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& d : defs) out.push_back(d.name);
  return out;
}

std::vector<std::string> FeatureRegistry::analysis_names() const {
  std::vector<std::string> out;
  for (const auto& d : defs)
    if (d.analysis) out.push_back(d.name);
  return out;
}

void FeatureRegistry::validate() const {
  std::set<std::string> seen;
  for (const auto& d : defs) {
    if (d.name.empty()) throw AssemblyError("registry feature with empty name");
    if (!seen.insert(d.name).second) throw AssemblyError("duplicate registry feature '" + d.name + "'");
    if (d.family == Family::Distance && d.cls == d.cls_b)
      throw AssemblyError("distance feature '" + d.name + "' has identical source and target");
  }
}

FeatureRegistry default_registry(const RegistryOptions& opts) {
  FeatureRegistry reg;
  const std::array<FeatureRegion, 3> main_regions = {FeatureRegion::Tumor, FeatureRegion::Vicinity,
                                                     FeatureRegion::WholeSlide};
  auto cname = [](CellClass c) { return std::string(class_name(c)); };
  auto rname = [](FeatureRegion r) { return std::string(feature_region_name(r)); };

  for (FeatureRegion r : main_regions)
    for (CellClass c : kAllClasses) {
      FeatureDef d;
      d.name = "pct." + rname(r) + "." + cname(c);
      d.family = Family::Percentage;
      d.region = r;
      d.cls = c;
      reg.defs.push_back(d);
    }
  // Repartition of each class across tumor / margin / outside.
  for (FeatureRegion r : {FeatureRegion::Tumor, FeatureRegion::Vicinity, FeatureRegion::Outside})
    for (CellClass c : kAllClasses) {
      FeatureDef d;
      d.name = "share." + rname(r) + "." + cname(c);
      d.family = Family::Percentage;
      d.region = r;
      d.cls = c;
      d.of_class = true;
      reg.defs.push_back(d);
    }
  for (FeatureRegion r : main_regions)
    for (CellClass c : kAllClasses) {
      FeatureDef d;
      d.name = "density." + rname(r) + "." + cname(c);
      d.family = Family::Density;
      d.region = r;
      d.cls = c;
      reg.defs.push_back(d);
    }
  for (FeatureRegion r : main_regions)
    for (std::size_t a = 0; a < kNumClasses; ++a)
      for (std::size_t b = a + 1; b < kNumClasses; ++b) {
        FeatureDef d;
        d.name = "ratio." + rname(r) + "." + cname(kAllClasses[a]) + "_" + cname(kAllClasses[b]);
        d.family = Family::Ratio;
        d.region = r;
        d.cls = kAllClasses[a];
        d.cls_b = kAllClasses[b];
        reg.defs.push_back(d);
      }
  auto add_distance = [&](CellClass s, CellClass t, bool microns) {
    FeatureDef d;
    d.name = "dist.tumor." + cname(s) + "_to_" + cname(t) + (microns ? "_um" : "");
    d.family = Family::Distance;
    d.region = FeatureRegion::Tumor;
    d.cls = s;
    d.cls_b = t;
    d.microns = microns;
    reg.defs.push_back(d);
  };
  for (bool microns : {false, true}) {
    if (microns && !opts.distance_microns) continue;
    for (std::size_t a = 0; a < kDistanceClasses.size(); ++a)
      for (std::size_t b = a + 1; b < kDistanceClasses.size(); ++b) {
        add_distance(kDistanceClasses[a], kDistanceClasses[b], microns);
        if (opts.both_directions) add_distance(kDistanceClasses[b], kDistanceClasses[a], microns);
      }
  }
  for (FeatureRegion r : main_regions)
    for (CellClass c : kAllClasses)
      for (MorphStat s : kStats) {
        FeatureDef d;
        d.name = "morph." + rname(r) + "." + cname(c) + "." + std::string(morph_stat_name(s));
        d.family = Family::Morphology;
        d.region = r;
        d.cls = c;
        d.stat = s;
        d.analysis = false;
        reg.defs.push_back(d);
      }
  return reg;
}

std::string write_registry(const FeatureRegistry& reg) {
  nlohmann::ordered_json defs = nlohmann::ordered_json::array();
  for (const auto& d : reg.defs) {
    nlohmann::ordered_json e;
    e["name"] = d.name;
    e["family"] = family_name(d.family);
    e["region"] = feature_region_name(d.region);
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    switch (d.family) {
      case Family::Percentage:
        p["class"] = class_name(d.cls);
        p["of"] = d.of_class ? "class" : "region";
        break;
      case Family::Density: p["class"] = class_name(d.cls); break;
      case Family::Ratio:
        p["class_a"] = class_name(d.cls);
        p["class_b"] = class_name(d.cls_b);
        p["log_base"] = 10;
        p["epsilon"] = kRatioEpsilon;
        break;
      case Family::Distance:
        p["source"] = class_name(d.cls);
        p["target"] = class_name(d.cls_b);
        p["unit"] = d.microns ? "um" : "px";
        break;
      case Family::Morphology:
        p["class"] = class_name(d.cls);
        p["stat"] = morph_stat_name(d.stat);
        break;
    }
    e["params"] = std::move(p);
    e["analysis"] = d.analysis;
    defs.push_back(std::move(e));
  }
  nlohmann::ordered_json doc;
  doc["schema"] = reg.schema;
  doc["features"] = std::move(defs);
  return doc.dump(1);
}

FeatureRegistry parse_registry(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed registry JSON: ") + e.what());
  }
  FeatureRegistry reg;
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (doc.contains("schema") && doc["schema"].is_string()) reg.schema = doc["schema"].get<std::string>();
    if (!doc.contains("features")) throw ParseError("registry object needs a 'features' list");
    list = &doc["features"];
  }
  if (!list->is_array()) throw ParseError("registry must be a JSON list of feature definitions");
  try {
    for (const auto& e : *list) {
      FeatureDef d;
      d.name = e.at("name").get<std::string>();
      d.family = lookup(kFamilies, e.at("family").get<std::string>(), family_name, "family");
      d.region = lookup(kRegions, e.at("region").get<std::string>(), feature_region_name, "region");
      const nlohmann::json params = e.contains("params") ? e["params"] : nlohmann::json::object();
      switch (d.family) {
        case Family::Percentage:
          d.cls = class_param(params, "class");
          d.of_class = params.value("of", std::string("region")) == "class";
          break;
        case Family::Density: d.cls = class_param(params, "class"); break;
        case Family::Ratio:
          d.cls = class_param(params, "class_a");
          d.cls_b = class_param(params, "class_b");
          break;
        case Family::Distance:
          d.cls = class_param(params, "source");
          d.cls_b = class_param(params, "target");
          d.microns = params.value("unit", std::string("px")) == "um";
          break;
        case Family::Morphology:
          d.cls = class_param(params, "class");
          d.stat = lookup(kStats, params.at("stat").get<std::string>(), morph_stat_name, "morphology stat");
          break;
      }
      d.analysis = e.value("analysis", d.family != Family::Morphology);
      reg.defs.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid registry entry: ") + e.what());
  }
  reg.validate();
  return reg;
}

// --- families --------------------------------------------------------------

ClassCounts count_cells(const AlignedSlide& slide, FeatureRegion region) {
  ClassCounts counts{};
  for (std::size_t i = 0; i < slide.cells.size(); ++i)
    if (in_region(slide, i, region)) ++counts[index_of(slide.cells[i].cls)];
  return counts;
}

std::int64_t region_pixel_count(const AlignedSlide& slide, FeatureRegion region) {
  const std::int64_t all = slide.tumor_mask.width * slide.tumor_mask.height;
  const std::int64_t tumor = slide.tumor_mask.count();
  const std::int64_t vic = slide.vicinity_mask.count();
  switch (region) {
    case FeatureRegion::Tumor: return tumor;
    case FeatureRegion::Vicinity: return vic;
    case FeatureRegion::Outside: return all - tumor - vic;
    case FeatureRegion::WholeSlide: return all;
  }
  return 0;
}

ClassValues class_percentages(const AlignedSlide& slide, FeatureRegion region) {
  const ClassCounts counts = count_cells(slide, region);
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  ClassValues out{};
  if (total == 0) return out;
  for (std::size_t k = 0; k < kNumClasses; ++k)
    out[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return out;
}

ClassValues class_shares(const AlignedSlide& slide, FeatureRegion region) {
  const ClassCounts part = count_cells(slide, region);
  const ClassCounts whole = count_cells(slide, FeatureRegion::WholeSlide);
  ClassValues out{};
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (whole[k] > 0) out[k] = static_cast<double>(part[k]) / static_cast<double>(whole[k]);
  return out;
}

ClassValues class_densities(const AlignedSlide& slide, FeatureRegion region) {
  const std::int64_t pixels = region_pixel_count(slide, region);
  ClassValues out{};
  if (pixels == 0) return out;
  const double pitch_um = slide.meta.microns_per_pixel * static_cast<double>(slide.meta.mask_downsample);
  const double area_mm2 = static_cast<double>(pixels) * (pitch_um * pitch_um) * 1e-6;
  const ClassCounts counts = count_cells(slide, region);
  for (std::size_t k = 0; k < kNumClasses; ++k) out[k] = static_cast<double>(counts[k]) / area_mm2;
  return out;
}

std::optional<double> class_ratio(std::int64_t n_a, std::int64_t n_b) {
  if (n_a < 0 || n_b < 0) throw ParameterError("cell counts must be non-negative");
  if (n_a == 0 || n_b == 0) return std::nullopt;
  return (std::log10(static_cast<double>(n_a)) + kRatioEpsilon) / (std::log10(static_cast<double>(n_b)) + kRatioEpsilon);
}

std::array<MorphStats, kNumClasses> morphology_stats(const AlignedSlide& slide, FeatureRegion region) {
  std::array<std::vector<Morphology>, kNumClasses> samples;
  for (std::size_t i = 0; i < slide.cells.size(); ++i) {
    const CellRecord& c = slide.cells[i];
    if (!c.contour || !in_region(slide, i, region)) continue;
    samples[index_of(c.cls)].push_back(morphology(*c.contour));
  }
  std::array<MorphStats, kNumClasses> out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const auto& s = samples[k];
    if (s.empty()) continue;
    const double n = static_cast<double>(s.size());
    double area = 0, circ = 0;
    for (const auto& m : s) {
      area += m.area;
      circ += m.circularity;
    }
    const double area_mean = area / n, circ_mean = circ / n;
    double area_var = 0, circ_var = 0;
    for (const auto& m : s) {
      area_var += (m.area - area_mean) * (m.area - area_mean);
      circ_var += (m.circularity - circ_mean) * (m.circularity - circ_mean);
    }
    out[k] = {area_mean, std::sqrt(area_var / n), circ_mean, std::sqrt(circ_var / n)};
  }
  return out;
}

DistanceTable compute_distances(const AlignedSlide& slide, const FeatureRegistry& reg, double f, int workers) {
  DistanceTable table;
  for (const auto& d : reg.defs) {
    if (d.family != Family::Distance) continue;
    const DistanceKey key{d.cls, d.cls_b};
    if (table.contains(key)) continue;
    try {
      table[key] = mean_closest_distance(slide, {d.cls, d.cls_b, f}, workers);
    } catch (const DistanceUndefined&) {
      table[key] = std::nullopt;
    }
  }
  return table;
}

FeatureVector assemble(const AlignedSlide& slide, const FeatureRegistry& reg, const DistanceTable& distances) {
  reg.validate();
  std::map<FeatureRegion, ClassCounts> counts;
  std::map<FeatureRegion, ClassValues> pct, share, density;
  std::map<FeatureRegion, std::array<MorphStats, kNumClasses>> morph;
  auto cached = [&](auto& cache, FeatureRegion r, auto compute) -> const auto& {
    auto it = cache.find(r);
    if (it == cache.end()) it = cache.emplace(r, compute(slide, r)).first;
    return it->second;
  };

  FeatureVector fv;
  fv.schema = reg.schema;
  fv.values.reserve(reg.defs.size());
  for (const FeatureDef& d : reg.defs) {
    std::optional<double> v;
    const std::size_t k = index_of(d.cls);
    switch (d.family) {
      case Family::Percentage:
        v = d.of_class ? cached(share, d.region, class_shares)[k] : cached(pct, d.region, class_percentages)[k];
        break;
      case Family::Density: v = cached(density, d.region, class_densities)[k]; break;
      case Family::Ratio: {
        const ClassCounts& c = cached(counts, d.region, count_cells);
        v = class_ratio(c[k], c[index_of(d.cls_b)]);
        break;
      }
      case Family::Distance: {
        auto it = distances.find({d.cls, d.cls_b});
        if (it == distances.end()) throw AssemblyError("no distance result for feature '" + d.name + "'");
        if (it->second) v = it->second->mean_distance * (d.microns ? slide.meta.microns_per_pixel : 1.0);
        break;
      }
      case Family::Morphology: {
        const MorphStats& m = cached(morph, d.region, morphology_stats)[k];
        switch (d.stat) {
          case MorphStat::AreaMean: v = m.area_mean; break;
          case MorphStat::AreaStd: v = m.area_std; break;
          case MorphStat::CircularityMean: v = m.circularity_mean; break;
          case MorphStat::CircularityStd: v = m.circularity_std; break;
        }
        break;
      }
    }
    fv.values.emplace_back(d.name, v);
  }

  for (const auto& [region, values] : pct) {
    if (!values[0]) continue;
    double sum = 0;
    for (const auto& v : values) sum += *v;
    if (std::abs(sum - 1.0) > 1e-9) throw AssemblyError("percentages in a region do not sum to one");
  }
  return fv;
}

FeatureVector extract_features(const AlignedSlide& slide, const FeatureRegistry& reg, int workers) {
  return assemble(slide, reg, compute_distances(slide, reg, kDefaultGrowth, workers));
}

}  // namespace hm
