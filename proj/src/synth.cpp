#include "hm/synth.hpp"

#include <cmath>
#include <numbers>

#include "hm/errors.hpp"
#include "hm/io.hpp"
#include "hm/region.hpp"
#include "hm/rng.hpp"
#include "json.hpp"

namespace hm {

namespace {

constexpr std::int64_t kAttemptsPerCell = 20000;

struct Canvas {
  const SlideMeta& meta;
  const TumorMask& mask;
  const VicinityMask& vic;
  const std::vector<std::int32_t>& blob_of;  // -1 outside every blob

  std::int64_t pixel(const Point& p) const {
    const auto ds = static_cast<double>(meta.mask_downsample);
    return static_cast<std::int64_t>(std::floor(p.y / ds)) * mask.width + static_cast<std::int64_t>(std::floor(p.x / ds));
  }
  RegionTag region(const Point& p) const {
    const auto i = static_cast<std::size_t>(pixel(p));
    if (mask.bits[i]) return RegionTag::Tumor;
    return vic.bits[i] ? RegionTag::Vicinity : RegionTag::Outside;
  }
  bool inside_slide(const Point& p) const {
    return p.x >= 0 && p.y >= 0 && p.x < static_cast<double>(meta.width_px) && p.y < static_cast<double>(meta.height_px);
  }
};

Polygon make_contour(ContourTemplate t, const Point& c, double r) {
  Polygon poly;
  if (t == ContourTemplate::Circle) {
    constexpr int kVertices = 16;
    for (int k = 0; k < kVertices; ++k) {
      const double a = 2.0 * std::numbers::pi * k / kVertices;
      poly.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
  } else if (t == ContourTemplate::Square) {
    poly = {{c.x - r, c.y - r}, {c.x + r, c.y - r}, {c.x + r, c.y + r}, {c.x - r, c.y + r}};
  }
  return poly;
}

ClassCounts region_counts(const GroundTruth& t, FeatureRegion r) {
  switch (r) {
    case FeatureRegion::Tumor: return t.counts[0];
    case FeatureRegion::Vicinity: return t.counts[1];
    case FeatureRegion::Outside: return t.counts[2];
    case FeatureRegion::WholeSlide: {
      ClassCounts all{};
      for (const auto& c : t.counts)
        for (std::size_t k = 0; k < kNumClasses; ++k) all[k] += c[k];
      return all;
    }
  }
  return {};
}

std::int64_t region_pixels(const GroundTruth& t, FeatureRegion r) {
  switch (r) {
    case FeatureRegion::Tumor: return t.tumor_pixels;
    case FeatureRegion::Vicinity: return t.vicinity_pixels;
    case FeatureRegion::Outside: return t.total_pixels - t.tumor_pixels - t.vicinity_pixels;
    case FeatureRegion::WholeSlide: return t.total_pixels;
  }
  return 0;
}

void expected_features(GroundTruth& t, const SlideMeta& meta) {
  const FeatureRegistry reg = default_registry();
  const double pitch = meta.microns_per_pixel * static_cast<double>(meta.mask_downsample);
  for (const FeatureDef& d : reg.defs) {
    const ClassCounts c = region_counts(t, d.region);
    const std::int64_t n = c[index_of(d.cls)];
    std::int64_t total = 0;
    for (auto v : c) total += v;
    std::optional<double> v;
    switch (d.family) {
      case Family::Percentage:
        if (d.of_class) {
          const std::int64_t whole = region_counts(t, FeatureRegion::WholeSlide)[index_of(d.cls)];
          if (whole > 0) v = static_cast<double>(n) / static_cast<double>(whole);
        } else if (total > 0) {
          v = static_cast<double>(n) / static_cast<double>(total);
        }
        break;
      case Family::Density:
        if (const auto px = region_pixels(t, d.region); px > 0)
          v = static_cast<double>(n) / (static_cast<double>(px) * pitch * pitch * 1e-6);
        break;
      case Family::Ratio: {
        const std::int64_t m = c[index_of(d.cls_b)];
        if (n > 0 && m > 0) v = (std::log10(static_cast<double>(n)) + 1e-3) / (std::log10(static_cast<double>(m)) + 1e-3);
        break;
      }
      default: continue;
    }
    t.features.values.emplace_back(d.name, v);
  }
}

}  // namespace

SynthSlide generate(const SynthConfig& cfg) {
  cfg.meta.validate();
  const SlideMeta& meta = cfg.meta;
  const std::int64_t mw = meta.mask_width(), mh = meta.mask_height();
  const auto ds = static_cast<double>(meta.mask_downsample);

  for (const BlobSpec& b : cfg.blobs)
    if (!(b.rx > 0 && b.ry > 0) || b.cx - b.rx < 0 || b.cy - b.ry < 0 ||
        b.cx + b.rx > static_cast<double>(meta.width_px) || b.cy + b.ry > static_cast<double>(meta.height_px))
      throw GenerationError("tumor blob exceeds slide bounds");
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (cfg.counts[r][k] < 0) throw GenerationError("planted counts must be non-negative");
  for (const auto& counts : cfg.counts)
    if (counts[index_of(CellClass::Epithelial)] != 0)
      throw GenerationError("epithelial cells cannot be planted; plant tumor cells outside tumors instead");

  SynthSlide out;
  out.meta = meta;
  out.mask = TumorMask(mw, mh);
  std::vector<std::int32_t> blob_of(static_cast<std::size_t>(mw * mh), -1);
  for (std::int64_t y = 0; y < mh; ++y)
    for (std::int64_t x = 0; x < mw; ++x) {
      const double px = (static_cast<double>(x) + 0.5) * ds, py = (static_cast<double>(y) + 0.5) * ds;
      for (std::size_t b = 0; b < cfg.blobs.size(); ++b) {
        const BlobSpec& e = cfg.blobs[b];
        const double u = (px - e.cx) / e.rx, v = (py - e.cy) / e.ry;
        if (u * u + v * v <= 1.0) {
          out.mask.set(x, y, true);
          blob_of[static_cast<std::size_t>(y * mw + x)] = static_cast<std::int32_t>(b);
          break;
        }
      }
    }

  const VicinityMask vic = vicinity(out.mask, meta, cfg.vicinity_um, 1);
  const Canvas canvas{meta, out.mask, vic, blob_of};
  GroundTruth& truth = out.truth;
  truth.tumor_pixels = out.mask.count();
  truth.vicinity_pixels = vic.count();
  truth.total_pixels = mw * mh;
  truth.n_tumor_instances = static_cast<std::int64_t>(label_tumor_instances(out.mask, meta).instances.size());

  Engine eng = make_engine(cfg.seed);
  std::int64_t next_id = 1;
  auto add_cell = [&](CellClass cls, const Point& p) {
    CellRecord c;
    c.id = next_id++;
    c.centroid = p;
    c.cls = cls;
    if (cfg.contour != ContourTemplate::None) c.contour = make_contour(cfg.contour, p, cfg.contour_radius);
    const RegionTag r = canvas.region(p);
    const CellClass refined = cls == CellClass::Tumor && r != RegionTag::Tumor ? CellClass::Epithelial : cls;
    ++truth.counts[static_cast<std::size_t>(r)][index_of(refined)];
    out.cells.push_back(std::move(c));
  };
  auto random_point = [&]() {
    return Point{uniform(eng, 0.0, static_cast<double>(meta.width_px)), uniform(eng, 0.0, static_cast<double>(meta.height_px))};
  };

  // Fixtures first, so their separation constraints see only each other.
  if (!cfg.fixtures.empty()) {
    if (truth.n_tumor_instances != static_cast<std::int64_t>(cfg.blobs.size()))
      throw GenerationError("distance fixtures need pairwise separated blobs");
    std::map<CellClass, std::pair<CellClass, CellClass>> pair_of_class;
    for (const FixtureSpec& fx : cfg.fixtures) {
      if (fx.blob >= cfg.blobs.size()) throw GenerationError("fixture refers to a missing blob");
      if (fx.source == fx.target || fx.source == CellClass::Epithelial || fx.target == CellClass::Epithelial)
        throw GenerationError("invalid fixture classes");
      for (CellClass c : {fx.source, fx.target}) {
        auto [it, fresh] = pair_of_class.emplace(c, std::pair{fx.source, fx.target});
        if (!fresh && it->second != std::pair{fx.source, fx.target})
          throw GenerationError("a class may belong to only one fixture pair");
        if (cfg.counts[0][index_of(c)] != 0)
          throw GenerationError("fixture classes cannot also be planted at random inside tumors");
      }
    }

    struct Planted {
      std::size_t blob;
      CellClass source, target;
      Point s, t;
    };
    std::vector<Planted> planted;
    std::map<std::pair<CellClass, CellClass>, std::pair<double, std::int64_t>> sums;
    for (const FixtureSpec& fx : cfg.fixtures) {
      for (const Point& off : fx.offsets) {
        const double d = std::sqrt(off.x * off.x + off.y * off.y);
        if (!(d > 0)) throw GenerationError("fixture offset must be non-zero");
        bool placed = false;
        for (std::int64_t attempt = 0; attempt < kAttemptsPerCell && !placed; ++attempt) {
          // Pixel-centre sources keep t - s equal to the offset bit for bit.
          const Point r = random_point();
          const Point s{std::floor(r.x) + 0.5, std::floor(r.y) + 0.5};
          const Point t{s.x + off.x, s.y + off.y};
          if (!canvas.inside_slide(t)) continue;
          const auto bs = blob_of[static_cast<std::size_t>(canvas.pixel(s))];
          const auto bt = blob_of[static_cast<std::size_t>(canvas.pixel(t))];
          if (bs != static_cast<std::int32_t>(fx.blob) || bt != bs) continue;
          // The new target must not undercut any source of the same pair in
          // this blob, and the new source's partner must be its strict nearest.
          bool ok = true;
          for (const Planted& p : planted) {
            if (p.blob != fx.blob || p.source != fx.source) continue;
            const double dd = std::hypot(p.s.x - p.t.x, p.s.y - p.t.y);
            if (std::hypot(p.s.x - t.x, p.s.y - t.y) <= dd || std::hypot(s.x - p.t.x, s.y - p.t.y) <= d) {
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          planted.push_back({fx.blob, fx.source, fx.target, s, t});
          placed = true;
        }
        if (!placed) throw GenerationError("could not place distance fixture");
        auto& acc = sums[{fx.source, fx.target}];
        acc.first += d;
        ++acc.second;
      }
    }
    for (const Planted& p : planted) {
      add_cell(p.source, p.s);
      add_cell(p.target, p.t);
    }
    for (const auto& [key, acc] : sums) truth.fixture_distances[key] = acc.first / static_cast<double>(acc.second);
  }

  for (std::size_t r = 0; r < 3; ++r) {
    const auto tag = static_cast<RegionTag>(r);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      for (std::int64_t n = 0; n < cfg.counts[r][k]; ++n) {
        bool placed = false;
        for (std::int64_t attempt = 0; attempt < kAttemptsPerCell; ++attempt) {
          const Point p = random_point();
          if (canvas.region(p) == tag) {
            add_cell(kAllClasses[k], p);
            placed = true;
            break;
          }
        }
        if (!placed)
          throw GenerationError("region '" + std::string(region_name(tag)) + "' too small for planted " +
                                std::string(class_name(kAllClasses[k])) + " cells");
      }
    }
  }

  expected_features(truth, meta);
  return out;
}

// --- config / truth I/O ------------------------------------------------------

namespace {
constexpr std::array<RegionTag, 3> kTags = {RegionTag::Tumor, RegionTag::Vicinity, RegionTag::Outside};
}

SynthConfig parse_synth_config(std::string_view bytes) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed synth config: ") + e.what());
  }
  SynthConfig c;
  try {
    c.meta.width_px = doc.at("width_px").get<std::int64_t>();
    c.meta.height_px = doc.at("height_px").get<std::int64_t>();
    c.meta.microns_per_pixel = doc.at("microns_per_pixel").get<double>();
    c.meta.mask_downsample = doc.value("mask_downsample", std::int64_t{32});
    c.vicinity_um = doc.value("vicinity_um", 1000.0);
    c.seed = doc.value("seed", std::uint64_t{0});
    for (const auto& b : doc.value("blobs", json::array()))
      c.blobs.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("rx").get<double>(), b.at("ry").get<double>()});
    const json counts = doc.value("counts", json::object());
    for (std::size_t r = 0; r < 3; ++r) {
      const std::string rn(region_name(kTags[r]));
      if (!counts.contains(rn)) continue;
      for (const auto& [cls, n] : counts[rn].items()) {
        auto k = class_from_name(cls);
        if (!k) throw ParseError("unknown class '" + cls + "' in synth counts");
        c.counts[r][index_of(*k)] = n.get<std::int64_t>();
      }
    }
    const std::string contour = doc.value("contour", std::string("none"));
    c.contour = contour == "circle" ? ContourTemplate::Circle
                : contour == "square" ? ContourTemplate::Square
                : contour == "none" ? ContourTemplate::None
                                    : throw ParseError("unknown contour template '" + contour + "'");
    c.contour_radius = doc.value("contour_radius", 4.0);
    for (const auto& f : doc.value("distance_fixtures", json::array())) {
      FixtureSpec fx;
      fx.blob = f.at("blob").get<std::size_t>();
      auto s = class_from_name(f.at("source").get<std::string>());
      auto t = class_from_name(f.at("target").get<std::string>());
      if (!s || !t) throw ParseError("unknown fixture class");
      fx.source = *s;
      fx.target = *t;
      for (const auto& o : f.at("offsets")) fx.offsets.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
      c.fixtures.push_back(std::move(fx));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid synth config: ") + e.what());
  }
  return c;
}

std::string write_synth_config(const SynthConfig& c) {
  nlohmann::ordered_json doc;
  doc["width_px"] = c.meta.width_px;
  doc["height_px"] = c.meta.height_px;
  doc["microns_per_pixel"] = c.meta.microns_per_pixel;
  doc["mask_downsample"] = c.meta.mask_downsample;
  doc["vicinity_um"] = c.vicinity_um;
  doc["seed"] = c.seed;
  doc["blobs"] = nlohmann::ordered_json::array();
  for (const auto& b : c.blobs) doc["blobs"].push_back({{"cx", b.cx}, {"cy", b.cy}, {"rx", b.rx}, {"ry", b.ry}});
  doc["counts"] = nlohmann::ordered_json::object();
  for (std::size_t r = 0; r < 3; ++r) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (c.counts[r][k] != 0) m[std::string(class_name(kAllClasses[k]))] = c.counts[r][k];
    doc["counts"][std::string(region_name(kTags[r]))] = std::move(m);
  }
  doc["contour"] = c.contour == ContourTemplate::Circle ? "circle" : c.contour == ContourTemplate::Square ? "square" : "none";
  doc["contour_radius"] = c.contour_radius;
  doc["distance_fixtures"] = nlohmann::ordered_json::array();
  for (const auto& fx : c.fixtures) {
    nlohmann::ordered_json f;
    f["blob"] = fx.blob;
    f["source"] = class_name(fx.source);
    f["target"] = class_name(fx.target);
    f["offsets"] = nlohmann::ordered_json::array();
    for (const auto& o : fx.offsets) f["offsets"].push_back({o.x, o.y});
    doc["distance_fixtures"].push_back(std::move(f));
  }
  return doc.dump(1);
}

std::string write_truth(const GroundTruth& t) {
  std::string out = "{\"counts\":{";
  for (std::size_t r = 0; r < 3; ++r) {
    if (r) out += ",";
    out += json_escape(region_name(kTags[r])) + ":{";
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (k) out += ",";
      out += json_escape(class_name(kAllClasses[k])) + ":" + std::to_string(t.counts[r][k]);
    }
    out += "}";
  }
  out += "},\"tumor_pixels\":" + std::to_string(t.tumor_pixels) + ",\"vicinity_pixels\":" +
         std::to_string(t.vicinity_pixels) + ",\"total_pixels\":" + std::to_string(t.total_pixels) +
         ",\"n_tumor_instances\":" + std::to_string(t.n_tumor_instances) + ",\"distances\":{";
  bool first = true;
  for (const auto& [key, d] : t.fixture_distances) {
    if (!first) out += ",";
    first = false;
    out += json_escape(std::string(class_name(key.first)) + "_to_" + std::string(class_name(key.second))) + ":" +
           format_double(d);
  }
  out += "},\"features\":";
  out += write_feature_vector(t.features);
  out += "}";
  return out;
}

}  // namespace hm
