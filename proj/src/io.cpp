#include "hm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hm/errors.hpp"
#include "hm/morphology.hpp"
#include "json.hpp"

namespace hm {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::int64_t parse_id(const std::string& key) {
  std::int64_t id = 0;
  const char* end = key.data() + key.size();
  auto [ptr, ec] = std::from_chars(key.data(), end, id);
  if (ec != std::errc() || ptr != end || key.empty()) throw SchemaError("nucleus id is not an integer: '" + key + "'");
  return id;
}

Point parse_point(const json& j, std::int64_t id, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw SchemaError(std::string(what) + " must be a [x, y] number pair", id);
  Point p{j[0].get<double>(), j[1].get<double>()};
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw SchemaError(std::string(what) + " is not finite", id);
  return p;
}

CellRecord parse_cell(std::int64_t id, const json& j) {
  if (!j.is_object()) throw SchemaError("nucleus entry must be an object", id);
  CellRecord c;
  c.id = id;

  auto centroid = j.find("centroid");
  if (centroid == j.end()) throw SchemaError("missing centroid", id);
  c.centroid = parse_point(*centroid, id, "centroid");
  if (c.centroid.x < 0.0 || c.centroid.y < 0.0) throw SchemaError("negative centroid", id);

  auto type = j.find("type");
  if (type == j.end() || !type->is_number_integer()) throw SchemaError("missing or non-integer type", id);
  const auto code = type->get<std::int64_t>();
  auto cls = code >= 1 && code <= 5 ? class_from_code(static_cast<int>(code)) : std::nullopt;
  if (!cls) throw SchemaError("unknown class code " + std::to_string(code), id);
  c.cls = *cls;

  if (auto contour = j.find("contour"); contour != j.end() && !contour->is_null()) {
    if (!contour->is_array()) throw SchemaError("contour must be an array", id);
    Polygon poly;
    poly.reserve(contour->size());
    for (const auto& v : *contour) poly.push_back(parse_point(v, id, "contour vertex"));
    if (poly.size() < 3) throw SchemaError("contour needs at least 3 vertices", id);
    poly = normalize_orientation(std::move(poly));
    if (!(polygon_signed_area(poly) > 0.0)) throw SchemaError("contour has zero area", id);
    c.contour = std::move(poly);
  }

  if (auto prob = j.find("type_prob"); prob != j.end() && !prob->is_null()) {
    if (!prob->is_number()) throw SchemaError("type_prob must be a number", id);
    const double p = prob->get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw SchemaError("type_prob outside [0, 1]", id);
    c.class_confidence = p;
  }
  return c;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::int64_t parse_int(std::string_view s, const char* what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(std::string("invalid integer in ") + what + ": '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<CellRecord> parse_cells(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed cell JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("nuc") && doc["nuc"].is_object()) doc = doc["nuc"];
  if (!doc.is_object()) throw SchemaError("cell document must be a JSON object keyed by nucleus id");

  std::vector<CellRecord> cells;
  cells.reserve(doc.size());
  try {
    for (const auto& [key, value] : doc.items()) cells.push_back(parse_cell(parse_id(key), value));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid cell entry: ") + e.what());
  }
  std::sort(cells.begin(), cells.end(), [](const CellRecord& a, const CellRecord& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].id == cells[i - 1].id) throw SchemaError("duplicate nucleus id", cells[i].id);
  return cells;
}

std::string serialize_cells(const std::vector<CellRecord>& cells) {
  std::vector<const CellRecord*> order;
  order.reserve(cells.size());
  for (const auto& c : cells) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  ordered_json doc = ordered_json::object();
  for (const CellRecord* c : order) {
    if (c->cls == CellClass::Epithelial)
      throw SerializationError("epithelial cells have no ingestion code (id=" + std::to_string(c->id) + ")");
    ordered_json e;
    e["centroid"] = {c->centroid.x, c->centroid.y};
    e["type"] = class_code(c->cls);
    if (c->contour) {
      ordered_json poly = ordered_json::array();
      for (const Point& p : *c->contour) poly.push_back({p.x, p.y});
      e["contour"] = std::move(poly);
    }
    if (c->class_confidence) e["type_prob"] = *c->class_confidence;
    doc[std::to_string(c->id)] = std::move(e);
  }
  return doc.dump();
}

// --- masks -----------------------------------------------------------------

namespace {

struct PgmHeader {
  std::int64_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("not a binary PGM (P5) file");
  std::size_t pos = 2;
  std::int64_t fields[3] = {0, 0, 0};
  for (int f = 0; f < 3; ++f) {
    // whitespace and comments
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw ParseError("truncated PGM header");
    if (pos - start > 12) throw ParseError("PGM header value too large");
    fields[f] = parse_int(bytes.substr(start, pos - start), "PGM header");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw ParseError("truncated PGM header");
  ++pos;  // single whitespace before raster
  PgmHeader h{fields[0], fields[1], fields[2], pos};
  if (h.width <= 0 || h.height <= 0) throw ParseError("PGM dimensions must be positive");
  if (h.maxval <= 0 || h.maxval > 65535) throw ParseError("PGM maxval out of range");
  return h;
}

}  // namespace

GrayImage parse_pgm(std::string_view bytes) {
  const PgmHeader h = parse_pgm_header(bytes);
  const std::size_t bpp = h.maxval > 255 ? 2 : 1;
  const auto n = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
  if (n / static_cast<std::size_t>(h.width) != static_cast<std::size_t>(h.height) || n > (std::size_t{1} << 31))
    throw ParseError("PGM dimensions too large");
  if (bytes.size() - h.data_offset < n * bpp) throw ParseError("truncated PGM payload");
  GrayImage img{h.width, h.height, std::vector<std::uint32_t>(n)};
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t i = 0; i < n; ++i)
    img.pixels[i] = bpp == 1 ? data[i] : (static_cast<std::uint32_t>(data[2 * i]) << 8) | data[2 * i + 1];
  return img;
}

TumorMask parse_mask_pgm(std::string_view bytes) {
  GrayImage img = parse_pgm(bytes);
  TumorMask m(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] != 0 ? 1 : 0;
  return m;
}

TumorMask parse_mask_rle(std::string_view text, std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0) throw ParseError("RLE mask requires positive dimensions");
  TumorMask m(width, height);
  const std::int64_t total = width * height;
  std::int64_t filled = 0;
  text = trim(text);
  if (text.empty()) throw ParseError("empty RLE payload");
  while (!text.empty()) {
    const std::size_t comma = text.find(',');
    std::string_view pair = trim(text.substr(0, comma));
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    const std::size_t colon = pair.find(':');
    if (colon == std::string_view::npos) throw ParseError("RLE run missing ':'");
    const std::int64_t value = parse_int(trim(pair.substr(0, colon)), "RLE value");
    const std::int64_t count = parse_int(trim(pair.substr(colon + 1)), "RLE count");
    if (value < 0 || count <= 0) throw ParseError("RLE run has negative value or non-positive count");
    if (count > total - filled) throw ParseError("RLE runs exceed width*height");
    std::fill_n(m.bits.begin() + filled, count, value != 0 ? 1 : 0);
    filled += count;
  }
  if (filled != total) throw ParseError("RLE runs cover " + std::to_string(filled) + " of " + std::to_string(total) + " pixels");
  return m;
}

TumorMask parse_mask(std::string_view bytes, MaskEncoding encoding, std::int64_t rle_width, std::int64_t rle_height) {
  return encoding == MaskEncoding::Pgm ? parse_mask_pgm(bytes) : parse_mask_rle(bytes, rle_width, rle_height);
}

std::string write_mask_pgm(const BinaryMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  out.reserve(out.size() + mask.bits.size());
  for (std::uint8_t b : mask.bits) out.push_back(static_cast<char>(b ? 255 : 0));
  return out;
}

std::string write_mask_rle(const BinaryMask& mask) {
  std::string out;
  std::size_t i = 0;
  while (i < mask.bits.size()) {
    const bool v = mask.bits[i] != 0;
    std::size_t j = i;
    while (j < mask.bits.size() && (mask.bits[j] != 0) == v) ++j;
    if (!out.empty()) out.push_back(',');
    out += (v ? "1:" : "0:") + std::to_string(j - i);
    i = j;
  }
  return out;
}

std::string write_pgm16(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  for (std::uint32_t p : img.pixels) {
    if (p > 65535) throw SerializationError("pixel value exceeds 16 bits");
    out.push_back(static_cast<char>((p >> 8) & 0xff));
    out.push_back(static_cast<char>(p & 0xff));
  }
  return out;
}

// --- feature vector --------------------------------------------------------

std::string format_double(double v) {
  if (v == 0.0) return "0";  // -0 would not survive a parse
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string json_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(ch));
          out += buf;
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
  return out;
}

std::string write_feature_vector(const FeatureVector& fv) {
  std::string out = "{\"schema\":" + json_escape(fv.schema) + ",\"features\":{";
  bool first = true;
  for (const auto& [name, value] : fv.values) {
    if (value && !std::isfinite(*value)) throw SerializationError("non-finite value for feature '" + name + "'");
    if (!first) out.push_back(',');
    first = false;
    out += json_escape(name);
    out.push_back(':');
    out += value ? format_double(*value) : "null";
  }
  out += "}}";
  return out;
}

FeatureVector parse_feature_vector(std::string_view bytes) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed feature vector JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema") || !doc["schema"].is_string() || !doc.contains("features") ||
      !doc["features"].is_object())
    throw ParseError("feature vector needs string 'schema' and object 'features'");
  FeatureVector fv;
  fv.schema = doc["schema"].get<std::string>();
  for (const auto& [key, value] : doc["features"].items()) {
    if (value.is_null()) {
      fv.values.emplace_back(key, std::nullopt);
    } else if (value.is_number()) {
      fv.values.emplace_back(key, value.get<double>());
    } else {
      throw ParseError("feature '" + key + "' is neither a number nor null");
    }
  }
  return fv;
}

// --- meta ------------------------------------------------------------------

MetaFields parse_meta(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed meta JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("meta JSON must be an object");
  MetaFields m;
  auto get_int = [&](const char* key) -> std::optional<std::int64_t> {
    if (!doc.contains(key)) return std::nullopt;
    if (!doc[key].is_number_integer()) throw ParseError(std::string("meta field '") + key + "' must be an integer");
    return doc[key].get<std::int64_t>();
  };
  m.width_px = get_int("width_px");
  m.height_px = get_int("height_px");
  m.mask_downsample = get_int("mask_downsample");
  if (doc.contains("microns_per_pixel")) {
    if (!doc["microns_per_pixel"].is_number()) throw ParseError("meta field 'microns_per_pixel' must be a number");
    m.microns_per_pixel = doc["microns_per_pixel"].get<double>();
  }
  if (doc.contains("vicinity_um")) {
    if (!doc["vicinity_um"].is_number()) throw ParseError("meta field 'vicinity_um' must be a number");
    m.vicinity_um = doc["vicinity_um"].get<double>();
  }
  return m;
}

std::string write_meta(const SlideMeta& meta, std::optional<double> vicinity_um) {
  return "{\"width_px\":" + std::to_string(meta.width_px) + ",\"height_px\":" + std::to_string(meta.height_px) +
         ",\"microns_per_pixel\":" + format_double(meta.microns_per_pixel) +
         ",\"mask_downsample\":" + std::to_string(meta.mask_downsample) +
         (vicinity_um ? ",\"vicinity_um\":" + format_double(*vicinity_um) : std::string()) + "}";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SerializationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw SerializationError("write failed for '" + path + "'");
}

}  // namespace hm
