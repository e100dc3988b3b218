#pragma once

// File formats consumed and produced by the pipeline.
//
// Cell JSON: object keyed by decimal nucleus id, optionally wrapped as
// {"nuc": {...}}. Each entry is
//   {"centroid": [x, y], "type": 1..5, "contour": [[x, y], ...], "type_prob": p}
// with contour and type_prob optional. Type codes: 1 granulocyte,
// 2 lymphocyte, 3 plasma, 4 stromal, 5 tumor.
//
// Masks: binary PGM (P5, maxval <= 255, any nonzero byte is tumor) or ASCII
// run-length text "value:count,value:count,..." in row-major order whose
// counts sum to width*height. RLE carries no dimensions; the caller supplies
// them from the slide metadata.
//
// Feature vector JSON: {"schema":"hm-fv-1","features":{name:value|null,...}},
// keys in registry order, numbers printed with 17 significant digits, no
// whitespace.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hm/feature_vector.hpp"
#include "hm/types.hpp"

namespace hm {

enum class MaskEncoding { Pgm, Rle };

std::vector<CellRecord> parse_cells(std::string_view bytes);
std::string serialize_cells(const std::vector<CellRecord>& cells);

TumorMask parse_mask(std::string_view bytes, MaskEncoding encoding,
                     std::int64_t rle_width = 0, std::int64_t rle_height = 0);
TumorMask parse_mask_pgm(std::string_view bytes);
TumorMask parse_mask_rle(std::string_view text, std::int64_t width, std::int64_t height);
std::string write_mask_pgm(const BinaryMask& mask);
std::string write_mask_rle(const BinaryMask& mask);

// Generic greyscale raster, 8- or 16-bit P5. Used for instance label maps.
struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint32_t> pixels;
};
GrayImage parse_pgm(std::string_view bytes);
std::string write_pgm16(const GrayImage& img);

std::string write_feature_vector(const FeatureVector& fv);
FeatureVector parse_feature_vector(std::string_view bytes);

// Canonical number formatting shared by every JSON writer in the project.
std::string format_double(double v);
std::string json_escape(std::string_view s);

struct MetaFields {
  std::optional<std::int64_t> width_px;
  std::optional<std::int64_t> height_px;
  std::optional<double> microns_per_pixel;
  std::optional<std::int64_t> mask_downsample;
  std::optional<double> vicinity_um;
};
MetaFields parse_meta(std::string_view bytes);
std::string write_meta(const SlideMeta& meta, std::optional<double> vicinity_um = std::nullopt);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace hm
