#pragma once

#include <span>

#include "hm/types.hpp"

namespace hm {

struct Morphology {
  double area = 0.0;         // px^2
  double circularity = 0.0;  // 4*pi*area / perimeter^2, clamped to [0, 1]
};

double polygon_signed_area(std::span<const Point> contour);
double polygon_perimeter(std::span<const Point> contour);

// Throws MorphologyError for fewer than 3 vertices or zero perimeter.
Morphology morphology(std::span<const Point> contour);

// Reorders vertices counter-clockwise (positive signed area in a y-up frame).
Polygon normalize_orientation(Polygon contour);

}  // namespace hm
