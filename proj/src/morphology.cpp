#include "hm/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hm/errors.hpp"

namespace hm {

double polygon_signed_area(std::span<const Point> contour) {
  const std::size_t n = contour.size();
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = contour[i];
    const Point& b = contour[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

double polygon_perimeter(std::span<const Point> contour) {
  const std::size_t n = contour.size();
  double p = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = contour[i];
    const Point& b = contour[(i + 1) % n];
    p += std::hypot(b.x - a.x, b.y - a.y);
  }
  return p;
}

Morphology morphology(std::span<const Point> contour) {
  if (contour.size() < 3) throw MorphologyError("contour needs at least 3 vertices");
  const double perimeter = polygon_perimeter(contour);
  if (!(perimeter > 0.0)) throw MorphologyError("contour has zero perimeter");
  Morphology m;
  m.area = std::abs(polygon_signed_area(contour));
  m.circularity = std::clamp(4.0 * std::numbers::pi * m.area / (perimeter * perimeter), 0.0, 1.0);
  return m;
}

Polygon normalize_orientation(Polygon contour) {
  if (polygon_signed_area(contour) < 0.0) std::reverse(contour.begin(), contour.end());
  return contour;
}

}  // namespace hm
