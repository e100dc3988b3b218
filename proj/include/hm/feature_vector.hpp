#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hm {

inline constexpr const char* kSchemaVersion = "hm-fv-1";

// Ordered name -> value map; nullopt marks an undefined feature (empty region,
// zero-count ratio, no eligible distance sources).
struct FeatureVector {
  std::string schema = kSchemaVersion;
  std::vector<std::pair<std::string, std::optional<double>>> values;

  const std::optional<double>* find(const std::string& name) const {
    for (const auto& [k, v] : values)
      if (k == name) return &v;
    return nullptr;
  }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

}  // namespace hm
