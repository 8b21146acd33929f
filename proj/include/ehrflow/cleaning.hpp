#pragma once

// Measurement cleaning: unit harmonization against a per-item rule table and
// two-sided percentile outlier handling (remove or cap). Outlier boundaries
// use the nearest-rank method over the cohort-wide distribution of each
// feature.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ehrflow/core.hpp"
#include "ehrflow/csv.hpp"

namespace ehrflow {

struct UnitConversion {
  double factor = 1.0;
  double offset = 0.0;
};

struct UnitRule {
  std::string canonical_unit;
  std::map<std::string, UnitConversion> conversions;  // lower-cased source unit
};

// Rule table file columns: item_id, canonical_unit, source_unit, factor, offset.
// Multiple rows per item add conversions; the canonical unit must agree.
class UnitRuleTable {
 public:
  UnitRuleTable() = default;

  static UnitRuleTable from_file(const std::string& path) {
    UnitRuleTable table;
    CsvReader reader(path);
    auto header = reader.next();
    if (!header) throw DataError("unit rule file is empty: " + path);
    std::size_t line = 1;
    while (auto record = reader.next()) {
      ++line;
      if (record->size() < 5) throw DataError("unit rule file: short row at line " +
                                              std::to_string(line));
      auto item = parse_int64(trim((*record)[0]));
      if (!item) throw DataError("unit rule file: bad item_id at line " + std::to_string(line));
      auto factor = parse_double(trim((*record)[3]));
      auto offset = parse_double(trim((*record)[4]));
      if (!factor || *factor == 0.0 || !offset) {
        throw DataError("unit rule file: factor must be finite and nonzero at line " +
                        std::to_string(line));
      }
      auto& rule = table.rules_[*item];
      rule.canonical_unit = std::string(trim((*record)[1]));
      rule.conversions[to_lower(trim((*record)[2]))] = UnitConversion{*factor, *offset};
    }
    return table;
  }

  const UnitRule* find(std::int64_t item_id) const {
    auto it = rules_.find(item_id);
    return it == rules_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return rules_.size(); }

 private:
  std::map<std::int64_t, UnitRule> rules_;
};

enum class UnitOutcome { Canonical, Converted, UnknownUnit };

// Converts one value to the item's canonical unit. Values already canonical
// pass through; units with no conversion entry are unusable and get dropped
// by the caller.
inline UnitOutcome harmonize_unit(const UnitRule& rule, const std::optional<std::string>& unit,
                                  double& value) {
  if (!unit || to_lower(*unit) == to_lower(rule.canonical_unit)) return UnitOutcome::Canonical;
  auto it = rule.conversions.find(to_lower(*unit));
  if (it == rule.conversions.end()) return UnitOutcome::UnknownUnit;
  value = value * it->second.factor + it->second.offset;
  return UnitOutcome::Converted;
}

enum class OutlierMode { Remove, Cap, None };

inline std::string outlier_mode_name(OutlierMode m) {
  switch (m) {
    case OutlierMode::Remove: return "remove";
    case OutlierMode::Cap: return "cap";
    case OutlierMode::None: return "none";
  }
  return "?";
}

struct OutlierPolicy {
  double threshold_percentile = 2.0;  // [0, 50); 0 disables
  OutlierMode mode = OutlierMode::Remove;

  void validate() const {
    if (threshold_percentile < 0.0 || threshold_percentile >= 50.0) {
      throw ConfigError("cleaning.outlier_threshold must be in [0, 50), got " +
                        format_double(threshold_percentile));
    }
  }
};

// Nearest-rank index (1-based): ceil(p * n / 100), clamped to [1, n].
inline std::size_t nearest_rank_index(double percentile, std::size_t n) {
  const double x = std::ceil(percentile * static_cast<double>(n) / 100.0);
  if (x < 1.0) return 1;
  if (x > static_cast<double>(n)) return n;
  return static_cast<std::size_t>(x);
}

struct OutlierBounds {
  double low = 0.0;
  double high = 0.0;
};

// Two-sided bounds at [t, 100-t]. Selection via nth_element rather than a
// full sort; the brute-force sort-based oracle lives in the tests.
inline OutlierBounds outlier_bounds(std::vector<double> values, double threshold_percentile) {
  OutlierBounds b;
  const std::size_t n = values.size();
  if (n == 0) return b;
  const std::size_t k_low = nearest_rank_index(threshold_percentile, n);
  const std::size_t k_high = nearest_rank_index(100.0 - threshold_percentile, n);
  std::nth_element(values.begin(), values.begin() + (k_low - 1), values.end());
  b.low = values[k_low - 1];
  std::nth_element(values.begin(), values.begin() + (k_high - 1), values.end());
  b.high = values[k_high - 1];
  return b;
}

struct OutlierResult {
  std::vector<double> values;
  std::size_t removed = 0;
  std::size_t capped = 0;
  OutlierBounds bounds;
};

// Remove mode drops values strictly outside [low, high]; Cap mode clamps
// them to the boundary values. A zero threshold (or None mode) is a no-op.
inline OutlierResult remove_outliers(const std::vector<double>& values,
                                     const OutlierPolicy& policy) {
  policy.validate();
  OutlierResult result;
  if (values.empty() || policy.mode == OutlierMode::None || policy.threshold_percentile <= 0.0) {
    result.values = values;
    if (!values.empty()) {
      result.bounds.low = *std::min_element(values.begin(), values.end());
      result.bounds.high = *std::max_element(values.begin(), values.end());
    }
    return result;
  }
  result.bounds = outlier_bounds(values, policy.threshold_percentile);
  result.values.reserve(values.size());
  for (double v : values) {
    if (v < result.bounds.low) {
      if (policy.mode == OutlierMode::Remove) {
        ++result.removed;
      } else {
        result.values.push_back(result.bounds.low);
        ++result.capped;
      }
    } else if (v > result.bounds.high) {
      if (policy.mode == OutlierMode::Remove) {
        ++result.removed;
      } else {
        result.values.push_back(result.bounds.high);
        ++result.capped;
      }
    } else {
      result.values.push_back(v);
    }
  }
  return result;
}

}  // namespace ehrflow
