#pragma once

// Timing verification, observation-window binning onto a uniform grid, and
// leakage-free imputation. Per-sample tensor construction is independent
// across samples and safe to parallelize once the feature registry is frozen.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrflow/cohort.hpp"
#include "ehrflow/core.hpp"
#include "ehrflow/schema.hpp"

namespace ehrflow {

// --- timing verification ------------------------------------------------------

struct VerificationReport {
  std::size_t admissions_excluded_admit_after_discharge = 0;
  std::size_t stays_excluded_in_after_out = 0;
  std::size_t stays_excluded_orphaned = 0;
  std::size_t meds_excluded_start_after_stop = 0;
  std::size_t meds_excluded_start_after_discharge = 0;
  std::size_t meds_start_clamped_to_admit = 0;
  std::size_t meds_stop_clamped_to_discharge = 0;
};

// Excludes admissions whose admit time exceeds their discharge time (and the
// ICU stays under them), excludes medications that start after they stop or
// after the encounter ends, and clamps medication intervals onto the
// encounter bounds. Every action is tallied by rule.
inline VerificationReport verify_times(std::vector<AdmissionRow>& admissions,
                                       std::vector<IcuStayRow>& icu_stays,
                                       std::vector<MedicationRow>& medications,
                                       Setting setting) {
  VerificationReport report;

  std::vector<AdmissionRow> kept_admissions;
  kept_admissions.reserve(admissions.size());
  for (auto& a : admissions) {
    if (a.admit_time > a.discharge_time) {
      ++report.admissions_excluded_admit_after_discharge;
    } else {
      kept_admissions.push_back(std::move(a));
    }
  }
  admissions = std::move(kept_admissions);

  std::unordered_map<std::int64_t, const AdmissionRow*> by_hadm;
  by_hadm.reserve(admissions.size());
  for (const auto& a : admissions) by_hadm.emplace(a.hadm_id, &a);

  std::vector<IcuStayRow> kept_stays;
  kept_stays.reserve(icu_stays.size());
  for (auto& s : icu_stays) {
    if (s.in_time > s.out_time) {
      ++report.stays_excluded_in_after_out;
    } else if (by_hadm.find(s.hadm_id) == by_hadm.end()) {
      ++report.stays_excluded_orphaned;  // parent admission was excluded or absent
    } else {
      kept_stays.push_back(std::move(s));
    }
  }
  icu_stays = std::move(kept_stays);

  std::unordered_map<std::int64_t, std::pair<Timestamp, Timestamp>> encounter_bounds;
  if (setting == Setting::ICU) {
    encounter_bounds.reserve(icu_stays.size());
    for (const auto& s : icu_stays) encounter_bounds.emplace(s.stay_id, std::make_pair(s.in_time, s.out_time));
  } else {
    encounter_bounds.reserve(admissions.size());
    for (const auto& a : admissions) {
      encounter_bounds.emplace(a.hadm_id, std::make_pair(a.admit_time, a.discharge_time));
    }
  }

  std::vector<MedicationRow> kept_meds;
  kept_meds.reserve(medications.size());
  for (auto& m : medications) {
    if (m.start_time > m.stop_time) {
      ++report.meds_excluded_start_after_stop;
      continue;
    }
    auto it = encounter_bounds.find(m.encounter_id);
    if (it != encounter_bounds.end()) {
      const auto [enc_start, enc_end] = it->second;
      if (m.start_time > enc_end) {
        ++report.meds_excluded_start_after_discharge;
        continue;
      }
      if (m.start_time < enc_start) {
        m.start_time = enc_start;
        ++report.meds_start_clamped_to_admit;
      }
      if (m.stop_time > enc_end) {
        m.stop_time = enc_end;
        ++report.meds_stop_clamped_to_discharge;
      }
    }
    kept_meds.push_back(std::move(m));
  }
  medications = std::move(kept_meds);
  return report;
}

// --- grid ----------------------------------------------------------------------

struct GridSpec {
  int window_hours = 48;
  double resolution_hours = 2.0;
  int n_bins = 24;
  std::int64_t resolution_seconds = 7200;

  // The resolution must divide the window evenly.
  static GridSpec make(int window_hours, double resolution_hours) {
    if (resolution_hours <= 0.0) {
      throw ConfigError("timeseries.resolution_hours must be positive, got " +
                        format_double(resolution_hours));
    }
    GridSpec g;
    g.window_hours = window_hours;
    g.resolution_hours = resolution_hours;
    g.resolution_seconds = static_cast<std::int64_t>(std::llround(resolution_hours * 3600.0));
    const std::int64_t window_seconds =
        static_cast<std::int64_t>(window_hours) * kSecondsPerHour;
    if (g.resolution_seconds <= 0 || window_seconds % g.resolution_seconds != 0) {
      throw ConfigError("timeseries.resolution_hours (" + format_double(resolution_hours) +
                        ") must divide task.window_hours (" + std::to_string(window_hours) +
                        ") evenly");
    }
    g.n_bins = static_cast<int>(window_seconds / g.resolution_seconds);
    return g;
  }
};

// --- binning --------------------------------------------------------------------

enum class EventKind { Measurement, Procedure, Medication };

// One event routed to a dynamic-feature column. Medications span
// [time, stop]; measurements and procedures are instants.
struct BinEvent {
  int feature = 0;
  EventKind kind = EventKind::Measurement;
  Timestamp time = 0;
  Timestamp stop = 0;
  double value = 0.0;
};

enum class Aggregator { Mean, Last, Max };

inline std::string aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::Mean: return "mean";
    case Aggregator::Last: return "last";
    case Aggregator::Max: return "max";
  }
  return "?";
}

struct BinnedGrid {
  int n_bins = 0;
  int n_features = 0;
  std::vector<double> values;          // n_bins x n_features, time-major rows
  std::vector<std::uint8_t> presence;  // 1 where an event was recorded

  double& value_at(int bin, int f) { return values[static_cast<std::size_t>(bin) * n_features + f]; }
  double value_at(int bin, int f) const {
    return values[static_cast<std::size_t>(bin) * n_features + f];
  }
  std::uint8_t& presence_at(int bin, int f) {
    return presence[static_cast<std::size_t>(bin) * n_features + f];
  }
  std::uint8_t presence_at(int bin, int f) const {
    return presence[static_cast<std::size_t>(bin) * n_features + f];
  }

  bool operator==(const BinnedGrid& other) const = default;
};

// Bins one sample's events onto the grid. Bin k covers
// [start + k*res, start + (k+1)*res), with the final bin closed on the right
// so the window edge loses nothing. Events outside the window are ignored.
// Measurements aggregate within a bin (mean by default); procedures set the
// bin to 1; medications write their dose into every overlapping bin, with
// same-feature overlaps summing.
inline BinnedGrid bin_events(const std::vector<BinEvent>& events, const GridSpec& grid,
                             Timestamp window_start, int n_features,
                             Aggregator aggregator = Aggregator::Mean) {
  BinnedGrid out;
  out.n_bins = grid.n_bins;
  out.n_features = n_features;
  const std::size_t cells = static_cast<std::size_t>(grid.n_bins) * n_features;
  out.values.assign(cells, 0.0);
  out.presence.assign(cells, 0);
  if (n_features == 0) return out;

  const Timestamp window_end =
      window_start + static_cast<std::int64_t>(grid.n_bins) * grid.resolution_seconds;
  auto bin_index = [&](Timestamp t) -> int {
    if (t < window_start || t > window_end) return -1;
    if (t == window_end) return grid.n_bins - 1;  // closed right edge of the final bin
    return static_cast<int>((t - window_start) / grid.resolution_seconds);
  };

  // Scratch for measurement aggregation: counts for Mean, latest event time
  // for Last. Max needs only the running value.
  std::vector<std::uint32_t> counts;
  std::vector<Timestamp> last_time;
  if (aggregator == Aggregator::Mean) counts.assign(cells, 0);
  if (aggregator == Aggregator::Last) last_time.assign(cells, INT64_MIN);

  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::Measurement: {
        const int b = bin_index(e.time);
        if (b < 0) continue;
        const std::size_t cell = static_cast<std::size_t>(b) * n_features + e.feature;
        switch (aggregator) {
          case Aggregator::Mean:
            out.values[cell] += e.value;
            ++counts[cell];
            break;
          case Aggregator::Last:
            if (e.time >= last_time[cell]) {  // later input order wins ties
              last_time[cell] = e.time;
              out.values[cell] = e.value;
            }
            break;
          case Aggregator::Max:
            out.values[cell] = out.presence[cell] ? std::max(out.values[cell], e.value) : e.value;
            break;
        }
        out.presence[cell] = 1;
        break;
      }
      case EventKind::Procedure: {
        const int b = bin_index(e.time);
        if (b < 0) continue;
        const std::size_t cell = static_cast<std::size_t>(b) * n_features + e.feature;
        out.values[cell] = 1.0;
        out.presence[cell] = 1;
        break;
      }
      case EventKind::Medication: {
        if (e.stop < window_start || e.time > window_end) continue;
        const int b0 = bin_index(std::max(e.time, window_start));
        const int b1 = bin_index(std::min(e.stop, window_end));
        if (b0 < 0 || b1 < 0) continue;
        for (int b = b0; b <= b1; ++b) {
          const std::size_t cell = static_cast<std::size_t>(b) * n_features + e.feature;
          out.values[cell] += e.value;
          out.presence[cell] = 1;
        }
        break;
      }
    }
  }

  if (aggregator == Aggregator::Mean) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      if (counts[cell] > 1) out.values[cell] /= static_cast<double>(counts[cell]);
    }
  }
  return out;
}

// --- imputation -----------------------------------------------------------------

enum class Imputation { ForwardFillMean, None };

inline std::string imputation_name(Imputation i) {
  return i == Imputation::ForwardFillMean ? "ffill_mean" : "none";
}

// Fills unobserved measurement bins. ForwardFillMean carries the most recent
// observed value forward; bins before the first observation take the mean of
// the observed bins in this window. Only in-window values are ever read, so
// nothing outside the observation window can leak in. Medication and
// procedure columns are never imputed. A feature with no observations at all
// stays zero and is tallied.
inline void impute(BinnedGrid& grid, Imputation mode,
                   const std::vector<bool>& is_measurement_feature,
                   std::size_t* zero_observation_features = nullptr) {
  if (mode == Imputation::None) return;  // unobserved bins stay 0
  for (int f = 0; f < grid.n_features; ++f) {
    if (!is_measurement_feature[static_cast<std::size_t>(f)]) continue;
    double sum = 0.0;
    int observed = 0;
    for (int b = 0; b < grid.n_bins; ++b) {
      if (grid.presence_at(b, f)) {
        sum += grid.value_at(b, f);
        ++observed;
      }
    }
    if (observed == 0) {
      if (zero_observation_features != nullptr) ++*zero_observation_features;
      continue;
    }
    const double mean = sum / observed;
    bool seen = false;
    double carry = 0.0;
    for (int b = 0; b < grid.n_bins; ++b) {
      if (grid.presence_at(b, f)) {
        carry = grid.value_at(b, f);
        seen = true;
      } else {
        grid.value_at(b, f) = seen ? carry : mean;
      }
    }
  }
}

// --- sample tensors ---------------------------------------------------------------

// Frozen code -> column mapping shared by every sample in a cohort run.
struct FeatureRegistry {
  std::vector<std::string> dynamic_codes;       // sorted, prefixed by family
  std::vector<bool> dynamic_is_measurement;     // aligned with dynamic_codes
  std::vector<std::string> static_roots;        // sorted ICD-10 roots
  std::vector<std::string> ethnicity_categories;  // sorted; demographic encoding
  std::vector<std::string> insurance_categories;  // sorted

  int dynamic_index(const std::string& code) const {
    auto it = std::lower_bound(dynamic_codes.begin(), dynamic_codes.end(), code);
    if (it == dynamic_codes.end() || *it != code) return -1;
    return static_cast<int>(it - dynamic_codes.begin());
  }
};

struct SampleTensor {
  CohortSample sample;
  BinnedGrid grid;
  std::vector<std::uint8_t> static_roots;  // indicator per registry root

  bool operator==(const SampleTensor& other) const {
    return grid == other.grid && static_roots == other.static_roots;
  }
};

// Diagnosis-root indicators are order-insensitive by construction.
inline std::vector<std::uint8_t> static_indicator(const std::vector<std::string>& sample_roots,
                                                  const std::vector<std::string>& registry_roots) {
  std::vector<std::uint8_t> out(registry_roots.size(), 0);
  for (const auto& root : sample_roots) {
    auto it = std::lower_bound(registry_roots.begin(), registry_roots.end(), root);
    if (it != registry_roots.end() && *it == root) {
      out[static_cast<std::size_t>(it - registry_roots.begin())] = 1;
    }
  }
  return out;
}

}  // namespace ehrflow
