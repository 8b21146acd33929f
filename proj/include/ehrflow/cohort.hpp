#pragma once

// Task definitions and cohort extraction: applies the adult filter, the
// optional disease filter, the task labeler, and observation-window
// anchoring. Every excluded unit is tallied by reason, so
// |input units| == |cohort| + sum of exclusions.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrflow/core.hpp"
#include "ehrflow/schema.hpp"

namespace ehrflow {

enum class Task { Readmission, Mortality, LengthOfStay, Phenotype };

inline std::string task_name(Task t) {
  switch (t) {
    case Task::Readmission: return "readmission";
    case Task::Mortality: return "mortality";
    case Task::LengthOfStay: return "los";
    case Task::Phenotype: return "phenotype";
  }
  return "?";
}

enum class WindowAnchor { FirstHours, LastHours };

// Mortality and length-of-stay predict forward from the start of the stay;
// readmission and phenotype look back from the end of it.
inline WindowAnchor anchor_for_task(Task t) {
  return (t == Task::Mortality || t == Task::LengthOfStay) ? WindowAnchor::FirstHours
                                                           : WindowAnchor::LastHours;
}

struct TaskSpec {
  Task task = Task::Mortality;
  Setting setting = Setting::Hospital;
  std::optional<std::string> disease_filter;  // ICD-10 root
  int gap_days = 30;                          // readmission only
  int los_threshold_days = 3;                 // length-of-stay only
  int window_hours = 48;
  std::string phenotype_target;               // phenotype only

  WindowAnchor anchor() const { return anchor_for_task(task); }

  void validate() const {
    if (task == Task::Readmission && (gap_days < 10 || gap_days > 150)) {
      throw ConfigError("task.gap_days must be between 10 and 150, got " +
                        std::to_string(gap_days));
    }
    if (task == Task::LengthOfStay && (los_threshold_days < 1 || los_threshold_days > 10)) {
      throw ConfigError("task.los_threshold_days must be between 1 and 10, got " +
                        std::to_string(los_threshold_days));
    }
    if (window_hours <= 0) {
      throw ConfigError("task.window_hours must be a positive integer, got " +
                        std::to_string(window_hours));
    }
    if (task == Task::Phenotype && phenotype_target.size() != 3) {
      throw ConfigError("task.phenotype_target must be a 3-character ICD-10 root");
    }
    if (disease_filter && disease_filter->size() != 3) {
      throw ConfigError("task.disease_filter must be a 3-character ICD-10 root or 'none'");
    }
  }
};

struct Demographics {
  int age = 0;
  Gender gender = Gender::F;
  std::string ethnicity;
  std::string insurance;
};

struct CohortSample {
  std::int64_t subject_id = 0;
  std::int64_t hadm_id = 0;
  std::int64_t stay_id = -1;  // ICU setting only
  int label = 0;
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  Demographics demographics;

  // One sample per ICU stay in the ICU setting, per admission otherwise.
  std::int64_t sample_id() const { return stay_id >= 0 ? stay_id : hadm_id; }
};

struct CohortReport {
  std::size_t input_units = 0;
  std::map<std::string, std::size_t> exclusions;  // reason -> count
  std::size_t cohort_size = 0;
  std::size_t positives = 0;
  std::vector<std::string> warnings;

  std::size_t total_excluded() const {
    std::size_t n = 0;
    for (const auto& [k, v] : exclusions) n += v;
    return n;
  }
};

// --- label primitives --------------------------------------------------------

// Age at admission from the anchored demographics: admission year minus
// birth year, where birth year = anchor_year - anchor_age.
inline int compute_age(int anchor_age, int anchor_year, Timestamp admit_time) {
  return year_of(admit_time) - (anchor_year - anchor_age);
}

inline bool admission_has_root(const std::vector<std::string>& roots, const std::string& root) {
  return std::find(roots.begin(), roots.end(), root) != roots.end();
}

// Keeps exactly the admissions with at least one diagnosis whose root
// matches. Admissions with no diagnoses at all never match.
inline std::vector<AdmissionRow> filter_disease(
    const std::vector<AdmissionRow>& admissions,
    const std::unordered_map<std::int64_t, std::vector<std::string>>& roots_by_admission,
    const std::string& root) {
  std::vector<AdmissionRow> kept;
  for (const auto& a : admissions) {
    auto it = roots_by_admission.find(a.hadm_id);
    if (it != roots_by_admission.end() && admission_has_root(it->second, root)) {
      kept.push_back(a);
    }
  }
  return kept;
}

enum class LabelStatus { Labeled, Excluded };

struct LabelResult {
  LabelStatus status = LabelStatus::Labeled;
  int label = 0;
  std::string exclusion_reason;

  static LabelResult labeled(int v) { return {LabelStatus::Labeled, v, {}}; }
  static LabelResult excluded(std::string reason) {
    return {LabelStatus::Excluded, 0, std::move(reason)};
  }
};

// Per-admission readmission labels for one patient's admissions, sorted
// ascending by admit time. Positive iff the next admission starts within
// gap_days of this discharge (inclusive boundary, exact time difference).
// An admission overlapped by the next one is excluded.
inline std::vector<LabelResult> label_readmission(const std::vector<AdmissionRow>& sorted,
                                                  int gap_days) {
  std::vector<LabelResult> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size()) {
      const auto& next = sorted[i + 1];
      if (next.admit_time < sorted[i].discharge_time) {
        out.push_back(LabelResult::excluded("overlapping_admissions"));
        continue;
      }
      const std::int64_t gap = next.admit_time - sorted[i].discharge_time;
      out.push_back(LabelResult::labeled(
          gap <= static_cast<std::int64_t>(gap_days) * kSecondsPerDay ? 1 : 0));
    } else {
      out.push_back(LabelResult::labeled(0));  // nothing can follow
    }
  }
  return out;
}

// In-hospital mortality: positive iff the expire flag is set or the death
// time falls within [admit, discharge]. A death time before admission is a
// data problem and excludes the sample.
inline LabelResult label_mortality(const AdmissionRow& adm) {
  if (adm.death_time && *adm.death_time < adm.admit_time) {
    return LabelResult::excluded("death_before_admit");
  }
  const bool died = adm.hospital_expire_flag ||
                    (adm.death_time && *adm.death_time >= adm.admit_time &&
                     *adm.death_time <= adm.discharge_time);
  return LabelResult::labeled(died ? 1 : 0);
}

// Positive iff the stay is strictly longer than the threshold.
inline LabelResult label_los(Timestamp start, Timestamp end, int threshold_days) {
  return LabelResult::labeled(
      end - start > static_cast<std::int64_t>(threshold_days) * kSecondsPerDay ? 1 : 0);
}

// Next-visit phenotype: positive iff the next admission carries a diagnosis
// with the target root. The patient's final admission has no next visit and
// is excluded (an undefined label, not a negative).
inline std::vector<LabelResult> label_phenotype(
    const std::vector<AdmissionRow>& sorted,
    const std::unordered_map<std::int64_t, std::vector<std::string>>& roots_by_admission,
    const std::string& target_root) {
  std::vector<LabelResult> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 >= sorted.size()) {
      out.push_back(LabelResult::excluded("terminal_admission"));
      continue;
    }
    auto it = roots_by_admission.find(sorted[i + 1].hadm_id);
    const bool positive =
        it != roots_by_admission.end() && admission_has_root(it->second, target_root);
    out.push_back(LabelResult::labeled(positive ? 1 : 0));
  }
  return out;
}

// --- extraction ----------------------------------------------------------------

struct CohortInputs {
  const std::vector<PatientRow>* patients = nullptr;
  const std::vector<AdmissionRow>* admissions = nullptr;  // time-verified
  const std::vector<IcuStayRow>* icu_stays = nullptr;     // time-verified; ICU setting
  // hadm_id -> sorted unique ICD-10 roots (conversion already applied)
  const std::unordered_map<std::int64_t, std::vector<std::string>>* roots_by_admission = nullptr;
};

struct Cohort {
  std::vector<CohortSample> samples;
  CohortReport report;
};

inline Cohort extract_cohort(const CohortInputs& in, const TaskSpec& spec) {
  spec.validate();
  Cohort cohort;
  auto& report = cohort.report;

  std::unordered_map<std::int64_t, const PatientRow*> patients;
  patients.reserve(in.patients->size());
  for (const auto& p : *in.patients) patients.emplace(p.subject_id, &p);

  // Group and sort each patient's admissions; ties broken by hadm_id so the
  // result does not depend on input row order.
  std::map<std::int64_t, std::vector<AdmissionRow>> by_subject;
  for (const auto& a : *in.admissions) by_subject[a.subject_id].push_back(a);
  for (auto& [subject, adms] : by_subject) {
    std::sort(adms.begin(), adms.end(), [](const AdmissionRow& a, const AdmissionRow& b) {
      return a.admit_time != b.admit_time ? a.admit_time < b.admit_time : a.hadm_id < b.hadm_id;
    });
  }

  std::unordered_map<std::int64_t, std::vector<IcuStayRow>> stays_by_admission;
  if (spec.setting == Setting::ICU) {
    for (const auto& s : *in.icu_stays) stays_by_admission[s.hadm_id].push_back(s);
    for (auto& [hadm, stays] : stays_by_admission) {
      std::sort(stays.begin(), stays.end(),
                [](const IcuStayRow& a, const IcuStayRow& b) { return a.stay_id < b.stay_id; });
    }
  }

  const std::int64_t window_seconds =
      static_cast<std::int64_t>(spec.window_hours) * kSecondsPerHour;
  static const std::vector<std::string> kNoRoots;

  for (const auto& [subject, adms] : by_subject) {
    std::vector<LabelResult> patient_labels;
    if (spec.task == Task::Readmission) {
      patient_labels = label_readmission(adms, spec.gap_days);
    } else if (spec.task == Task::Phenotype) {
      patient_labels = label_phenotype(adms, *in.roots_by_admission, spec.phenotype_target);
    }

    auto patient_it = patients.find(subject);
    const PatientRow* patient = patient_it == patients.end() ? nullptr : patient_it->second;

    for (std::size_t i = 0; i < adms.size(); ++i) {
      const AdmissionRow& adm = adms[i];

      // Unit bounds: the admission, or each ICU stay within it.
      struct Unit {
        std::int64_t stay_id;
        Timestamp start, end;
      };
      std::vector<Unit> units;
      if (spec.setting == Setting::ICU) {
        auto it = stays_by_admission.find(adm.hadm_id);
        if (it == stays_by_admission.end()) continue;  // admission without ICU stay: not a unit
        for (const auto& s : it->second) units.push_back({s.stay_id, s.in_time, s.out_time});
      } else {
        units.push_back({-1, adm.admit_time, adm.discharge_time});
      }

      const auto roots_it = in.roots_by_admission->find(adm.hadm_id);
      const auto& roots = roots_it == in.roots_by_admission->end() ? kNoRoots : roots_it->second;

      for (const Unit& unit : units) {
        ++report.input_units;
        auto exclude = [&](const std::string& reason) { ++report.exclusions[reason]; };

        if (patient == nullptr) {
          exclude("missing_patient");
          continue;
        }
        const int age = compute_age(patient->anchor_age, patient->anchor_year, adm.admit_time);
        if (age < 0) {
          exclude("admission_before_birth");
          continue;
        }
        if (age < 18) {
          exclude("under_18");
          continue;
        }
        if (spec.disease_filter && !admission_has_root(roots, *spec.disease_filter)) {
          exclude("disease_filter");
          continue;
        }

        LabelResult label;
        switch (spec.task) {
          case Task::Readmission:
          case Task::Phenotype:
            label = patient_labels[i];
            break;
          case Task::Mortality:
            label = label_mortality(adm);
            break;
          case Task::LengthOfStay:
            label = label_los(unit.start, unit.end, spec.los_threshold_days);
            break;
        }
        if (label.status == LabelStatus::Excluded) {
          exclude(label.exclusion_reason);
          continue;
        }

        // The full observation window must fit inside the unit.
        if (unit.end - unit.start < window_seconds) {
          exclude("stay_shorter_than_window");
          continue;
        }

        CohortSample sample;
        sample.subject_id = subject;
        sample.hadm_id = adm.hadm_id;
        sample.stay_id = unit.stay_id;
        sample.label = label.label;
        if (spec.anchor() == WindowAnchor::FirstHours) {
          sample.window_start = unit.start;
          sample.window_end = unit.start + window_seconds;
        } else {
          sample.window_start = unit.end - window_seconds;
          sample.window_end = unit.end;
        }
        sample.demographics.age = age;
        sample.demographics.gender = patient->gender;
        sample.demographics.ethnicity = adm.ethnicity;
        sample.demographics.insurance = adm.insurance;
        cohort.samples.push_back(std::move(sample));
      }
    }
  }

  std::sort(cohort.samples.begin(), cohort.samples.end(),
            [](const CohortSample& a, const CohortSample& b) {
              if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
              if (a.hadm_id != b.hadm_id) return a.hadm_id < b.hadm_id;
              return a.stay_id < b.stay_id;
            });
  report.cohort_size = cohort.samples.size();
  for (const auto& s : cohort.samples) report.positives += static_cast<std::size_t>(s.label);
  if (cohort.samples.empty()) {
    report.warnings.push_back("cohort is empty: no admissions satisfied the task criteria");
  }
  return cohort;
}

}  // namespace ehrflow
