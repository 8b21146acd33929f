#pragma once

// Typed ingestion of the relational tables. Every table is parsed into a
// vector of typed rows; rows that violate their invariants are counted and
// quarantined in a ParseReport, never silently dropped. Parsing is total:
// rows emitted + rows quarantined == data lines in the file.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ehrflow/core.hpp"
#include "ehrflow/csv.hpp"

namespace ehrflow {

enum class Gender { F, M };

inline std::string gender_name(Gender g) { return g == Gender::F ? "F" : "M"; }

struct PatientRow {
  std::int64_t subject_id = 0;
  Gender gender = Gender::F;
  int anchor_age = 0;
  int anchor_year = 0;
  std::optional<Timestamp> date_of_death;
};

struct AdmissionRow {
  std::int64_t hadm_id = 0;
  std::int64_t subject_id = 0;
  Timestamp admit_time = 0;
  Timestamp discharge_time = 0;
  std::optional<Timestamp> death_time;
  bool hospital_expire_flag = false;
  std::string insurance;
  std::string ethnicity;
};

struct DiagnosisRow {
  std::int64_t hadm_id = 0;
  std::string icd_code;
  int icd_version = 10;
};

// One lab or vital observation. `encounter_id` is the admission id for
// hospital labs and the ICU stay id for chart events.
struct MeasurementRow {
  std::int64_t encounter_id = 0;
  std::int64_t item_id = 0;
  Timestamp chart_time = 0;
  std::optional<double> value;
  std::optional<std::string> unit;
};

struct MedicationRow {
  std::int64_t encounter_id = 0;
  std::string drug_name;
  std::optional<std::string> ndc;
  Timestamp start_time = 0;
  Timestamp stop_time = 0;
  std::optional<double> dose;
  std::string dose_unit;
};

struct ProcedureRow {
  std::int64_t encounter_id = 0;
  std::string code;
  Timestamp event_time = 0;
};

struct IcuStayRow {
  std::int64_t stay_id = 0;
  std::int64_t hadm_id = 0;
  Timestamp in_time = 0;
  Timestamp out_time = 0;
};

struct TableSchema {
  std::string name;
  std::vector<std::string> required_columns;
};

struct ParseReport {
  std::string table;
  std::size_t rows_emitted = 0;
  std::size_t rows_quarantined = 0;
  std::map<std::string, std::size_t> quarantine_reasons;
  std::vector<std::string> sample_messages;  // first few, for diagnostics

  void quarantine(const std::string& reason, std::size_t record_no) {
    ++rows_quarantined;
    ++quarantine_reasons[reason];
    if (sample_messages.size() < 10) {
      sample_messages.push_back(table + " record " + std::to_string(record_no) + ": " + reason);
    }
  }
};

namespace detail {

// Header resolution: required columns must exist; extra columns are ignored.
class ColumnIndex {
 public:
  ColumnIndex(const TableSchema& schema, const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      by_name_.emplace(std::string(trim(header[i])), i);
    }
    for (const auto& col : schema.required_columns) {
      auto it = by_name_.find(col);
      if (it == by_name_.end()) {
        throw DataError("schema error in table '" + schema.name + "': column '" + col +
                        "' absent");
      }
      index_.push_back(it->second);
    }
  }

  // Field for the i-th required column; empty if the record is short.
  std::string_view field(const std::vector<std::string>& record, std::size_t i) const {
    const std::size_t idx = index_[i];
    if (idx >= record.size()) return {};
    return record[idx];
  }

 private:
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<std::size_t> index_;
};

}  // namespace detail

// Parses one table through `parse_row`, which fills `out` or returns a
// quarantine reason. Row order is file order.
template <typename Row, typename ParseFn>
std::vector<Row> load_table(const std::string& path, const TableSchema& schema,
                            ParseReport& report, ParseFn parse_row) {
  report.table = schema.name;
  CsvReader reader(path);
  auto header = reader.next();
  if (!header) throw DataError("schema error in table '" + schema.name + "': empty file");
  detail::ColumnIndex cols(schema, *header);

  std::vector<Row> rows;
  std::size_t record_no = 0;
  while (auto record = reader.next()) {
    ++record_no;
    Row row{};
    std::optional<std::string> problem = parse_row(cols, *record, row);
    if (problem) {
      report.quarantine(*problem, record_no);
    } else {
      ++report.rows_emitted;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace schemas {

inline const TableSchema& patients() {
  static const TableSchema s{"patients", {"subject_id", "gender", "anchor_age", "anchor_year", "dod"}};
  return s;
}
inline const TableSchema& admissions() {
  static const TableSchema s{"admissions",
                             {"hadm_id", "subject_id", "admittime", "dischtime", "deathtime",
                              "hospital_expire_flag", "insurance", "ethnicity"}};
  return s;
}
inline const TableSchema& diagnoses_icd() {
  static const TableSchema s{"diagnoses_icd", {"hadm_id", "icd_code", "icd_version"}};
  return s;
}
inline const TableSchema& labevents() {
  static const TableSchema s{"labevents", {"hadm_id", "itemid", "charttime", "valuenum", "valueuom"}};
  return s;
}
inline const TableSchema& chartevents() {
  static const TableSchema s{"chartevents", {"stay_id", "itemid", "charttime", "valuenum", "valueuom"}};
  return s;
}
inline const TableSchema& prescriptions() {
  static const TableSchema s{"prescriptions",
                             {"hadm_id", "drug", "ndc", "starttime", "stoptime", "dose_val_rx",
                              "dose_unit_rx"}};
  return s;
}
inline const TableSchema& inputevents() {
  static const TableSchema s{"inputevents",
                             {"stay_id", "itemid", "starttime", "endtime", "amount", "amountuom"}};
  return s;
}
inline const TableSchema& procedures_icd() {
  static const TableSchema s{"procedures_icd", {"hadm_id", "icd_code", "chartdate"}};
  return s;
}
inline const TableSchema& procedureevents() {
  static const TableSchema s{"procedureevents", {"stay_id", "itemid", "starttime"}};
  return s;
}
inline const TableSchema& icustays() {
  static const TableSchema s{"icustays", {"stay_id", "hadm_id", "intime", "outtime"}};
  return s;
}

}  // namespace schemas

// --- per-table parsers -----------------------------------------------------

inline std::vector<PatientRow> load_patients(const std::string& path, ParseReport& report) {
  std::unordered_set<std::int64_t> seen;
  return load_table<PatientRow>(
      path, schemas::patients(), report,
      [&seen](const detail::ColumnIndex& c, const std::vector<std::string>& r,
              PatientRow& out) -> std::optional<std::string> {
        auto id = parse_int64(c.field(r, 0));
        if (!id) return "unparseable subject_id";
        const auto gender = trim(c.field(r, 1));
        if (gender == "F")
          out.gender = Gender::F;
        else if (gender == "M")
          out.gender = Gender::M;
        else
          return "gender not in {F, M}";
        auto age = parse_int64(c.field(r, 2));
        if (!age || *age < 0) return "anchor_age missing or negative";
        auto year = parse_int64(c.field(r, 3));
        if (!year || *year < 1900 || *year > 2300) return "anchor_year outside [1900, 2300]";
        const auto dod = trim(c.field(r, 4));
        if (!dod.empty()) {
          auto ts = parse_timestamp(dod);
          if (!ts) return "unparseable dod timestamp";
          out.date_of_death = *ts;
        }
        if (!seen.insert(*id).second) return "duplicate subject_id";
        out.subject_id = *id;
        out.anchor_age = static_cast<int>(*age);
        out.anchor_year = static_cast<int>(*year);
        return std::nullopt;
      });
}

inline std::vector<AdmissionRow> load_admissions(const std::string& path, ParseReport& report) {
  std::unordered_set<std::int64_t> seen;
  return load_table<AdmissionRow>(
      path, schemas::admissions(), report,
      [&seen](const detail::ColumnIndex& c, const std::vector<std::string>& r,
              AdmissionRow& out) -> std::optional<std::string> {
        auto hadm = parse_int64(c.field(r, 0));
        if (!hadm) return "unparseable hadm_id";
        auto subject = parse_int64(c.field(r, 1));
        if (!subject) return "unparseable subject_id";
        auto admit = parse_timestamp(trim(c.field(r, 2)));
        if (!admit) return "unparseable admittime";
        auto discharge = parse_timestamp(trim(c.field(r, 3)));
        if (!discharge) return "unparseable dischtime";
        const auto death = trim(c.field(r, 4));
        if (!death.empty()) {
          auto ts = parse_timestamp(death);
          if (!ts) return "unparseable deathtime";
          out.death_time = *ts;
        }
        auto flag = parse_int64(c.field(r, 5));
        if (!flag || (*flag != 0 && *flag != 1)) return "hospital_expire_flag not 0/1";
        if (!seen.insert(*hadm).second) return "duplicate hadm_id";
        out.hadm_id = *hadm;
        out.subject_id = *subject;
        out.admit_time = *admit;
        out.discharge_time = *discharge;
        out.hospital_expire_flag = (*flag == 1);
        out.insurance = std::string(trim(c.field(r, 6)));
        out.ethnicity = std::string(trim(c.field(r, 7)));
        return std::nullopt;
      });
}

inline std::vector<DiagnosisRow> load_diagnoses(const std::string& path, ParseReport& report) {
  return load_table<DiagnosisRow>(
      path, schemas::diagnoses_icd(), report,
      [](const detail::ColumnIndex& c, const std::vector<std::string>& r,
         DiagnosisRow& out) -> std::optional<std::string> {
        auto hadm = parse_int64(c.field(r, 0));
        if (!hadm) return "unparseable hadm_id";
        const auto code = trim(c.field(r, 1));
        if (code.empty()) return "empty icd_code";
        auto version = parse_int64(c.field(r, 2));
        if (!version || (*version != 9 && *version != 10)) return "icd_version not in {9, 10}";
        out.hadm_id = *hadm;
        out.icd_code = std::string(code);
        out.icd_version = static_cast<int>(*version);
        return std::nullopt;
      });
}

namespace detail {

inline auto measurement_parser() {
  return [](const ColumnIndex& c, const std::vector<std::string>& r,
            MeasurementRow& out) -> std::optional<std::string> {
    auto enc = parse_int64(c.field(r, 0));
    if (!enc) return "unparseable encounter id";
    auto item = parse_int64(c.field(r, 1));
    if (!item) return "unparseable itemid";
    auto ts = parse_timestamp(trim(c.field(r, 2)));
    if (!ts) return "unparseable charttime";
    const auto value = trim(c.field(r, 3));
    if (!value.empty()) {
      auto v = parse_double(value);
      if (!v) return "non-numeric value";
      out.value = *v;
    }
    const auto unit = trim(c.field(r, 4));
    if (!unit.empty()) out.unit = std::string(unit);
    out.encounter_id = *enc;
    out.item_id = *item;
    out.chart_time = *ts;
    return std::nullopt;
  };
}

}  // namespace detail

inline std::vector<MeasurementRow> load_labevents(const std::string& path, ParseReport& report) {
  return load_table<MeasurementRow>(path, schemas::labevents(), report,
                                    detail::measurement_parser());
}

inline std::vector<MeasurementRow> load_chartevents(const std::string& path, ParseReport& report) {
  return load_table<MeasurementRow>(path, schemas::chartevents(), report,
                                    detail::measurement_parser());
}

inline std::vector<MedicationRow> load_prescriptions(const std::string& path,
                                                     ParseReport& report) {
  return load_table<MedicationRow>(
      path, schemas::prescriptions(), report,
      [](const detail::ColumnIndex& c, const std::vector<std::string>& r,
         MedicationRow& out) -> std::optional<std::string> {
        auto hadm = parse_int64(c.field(r, 0));
        if (!hadm) return "unparseable hadm_id";
        const auto drug = trim(c.field(r, 1));
        if (drug.empty()) return "empty drug name";
        auto start = parse_timestamp(trim(c.field(r, 3)));
        if (!start) return "unparseable starttime";
        auto stop = parse_timestamp(trim(c.field(r, 4)));
        if (!stop) return "unparseable stoptime";
        const auto dose = trim(c.field(r, 5));
        if (!dose.empty()) {
          auto v = parse_double(dose);
          if (!v) return "non-numeric dose";
          out.dose = *v;
        }
        const auto ndc = trim(c.field(r, 2));
        if (!ndc.empty()) out.ndc = std::string(ndc);
        out.encounter_id = *hadm;
        out.drug_name = std::string(drug);
        out.start_time = *start;
        out.stop_time = *stop;
        out.dose_unit = std::string(trim(c.field(r, 6)));
        return std::nullopt;
      });
}

inline std::vector<MedicationRow> load_inputevents(const std::string& path, ParseReport& report) {
  return load_table<MedicationRow>(
      path, schemas::inputevents(), report,
      [](const detail::ColumnIndex& c, const std::vector<std::string>& r,
         MedicationRow& out) -> std::optional<std::string> {
        auto stay = parse_int64(c.field(r, 0));
        if (!stay) return "unparseable stay_id";
        auto item = parse_int64(c.field(r, 1));
        if (!item) return "unparseable itemid";
        auto start = parse_timestamp(trim(c.field(r, 2)));
        if (!start) return "unparseable starttime";
        auto stop = parse_timestamp(trim(c.field(r, 3)));
        if (!stop) return "unparseable endtime";
        const auto amount = trim(c.field(r, 4));
        if (!amount.empty()) {
          auto v = parse_double(amount);
          if (!v) return "non-numeric amount";
          out.dose = *v;
        }
        out.encounter_id = *stay;
        out.drug_name = std::to_string(*item);
        out.start_time = *start;
        out.stop_time = *stop;
        out.dose_unit = std::string(trim(c.field(r, 5)));
        return std::nullopt;
      });
}

inline std::vector<ProcedureRow> load_procedures_icd(const std::string& path,
                                                     ParseReport& report) {
  return load_table<ProcedureRow>(
      path, schemas::procedures_icd(), report,
      [](const detail::ColumnIndex& c, const std::vector<std::string>& r,
         ProcedureRow& out) -> std::optional<std::string> {
        auto hadm = parse_int64(c.field(r, 0));
        if (!hadm) return "unparseable hadm_id";
        const auto code = trim(c.field(r, 1));
        if (code.empty()) return "empty procedure code";
        auto ts = parse_timestamp(trim(c.field(r, 2)));
        if (!ts) return "unparseable chartdate";
        out.encounter_id = *hadm;
        out.code = std::string(code);
        out.event_time = *ts;
        return std::nullopt;
      });
}

inline std::vector<ProcedureRow> load_procedureevents(const std::string& path,
                                                      ParseReport& report) {
  return load_table<ProcedureRow>(
      path, schemas::procedureevents(), report,
      [](const detail::ColumnIndex& c, const std::vector<std::string>& r,
         ProcedureRow& out) -> std::optional<std::string> {
        auto stay = parse_int64(c.field(r, 0));
        if (!stay) return "unparseable stay_id";
        auto item = parse_int64(c.field(r, 1));
        if (!item) return "unparseable itemid";
        auto ts = parse_timestamp(trim(c.field(r, 2)));
        if (!ts) return "unparseable starttime";
        out.encounter_id = *stay;
        out.code = std::to_string(*item);
        out.event_time = *ts;
        return std::nullopt;
      });
}

inline std::vector<IcuStayRow> load_icustays(const std::string& path, ParseReport& report) {
  std::unordered_set<std::int64_t> seen;
  return load_table<IcuStayRow>(
      path, schemas::icustays(), report,
      [&seen](const detail::ColumnIndex& c, const std::vector<std::string>& r,
              IcuStayRow& out) -> std::optional<std::string> {
        auto stay = parse_int64(c.field(r, 0));
        if (!stay) return "unparseable stay_id";
        auto hadm = parse_int64(c.field(r, 1));
        if (!hadm) return "unparseable hadm_id";
        auto in = parse_timestamp(trim(c.field(r, 2)));
        if (!in) return "unparseable intime";
        auto out_ts = parse_timestamp(trim(c.field(r, 3)));
        if (!out_ts) return "unparseable outtime";
        if (!seen.insert(*stay).second) return "duplicate stay_id";
        out.stay_id = *stay;
        out.hadm_id = *hadm;
        out.in_time = *in;
        out.out_time = *out_ts;
        return std::nullopt;
      });
}

// --- dataset-level loading ---------------------------------------------------

enum class Setting { ICU, Hospital };

inline std::string setting_name(Setting s) { return s == Setting::ICU ? "icu" : "hosp"; }

// The table set backing one pipeline run. For the ICU setting the dynamic
// events come from chartevents/inputevents/procedureevents keyed by stay_id;
// for the hospital setting from labevents/prescriptions/procedures_icd keyed
// by hadm_id. Diagnoses are admission-level in both settings.
struct Dataset {
  Setting setting = Setting::Hospital;
  std::vector<PatientRow> patients;
  std::vector<AdmissionRow> admissions;
  std::vector<DiagnosisRow> diagnoses;
  std::vector<IcuStayRow> icu_stays;          // ICU setting only
  std::vector<MeasurementRow> measurements;   // labs (hosp) or vitals (ICU)
  std::vector<MedicationRow> medications;
  std::vector<ProcedureRow> procedures;
  std::vector<ParseReport> parse_reports;
};

inline std::string require_table(const std::string& dir, const std::string& name) {
  auto path = find_table_file(dir, name);
  if (!path) throw DataError("table '" + name + "' not found in " + dir);
  return *path;
}

inline Dataset load_dataset(const std::string& dir, Setting setting) {
  Dataset ds;
  ds.setting = setting;
  ds.parse_reports.resize(setting == Setting::ICU ? 7 : 6);
  std::size_t i = 0;
  ds.patients = load_patients(require_table(dir, "patients"), ds.parse_reports[i++]);
  ds.admissions = load_admissions(require_table(dir, "admissions"), ds.parse_reports[i++]);
  ds.diagnoses = load_diagnoses(require_table(dir, "diagnoses_icd"), ds.parse_reports[i++]);
  if (setting == Setting::ICU) {
    ds.icu_stays = load_icustays(require_table(dir, "icustays"), ds.parse_reports[i++]);
    ds.measurements = load_chartevents(require_table(dir, "chartevents"), ds.parse_reports[i++]);
    ds.medications = load_inputevents(require_table(dir, "inputevents"), ds.parse_reports[i++]);
    ds.procedures =
        load_procedureevents(require_table(dir, "procedureevents"), ds.parse_reports[i++]);
  } else {
    ds.measurements = load_labevents(require_table(dir, "labevents"), ds.parse_reports[i++]);
    ds.medications = load_prescriptions(require_table(dir, "prescriptions"), ds.parse_reports[i++]);
    ds.procedures = load_procedures_icd(require_table(dir, "procedures_icd"), ds.parse_reports[i++]);
  }
  return ds;
}

// --- referential integrity ---------------------------------------------------

struct IntegrityReport {
  std::map<std::string, std::size_t> violations;  // category -> count
  std::vector<std::string> sample_messages;

  bool clean() const { return violations.empty(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : violations) n += v;
    return n;
  }

  void add(const std::string& category, const std::string& message) {
    ++violations[category];
    if (sample_messages.size() < 10) sample_messages.push_back(message);
  }
};

// Report-only: lists foreign-key violations without mutating any table.
inline IntegrityReport check_referential_integrity(const Dataset& ds) {
  IntegrityReport report;
  std::unordered_set<std::int64_t> subjects;
  subjects.reserve(ds.patients.size());
  for (const auto& p : ds.patients) subjects.insert(p.subject_id);

  std::unordered_set<std::int64_t> admissions;
  admissions.reserve(ds.admissions.size());
  for (const auto& a : ds.admissions) {
    admissions.insert(a.hadm_id);
    if (subjects.find(a.subject_id) == subjects.end()) {
      report.add("orphan_admission", "admission " + std::to_string(a.hadm_id) +
                                         " references absent subject " +
                                         std::to_string(a.subject_id));
    }
  }

  std::unordered_set<std::int64_t> stays;
  for (const auto& s : ds.icu_stays) {
    stays.insert(s.stay_id);
    if (admissions.find(s.hadm_id) == admissions.end()) {
      report.add("orphan_stay", "icu stay " + std::to_string(s.stay_id) +
                                    " references absent admission " + std::to_string(s.hadm_id));
    }
  }

  const auto& encounters = ds.setting == Setting::ICU ? stays : admissions;
  const char* encounter_kind = ds.setting == Setting::ICU ? "stay" : "admission";
  auto check_event = [&](std::int64_t encounter_id, const char* table) {
    if (encounters.find(encounter_id) == encounters.end()) {
      report.add("orphan_event", std::string(table) + " event references absent " +
                                     encounter_kind + " " + std::to_string(encounter_id));
    }
  };
  for (const auto& d : ds.diagnoses) {
    if (admissions.find(d.hadm_id) == admissions.end()) {
      report.add("orphan_event",
                 "diagnosis references absent admission " + std::to_string(d.hadm_id));
    }
  }
  for (const auto& m : ds.measurements) check_event(m.encounter_id, "measurement");
  for (const auto& m : ds.medications) check_event(m.encounter_id, "medication");
  for (const auto& p : ds.procedures) check_event(p.encounter_id, "procedure");
  return report;
}

}  // namespace ehrflow
