#pragma once

// Medical code normalization: ICD-9 -> ICD-10 conversion, ICD-10 rooting
// (first three characters), NDC 11-digit normalization, and NDC -> drug name
// mapping. All tables are immutable after load; lookups are read-only.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "ehrflow/core.hpp"
#include "ehrflow/csv.hpp"

namespace ehrflow {

// ICD-9 -> ICD-10 equivalence map. One-to-many source rows are resolved at
// load time by keeping the lexicographically smallest target, so the loaded
// table is one-to-one regardless of input row order.
class IcdMapTable {
 public:
  IcdMapTable() = default;

  static IcdMapTable from_file(const std::string& path) {
    IcdMapTable table;
    CsvReader reader(path);
    auto header = reader.next();
    if (!header) throw DataError("icd map file is empty: " + path);
    while (auto record = reader.next()) {
      if (record->size() < 2) continue;
      const std::string icd9 = to_upper(trim((*record)[0]));
      const std::string icd10 = to_upper(trim((*record)[1]));
      if (icd9.empty() || icd10.empty()) continue;
      table.insert(icd9, icd10);
    }
    return table;
  }

  void insert(const std::string& icd9, const std::string& icd10) {
    auto [it, inserted] = entries_.emplace(icd9, icd10);
    if (!inserted && icd10 < it->second) it->second = icd10;
  }

  std::optional<std::string> lookup(std::string_view icd9) const {
    auto it = entries_.find(to_upper(icd9));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::string> entries_;
};

struct GroupingTally {
  std::size_t icd9_unmapped = 0;
  std::size_t malformed_codes = 0;
  std::size_t ndc_malformed = 0;
  std::size_t ndc_unmapped = 0;
};

// Converts one diagnosis code to ICD-10. Version-10 codes pass through
// unchanged; version-9 codes are exact-key lookups. Absent keys return
// nullopt (the caller drops the code and tallies it).
inline std::optional<std::string> convert_icd9_to_icd10(std::string_view code, int icd_version,
                                                        const IcdMapTable& map,
                                                        GroupingTally* tally = nullptr) {
  if (icd_version == 10) return to_upper(code);
  auto mapped = map.lookup(code);
  if (!mapped && tally != nullptr) ++tally->icd9_unmapped;
  return mapped;
}

// First three characters, upper-cased. Codes shorter than 3 are malformed.
inline std::optional<std::string> icd10_root(std::string_view code,
                                             GroupingTally* tally = nullptr) {
  if (code.size() < 3) {
    if (tally != nullptr) ++tally->malformed_codes;
    return std::nullopt;
  }
  return to_upper(code.substr(0, 3));
}

// Zero-pads a segmented NDC (labeler-product-package with segment lengths
// {4,5}-{3,4}-{1,2}) to the 5-4-2 form and concatenates: 11 digits out.
inline std::optional<std::string> normalize_ndc_11(std::string_view raw,
                                                   GroupingTally* tally = nullptr) {
  auto malformed = [&]() -> std::optional<std::string> {
    if (tally != nullptr) ++tally->ndc_malformed;
    return std::nullopt;
  };
  const std::string_view s = trim(raw);
  std::string segments[3];
  std::size_t seg = 0;
  for (char c : s) {
    if (c == '-') {
      if (++seg > 2) return malformed();
    } else if (c >= '0' && c <= '9') {
      segments[seg].push_back(c);
    } else {
      return malformed();
    }
  }
  if (seg != 2) return malformed();
  const std::size_t widths[3] = {5, 4, 2};
  const std::size_t minimums[3] = {4, 3, 1};
  std::string out;
  out.reserve(11);
  for (int i = 0; i < 3; ++i) {
    if (segments[i].size() < minimums[i] || segments[i].size() > widths[i]) return malformed();
    out.append(widths[i] - segments[i].size(), '0');
    out.append(segments[i]);
  }
  return out;
}

// Directory keyed on the labeler (digits 1-5) and product (digits 6-9)
// portions of an 11-digit NDC; the package segment is ignored.
class NdcDirectory {
 public:
  NdcDirectory() = default;

  static NdcDirectory from_file(const std::string& path) {
    NdcDirectory dir;
    CsvReader reader(path);
    auto header = reader.next();
    if (!header) throw DataError("ndc directory file is empty: " + path);
    while (auto record = reader.next()) {
      if (record->size() < 3) continue;
      dir.insert(std::string(trim((*record)[0])), std::string(trim((*record)[1])),
                 std::string(trim((*record)[2])));
    }
    return dir;
  }

  void insert(const std::string& labeler, const std::string& product, const std::string& name) {
    entries_[labeler + product] = name;
  }

  std::optional<std::string> lookup(std::string_view ndc11) const {
    if (ndc11.size() != 11) return std::nullopt;
    auto it = entries_.find(std::string(ndc11.substr(0, 9)));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, std::string> entries_;
};

inline std::optional<std::string> map_ndc_to_nonproprietary(std::string_view ndc11,
                                                            const NdcDirectory& dir,
                                                            GroupingTally* tally = nullptr) {
  auto name = dir.lookup(ndc11);
  if (!name && tally != nullptr) ++tally->ndc_unmapped;
  return name;
}

}  // namespace ehrflow
