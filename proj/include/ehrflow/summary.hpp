#pragma once

// Per-code summary statistics (mean frequency per admission, missing-value
// fraction) that guide feature selection, plus keep-list application.

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "ehrflow/core.hpp"
#include "ehrflow/csv.hpp"

namespace ehrflow {

struct FeatureSummaryRow {
  std::string code;
  double mean_frequency_per_admission = 0.0;
  double missing_fraction = 0.0;
  std::size_t n_admissions_present = 0;
};

using FeatureSummary = std::vector<FeatureSummaryRow>;

// Streaming accumulator for one feature family. Codes absent from the cohort
// are never listed; the denominator of mean_frequency is the number of cohort
// admissions, present or not.
class SummaryBuilder {
 public:
  explicit SummaryBuilder(std::size_t n_cohort_admissions) : n_admissions_(n_cohort_admissions) {}

  void add(const std::string& code, std::size_t sample_index, bool value_missing) {
    auto& acc = per_code_[code];
    ++acc.occurrences;
    if (value_missing) ++acc.missing;
    acc.samples.insert(sample_index);
  }

  // Sorted by descending mean frequency (code ascending on ties), so human
  // review starts at the most informative codes.
  FeatureSummary build() const {
    FeatureSummary rows;
    rows.reserve(per_code_.size());
    for (const auto& [code, acc] : per_code_) {
      FeatureSummaryRow row;
      row.code = code;
      row.mean_frequency_per_admission =
          n_admissions_ == 0 ? 0.0
                             : static_cast<double>(acc.occurrences) /
                                   static_cast<double>(n_admissions_);
      row.missing_fraction =
          acc.occurrences == 0
              ? 0.0
              : static_cast<double>(acc.missing) / static_cast<double>(acc.occurrences);
      row.n_admissions_present = acc.samples.size();
      rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const FeatureSummaryRow& a, const FeatureSummaryRow& b) {
      if (a.mean_frequency_per_admission != b.mean_frequency_per_admission) {
        return a.mean_frequency_per_admission > b.mean_frequency_per_admission;
      }
      return a.code < b.code;
    });
    return rows;
  }

  bool empty() const { return per_code_.empty(); }

 private:
  struct Accum {
    std::size_t occurrences = 0;
    std::size_t missing = 0;
    std::unordered_set<std::size_t> samples;
  };
  std::size_t n_admissions_;
  std::map<std::string, Accum> per_code_;
};

inline void write_summary_csv(const std::string& path, const FeatureSummary& summary) {
  CsvWriter out(path);
  out.write_row({"code", "mean_frequency_per_admission", "missing_fraction",
                 "n_admissions_present"});
  for (const auto& row : summary) {
    out.write_row({row.code, format_double(row.mean_frequency_per_admission),
                   format_double(row.missing_fraction), std::to_string(row.n_admissions_present)});
  }
  out.close();
}

// Keep-list file: one code per line, '#' comments allowed.
inline std::vector<std::string> load_keep_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open keep-list: " + path);
  std::vector<std::string> codes;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    codes.emplace_back(t);
  }
  return codes;
}

struct SelectionResult {
  std::vector<std::string> kept;  // in `available` order
  std::vector<std::string> warnings;
};

// Projection onto the keep list. No list keeps everything; a listed code
// absent from the data produces a warning, not an error.
inline SelectionResult apply_selection(const std::vector<std::string>& available,
                                       const std::optional<std::vector<std::string>>& keep_list,
                                       const std::string& family) {
  SelectionResult result;
  if (!keep_list) {
    result.kept = available;
    return result;
  }
  const std::set<std::string> wanted(keep_list->begin(), keep_list->end());
  std::set<std::string> present;
  for (const auto& code : available) {
    if (wanted.count(code) > 0) result.kept.push_back(code);
    present.insert(code);
  }
  for (const auto& code : wanted) {
    if (present.count(code) == 0) {
      result.warnings.push_back("selection: code '" + code + "' not present in family " + family);
    }
  }
  return result;
}

}  // namespace ehrflow
