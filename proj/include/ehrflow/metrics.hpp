#pragma once

// Discrimination, calibration, and group-fairness metrics. Rates with a zero
// denominator are NotDefined (empty optional) and render as NaN; fairness
// gap summaries are max-min differences over the groups where the rate is
// defined.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ehrflow/cohort.hpp"
#include "ehrflow/core.hpp"
#include "ehrflow/csv.hpp"

namespace ehrflow {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }

  static ConfusionCounts from(const std::vector<int>& labels, const std::vector<double>& scores,
                              double threshold) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool predicted = scores[i] >= threshold;
      if (labels[i] == 1) {
        predicted ? ++c.tp : ++c.fn;
      } else {
        predicted ? ++c.fp : ++c.tn;
      }
    }
    return c;
  }

  static std::optional<double> rate(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }

  std::optional<double> tpr() const { return rate(tp, tp + fn); }
  std::optional<double> tnr() const { return rate(tn, tn + fp); }
  std::optional<double> fpr() const { return rate(fp, fp + tn); }
  std::optional<double> fnr() const { return rate(fn, fn + tp); }
  std::optional<double> precision() const { return rate(tp, tp + fp); }
  std::optional<double> npv() const { return rate(tn, tn + fn); }
  std::optional<double> positive_rate() const { return rate(tp + fp, total()); }
  double accuracy() const {
    return static_cast<double>(tp + tn) / static_cast<double>(total());
  }
};

struct MetricReport {
  std::optional<double> auroc;
  std::optional<double> auprc;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> npv;
  double ece = 0.0;
  double mce = 0.0;
  double threshold = 0.5;
  int calibration_bins = 10;
};

inline ConfusionCounts confusion_metrics(const std::vector<int>& labels,
                                         const std::vector<double>& scores, double threshold) {
  if (labels.empty()) throw DataError("cannot compute metrics on empty input");
  if (labels.size() != scores.size()) throw DataError("labels/scores length mismatch");
  return ConfusionCounts::from(labels, scores, threshold);
}

// Mann-Whitney AUROC: the probability that a random positive outranks a
// random negative, with ties counted one half. Computed from tie-averaged
// ranks; nullopt when only one class is present.
inline std::optional<double> auroc(const std::vector<int>& labels,
                                   const std::vector<double>& scores) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      pos_rank_sum += rank[k];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Step-interpolated area under the precision-recall curve: sum of
// precision * recall-increment over descending distinct score cuts.
inline std::optional<double> auprc(const std::vector<int>& labels,
                                   const std::vector<double>& scores) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::size_t total_pos = 0;
  for (int y : labels) total_pos += static_cast<std::size_t>(y);
  if (total_pos == 0 || total_pos == n) return std::nullopt;

  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      labels[order[k]] == 1 ? ++tp : ++fp;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

// Equal-width calibration bins over [0,1]. Per non-empty bin the gap is
// |mean score - positive rate|; ECE is the count-weighted average gap and
// MCE the maximum gap.
inline std::pair<double, double> calibration(const std::vector<int>& labels,
                                             const std::vector<double>& scores, int n_bins) {
  if (n_bins < 1) throw ConfigError("evaluation.calibration_bins must be at least 1");
  std::vector<double> score_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
  std::vector<std::size_t> positives(static_cast<std::size_t>(n_bins), 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    int b = static_cast<int>(scores[i] * n_bins);
    if (b >= n_bins) b = n_bins - 1;  // score 1.0 joins the top bin
    if (b < 0) b = 0;
    score_sum[static_cast<std::size_t>(b)] += scores[i];
    ++count[static_cast<std::size_t>(b)];
    positives[static_cast<std::size_t>(b)] += static_cast<std::size_t>(labels[i]);
  }
  double ece = 0.0, mce = 0.0;
  const double n = static_cast<double>(scores.size());
  for (int b = 0; b < n_bins; ++b) {
    const auto idx = static_cast<std::size_t>(b);
    if (count[idx] == 0) continue;
    const double mean_score = score_sum[idx] / static_cast<double>(count[idx]);
    const double pos_rate = static_cast<double>(positives[idx]) / static_cast<double>(count[idx]);
    const double gap = std::abs(mean_score - pos_rate);
    ece += (static_cast<double>(count[idx]) / n) * gap;
    mce = std::max(mce, gap);
  }
  return {ece, mce};
}

inline MetricReport metric_report(const std::vector<int>& labels,
                                  const std::vector<double>& scores, double threshold,
                                  int calibration_bins) {
  const ConfusionCounts c = confusion_metrics(labels, scores, threshold);
  MetricReport report;
  report.threshold = threshold;
  report.calibration_bins = calibration_bins;
  report.auroc = auroc(labels, scores);
  report.auprc = auprc(labels, scores);
  report.accuracy = c.accuracy();
  report.precision = c.precision();
  report.recall = c.tpr();
  report.npv = c.npv();
  const auto [ece, mce] = calibration(labels, scores, calibration_bins);
  report.ece = ece;
  report.mce = mce;
  return report;
}

// --- fairness -------------------------------------------------------------------

struct GroupRates {
  std::string group;
  std::size_t n = 0;
  std::optional<double> tpr, tnr, fpr, fnr, pr;
};

struct AttributeReport {
  std::string attribute;
  std::vector<GroupRates> groups;
  double demographic_parity_gap = 0.0;   // max-min positive rate
  double equalized_opportunity_gap = 0.0;  // max-min TPR
  double equalized_odds_gap = 0.0;         // max of TPR gap and FPR gap
  std::vector<std::string> warnings;
};

struct FairnessReport {
  std::vector<AttributeReport> attributes;
};

namespace detail {

inline double defined_gap(const std::vector<std::optional<double>>& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t defined = 0;
  for (const auto& v : values) {
    if (v) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
      ++defined;
    }
  }
  return defined >= 2 ? hi - lo : 0.0;
}

}  // namespace detail

// Per-group confusion rates for one sensitive attribute, plus the three gap
// summaries. Groups appear in sorted name order.
inline AttributeReport fairness_attribute(const std::string& attribute,
                                          const std::vector<int>& labels,
                                          const std::vector<double>& scores, double threshold,
                                          const std::vector<std::string>& group_of_sample) {
  AttributeReport report;
  report.attribute = attribute;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < group_of_sample.size(); ++i) {
    members[group_of_sample[i]].push_back(i);
  }
  std::vector<std::optional<double>> prs, tprs, fprs;
  for (const auto& [group, idx] : members) {
    ConfusionCounts c;
    for (std::size_t i : idx) {
      const bool predicted = scores[i] >= threshold;
      if (labels[i] == 1) {
        predicted ? ++c.tp : ++c.fn;
      } else {
        predicted ? ++c.fp : ++c.tn;
      }
    }
    GroupRates g;
    g.group = group;
    g.n = idx.size();
    g.tpr = c.tpr();
    g.tnr = c.tnr();
    g.fpr = c.fpr();
    g.fnr = c.fnr();
    g.pr = c.positive_rate();
    prs.push_back(g.pr);
    tprs.push_back(g.tpr);
    fprs.push_back(g.fpr);
    report.groups.push_back(std::move(g));
  }
  if (report.groups.size() < 2) {
    report.warnings.push_back("attribute '" + attribute +
                              "' has a single group; fairness gaps are trivially 0");
  }
  report.demographic_parity_gap = detail::defined_gap(prs);
  report.equalized_opportunity_gap = detail::defined_gap(tprs);
  report.equalized_odds_gap =
      std::max(detail::defined_gap(tprs), detail::defined_gap(fprs));
  return report;
}

// Decade bands matching the report layout; adults start at 18.
inline std::string age_band(int age) {
  if (age < 30) return "18-30";
  if (age >= 90) return "90-100";
  const int lo = age / 10 * 10;
  return std::to_string(lo) + "-" + std::to_string(lo + 10);
}

// The three audited attributes: ethnicity, gender, age decade.
inline FairnessReport fairness(const std::vector<int>& labels, const std::vector<double>& scores,
                               double threshold, const std::vector<Demographics>& demographics) {
  std::vector<std::string> ethnicity, gender, age;
  ethnicity.reserve(demographics.size());
  for (const auto& d : demographics) {
    ethnicity.push_back(d.ethnicity);
    gender.push_back(gender_name(d.gender));
    age.push_back(age_band(d.age));
  }
  FairnessReport report;
  report.attributes.push_back(fairness_attribute("ethnicity", labels, scores, threshold, ethnicity));
  report.attributes.push_back(fairness_attribute("gender", labels, scores, threshold, gender));
  report.attributes.push_back(fairness_attribute("age", labels, scores, threshold, age));
  return report;
}

// --- rendering ------------------------------------------------------------------

inline std::string render_rate(const std::optional<double>& v) {
  return v ? format_fixed(*v, 4) : "NaN";
}

// fairness.csv layout: one row per (attribute, group) with 4-decimal rates;
// undefined rates render as NaN.
inline void render_fairness_report(const FairnessReport& report, const std::string& path) {
  CsvWriter out(path);
  out.write_row({"sensitive_attribute", "group", "TPR", "TNR", "FPR", "FNR", "PR"});
  for (const auto& attr : report.attributes) {
    for (const auto& g : attr.groups) {
      out.write_row({attr.attribute, g.group, render_rate(g.tpr), render_rate(g.tnr),
                     render_rate(g.fpr), render_rate(g.fnr), render_rate(g.pr)});
    }
  }
  out.close();
}

inline void write_metrics_csv(const MetricReport& report, const std::string& path) {
  CsvWriter out(path);
  out.write_row({"metric", "value"});
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : "NaN"; };
  out.write_row({"auroc", opt(report.auroc)});
  out.write_row({"auprc", opt(report.auprc)});
  out.write_row({"accuracy", format_double(report.accuracy)});
  out.write_row({"precision", opt(report.precision)});
  out.write_row({"recall", opt(report.recall)});
  out.write_row({"npv", opt(report.npv)});
  out.write_row({"ece", format_double(report.ece)});
  out.write_row({"mce", format_double(report.mce)});
  out.write_row({"threshold", format_double(report.threshold)});
  out.close();
}

inline void write_fairness_gaps_csv(const FairnessReport& report, const std::string& path) {
  CsvWriter out(path);
  out.write_row({"sensitive_attribute", "demographic_parity_gap", "equalized_opportunity_gap",
                 "equalized_odds_gap"});
  for (const auto& attr : report.attributes) {
    out.write_row({attr.attribute, format_fixed(attr.demographic_parity_gap, 4),
                   format_fixed(attr.equalized_opportunity_gap, 4),
                   format_fixed(attr.equalized_odds_gap, 4)});
  }
  out.close();
}

}  // namespace ehrflow
