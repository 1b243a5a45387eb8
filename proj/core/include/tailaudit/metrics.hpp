#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailaudit/data.hpp"

namespace tailaudit {

struct PredRecord {
  double p_hat = 0.5;
  int y = 0;
  Group group = Group::common;
};

struct PredictionSet {
  std::vector<PredRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t count(Group g) const;
  std::vector<PredRecord> subset(Group g) const;
  void validate() const;
};

struct MetricKind {
  enum class Kind { auroc, sensitivity_at_specificity };
  Kind kind = Kind::auroc;
  double specificity = 0.95;  // only for sensitivity_at_specificity

  static MetricKind auroc() { return {}; }
  static MetricKind sensitivity_at_specificity(double s);
  std::string name() const;
  void validate() const;
};

/// AUROC by the rank statistic with midrank tie handling. Throws
/// UndefinedMetricError when either label is missing.
double auroc(std::span<const PredRecord> preds);

/// Sensitivity at the most permissive threshold whose specificity is >= s
/// (predict positive iff p_hat >= threshold), i.e. maximal sensitivity
/// subject to the specificity floor. Throws UndefinedMetricError when a
/// label is missing.
double sensitivity_at_specificity(std::span<const PredRecord> preds, double s);

struct GroupPerformance {
  MetricKind metric;
  std::optional<double> p_common;
  std::optional<double> p_rare;
  std::size_t n_common = 0;
  std::size_t n_rare = 0;
};

/// Per-group metric values; a group absent from preds is reported absent.
GroupPerformance group_performance(const PredictionSet& preds, const MetricKind& metric);

/// Rare Case Performance Gap: p_common - p_rare. Requires both groups.
double rcpg(const GroupPerformance& gp);

struct CalibrationBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
  bool included = false;  // count >= min_bin_count
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double rcce = 0.0;
  std::size_t min_bin_count = 5;
  std::size_t n_rare = 0;
  double excluded_mass = 0.0;  // fraction of records in bins below min_bin_count
};

/// Rare-case calibration error. Confidence = max(p_hat, 1-p_hat),
/// correctness = (p_hat >= 0.5) == y; equal-width confidence bins on [0,1];
/// rcce = sum_b (count_b/N)|acc_b - conf_b| over bins with count >=
/// min_bin_count.
CalibrationReport rcce(const PredictionSet& preds, int bins = 15, std::size_t min_bin_count = 5);

struct RarityRecord {
  std::string condition_id;
  double prevalence = 1.0;
  double clinical_utility_score = 1.0;
  double rarity_index = 1.0;
  bool flagged = false;  // rarity_index > 100, strict
};

RarityRecord rarity_index(const std::string& condition_id, double prevalence,
                          double clinical_utility_score);

struct BootstrapInterval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;
  std::uint64_t seed = 0;
};

/// A metric closure returns nullopt where the metric is undefined on a
/// resample.
using MetricClosure = std::function<std::optional<double>(const PredictionSet&)>;

/// Nonparametric bootstrap, resampling records with replacement stratified
/// by group (per-group counts preserved); percentile 2.5/97.5 interval.
/// Throws InstabilityError when the metric is undefined on the original
/// sample or on more than 20% of resamples.
BootstrapInterval bootstrap_ci(const PredictionSet& preds, const MetricClosure& metric,
                               int resamples, std::uint64_t seed);

/// RCPG under the given metric kind as a bootstrap closure.
MetricClosure rcpg_closure(const MetricKind& metric);

/// Predictions CSV with header p_hat,y,group.
std::string predictions_to_csv(const PredictionSet& preds);
PredictionSet predictions_from_csv(std::string_view text);
void write_predictions_csv(const PredictionSet& preds, const std::string& path);
PredictionSet read_predictions_csv(const std::string& path);

}  // namespace tailaudit
