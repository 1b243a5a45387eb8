#include "tailaudit/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "compensated.hpp"

namespace tailaudit {

std::size_t PredictionSet::count(Group g) const {
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.group == g) ++n;
  }
  return n;
}

std::vector<PredRecord> PredictionSet::subset(Group g) const {
  std::vector<PredRecord> out;
  for (const auto& r : records) {
    if (r.group == g) out.push_back(r);
  }
  return out;
}

void PredictionSet::validate() const {
  if (records.empty()) throw ValidationError("prediction set is empty");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!std::isfinite(r.p_hat) || r.p_hat < 0.0 || r.p_hat > 1.0) {
      throw ValidationError("p_hat out of [0,1] at record " + std::to_string(i));
    }
    if (r.y != 0 && r.y != 1) {
      throw ValidationError("label must be 0 or 1 at record " + std::to_string(i));
    }
  }
}

MetricKind MetricKind::sensitivity_at_specificity(double s) {
  MetricKind m;
  m.kind = Kind::sensitivity_at_specificity;
  m.specificity = s;
  m.validate();
  return m;
}

std::string MetricKind::name() const {
  if (kind == Kind::auroc) return "auroc";
  return "sensitivity_at_specificity(" + format_double(specificity) + ")";
}

void MetricKind::validate() const {
  if (kind == Kind::sensitivity_at_specificity) {
    if (!(specificity > 0.0 && specificity < 1.0)) {
      throw ValidationError("specificity target must lie in (0, 1)");
    }
  }
}

double auroc(std::span<const PredRecord> preds) {
  std::size_t n = preds.size();
  std::size_t n_pos = 0;
  for (const auto& r : preds) n_pos += static_cast<std::size_t>(r.y);
  std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("AUROC undefined: group has a single label");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return preds[a].p_hat < preds[b].p_hat; });

  // Midranks over tie runs; sum ranks of positives.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && preds[order[j + 1]].p_hat == preds[order[i]].p_hat) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (preds[order[k]].y == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double sensitivity_at_specificity(std::span<const PredRecord> preds, double s) {
  std::vector<double> neg, pos;
  for (const auto& r : preds) {
    (r.y == 1 ? pos : neg).push_back(r.p_hat);
  }
  if (pos.empty() || neg.empty()) {
    throw UndefinedMetricError("sensitivity_at_specificity undefined: missing a label");
  }
  std::sort(neg.begin(), neg.end());

  // Need at least ceil(s * n_neg) negatives strictly below the threshold.
  std::size_t needed = static_cast<std::size_t>(std::ceil(s * static_cast<double>(neg.size())));
  double threshold;
  if (needed == 0) {
    threshold = -std::numeric_limits<double>::infinity();
  } else {
    double boundary = neg[needed - 1];
    // Most permissive observed threshold above the boundary negative.
    threshold = std::numeric_limits<double>::infinity();
    for (const auto& r : preds) {
      if (r.p_hat > boundary && r.p_hat < threshold) threshold = r.p_hat;
    }
  }
  std::size_t detected = 0;
  for (double p : pos) {
    if (p >= threshold) ++detected;
  }
  return static_cast<double>(detected) / static_cast<double>(pos.size());
}

GroupPerformance group_performance(const PredictionSet& preds, const MetricKind& metric) {
  preds.validate();
  metric.validate();

  GroupPerformance gp;
  gp.metric = metric;
  for (Group g : {Group::common, Group::rare}) {
    std::vector<PredRecord> sub = preds.subset(g);
    std::size_t n = sub.size();
    if (g == Group::common) {
      gp.n_common = n;
    } else {
      gp.n_rare = n;
    }
    if (n == 0) continue;
    double value = metric.kind == MetricKind::Kind::auroc
                       ? auroc(sub)
                       : sensitivity_at_specificity(sub, metric.specificity);
    if (g == Group::common) {
      gp.p_common = value;
    } else {
      gp.p_rare = value;
    }
  }
  return gp;
}

double rcpg(const GroupPerformance& gp) {
  if (!gp.p_common || !gp.p_rare) {
    throw EmptySubgroupError("rcpg requires both groups to be reported");
  }
  return *gp.p_common - *gp.p_rare;
}

CalibrationReport rcce(const PredictionSet& preds, int bins, std::size_t min_bin_count) {
  preds.validate();
  if (bins < 2) throw ValidationError("rcce requires at least 2 bins");
  std::vector<PredRecord> rare = preds.subset(Group::rare);
  if (rare.empty()) throw EmptySubgroupError("rcce: rare subgroup is empty");
  if (rare.size() < static_cast<std::size_t>(bins)) {
    throw ValidationError("rcce requires rare count >= bins");
  }

  std::vector<CompensatedSum> conf_sum(bins);
  std::vector<std::size_t> counts(bins, 0), correct(bins, 0);
  for (const auto& r : rare) {
    double conf = std::max(r.p_hat, 1.0 - r.p_hat);
    int b = std::min(static_cast<int>(conf * bins), bins - 1);
    conf_sum[b].add(conf);
    counts[b] += 1;
    correct[b] += ((r.p_hat >= 0.5 ? 1 : 0) == r.y) ? 1 : 0;
  }

  CalibrationReport rep;
  rep.min_bin_count = min_bin_count;
  rep.n_rare = rare.size();
  double n = static_cast<double>(rare.size());
  CompensatedSum err, excluded;
  for (int b = 0; b < bins; ++b) {
    CalibrationBin bin;
    bin.lo = static_cast<double>(b) / bins;
    bin.hi = static_cast<double>(b + 1) / bins;
    bin.count = counts[b];
    if (counts[b] > 0) {
      bin.mean_confidence = conf_sum[b].value() / static_cast<double>(counts[b]);
      bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(counts[b]);
      bin.included = counts[b] >= min_bin_count;
      if (bin.included) {
        err.add(static_cast<double>(counts[b]) / n *
                std::abs(bin.accuracy - bin.mean_confidence));
      } else {
        excluded.add(static_cast<double>(counts[b]) / n);
      }
    }
    rep.bins.push_back(bin);
  }
  rep.rcce = err.value();
  rep.excluded_mass = excluded.value();
  return rep;
}

RarityRecord rarity_index(const std::string& condition_id, double prevalence,
                          double clinical_utility_score) {
  if (!(prevalence > 0.0 && prevalence <= 1.0)) {
    throw ValidationError("prevalence must lie in (0, 1]");
  }
  if (!(clinical_utility_score > 0.0)) {
    throw ValidationError("clinical_utility_score must be positive");
  }
  RarityRecord r;
  r.condition_id = condition_id;
  r.prevalence = prevalence;
  r.clinical_utility_score = clinical_utility_score;
  r.rarity_index = clinical_utility_score / prevalence;
  r.flagged = r.rarity_index > 100.0;
  return r;
}

BootstrapInterval bootstrap_ci(const PredictionSet& preds, const MetricClosure& metric,
                               int resamples, std::uint64_t seed) {
  preds.validate();
  if (resamples < 100) throw ValidationError("bootstrap requires resamples >= 100");

  std::optional<double> point = metric(preds);
  if (!point) {
    throw InstabilityError("bootstrap metric undefined on the original sample");
  }

  std::vector<std::size_t> common_idx, rare_idx;
  for (std::size_t i = 0; i < preds.records.size(); ++i) {
    (preds.records[i].group == Group::rare ? rare_idx : common_idx).push_back(i);
  }

  std::vector<double> values;
  values.reserve(resamples);
  std::size_t failed = 0;
  PredictionSet resample;
  resample.records.resize(preds.records.size());
  for (int r = 0; r < resamples; ++r) {
    RngStream rng = RngStream::child(seed, static_cast<std::uint64_t>(r));
    std::size_t k = 0;
    for (std::size_t j = 0; j < common_idx.size(); ++j) {
      resample.records[k++] = preds.records[common_idx[rng.index(common_idx.size())]];
    }
    for (std::size_t j = 0; j < rare_idx.size(); ++j) {
      resample.records[k++] = preds.records[rare_idx[rng.index(rare_idx.size())]];
    }
    std::optional<double> v = metric(resample);
    if (v) {
      values.push_back(*v);
    } else {
      ++failed;
    }
  }
  if (static_cast<double>(failed) > 0.2 * static_cast<double>(resamples)) {
    throw InstabilityError("bootstrap metric undefined on " + std::to_string(failed) + " of " +
                           std::to_string(resamples) + " resamples");
  }

  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    // Linear interpolation between order statistics.
    double pos = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };

  BootstrapInterval ci;
  ci.point = *point;
  ci.lower = quantile(0.025);
  ci.upper = quantile(0.975);
  ci.resamples = resamples;
  ci.seed = seed;
  return ci;
}

MetricClosure rcpg_closure(const MetricKind& metric) {
  return [metric](const PredictionSet& preds) -> std::optional<double> {
    try {
      return rcpg(group_performance(preds, metric));
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  };
}

std::string predictions_to_csv(const PredictionSet& preds) {
  std::string out = "p_hat,y,group\n";
  for (const auto& r : preds.records) {
    out += format_double(r.p_hat);
    out += ',';
    out += std::to_string(r.y);
    out += ',';
    out += group_name(r.group);
    out += '\n';
  }
  return out;
}

PredictionSet predictions_from_csv(std::string_view text) {
  PredictionSet preds;
  std::size_t line_no = 0;
  std::size_t start = 0;
  auto next_line = [&](std::string_view& line) -> bool {
    if (start >= text.size()) return false;
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    line = text.substr(start, pos - start);
    start = pos + 1;
    ++line_no;
    return true;
  };

  std::string_view header;
  if (!next_line(header) || header != "p_hat,y,group") {
    throw SchemaError("predictions header must be exactly 'p_hat,y,group'", 1);
  }
  std::string_view line;
  while (next_line(line)) {
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = c1 == std::string_view::npos ? std::string_view::npos : line.find(',', c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos ||
        line.find(',', c2 + 1) != std::string_view::npos) {
      throw SchemaError("predictions row must have exactly 3 fields", line_no);
    }
    PredRecord r;
    std::string_view p_field = line.substr(0, c1);
    double p = 0.0;
    auto res = std::from_chars(p_field.data(), p_field.data() + p_field.size(), p);
    if (res.ec != std::errc{} || res.ptr != p_field.data() + p_field.size()) {
      throw SchemaError("malformed p_hat field", line_no);
    }
    r.p_hat = p;
    std::string_view y_field = line.substr(c1 + 1, c2 - c1 - 1);
    if (y_field == "0") {
      r.y = 0;
    } else if (y_field == "1") {
      r.y = 1;
    } else {
      throw SchemaError("label must be 0 or 1", line_no);
    }
    try {
      r.group = parse_group(line.substr(c2 + 1));
    } catch (const ValidationError& e) {
      throw SchemaError(e.what(), line_no);
    }
    preds.records.push_back(r);
  }
  if (preds.records.empty()) {
    throw SchemaError("predictions file has a header but no rows", line_no);
  }
  preds.validate();
  return preds;
}

void write_predictions_csv(const PredictionSet& preds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << predictions_to_csv(preds);
}

PredictionSet read_predictions_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SchemaError("cannot open predictions file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return predictions_from_csv(ss.str());
}

}  // namespace tailaudit
