#include "tailaudit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_convert.hpp"

namespace tailaudit {

GradientDecomposition decompose_gradients(const Dataset& ds, const ModelParams& params,
                                          const LossSpec& loss) {
  BatchGradient bg = batch_gradient(params, ds, loss);
  if (!bg.common || !bg.rare) {
    throw EmptySubgroupError("decompose_gradients requires both groups");
  }

  GradientDecomposition d;
  double n = static_cast<double>(ds.size());
  d.pi_hat = static_cast<double>(bg.n_rare) / n;
  d.norm_common = bg.common->norm();
  d.norm_rare = bg.rare->norm();
  d.contribution_common = (1.0 - d.pi_hat) * d.norm_common;
  d.contribution_rare = d.pi_hat * d.norm_rare;
  d.ratio_bound = d.pi_hat / (1.0 - d.pi_hat);
  d.contribution_ratio = d.contribution_rare / d.contribution_common;
  d.total_norm = bg.total.norm();

  double expected_ratio = d.ratio_bound * (d.norm_rare / d.norm_common);
  double scale = std::max({1.0, std::abs(d.contribution_ratio), std::abs(expected_ratio)});
  d.identity_holds = std::abs(d.contribution_ratio - expected_ratio) <= 1e-12 * scale;
  d.literal_inequality_holds = d.norm_rare <= d.ratio_bound * d.norm_common;
  return d;
}

ConvergenceGap convergence_gap(const MixtureSpec& spec, const TeacherSpec& teacher,
                               const TrainConfig& cfg, const LossSpec& loss, std::size_t n,
                               std::uint64_t seed, const CovariateModel& covariates) {
  if (cfg.architecture != Architecture::linear) {
    throw ValidationError("convergence_gap requires the linear architecture");
  }

  std::uint64_t data_seed = mix_seed(seed, stream_tag("gap_data"));
  TrainConfig train_cfg = cfg;
  train_cfg.seed = mix_seed(seed, stream_tag("gap_train"));

  Dataset mixture_ds = sample_mixture(spec, teacher, n, data_seed, covariates);
  MixtureSpec common_only = spec;
  common_only.rare_weight = 0.0;
  Dataset common_ds = sample_mixture(common_only, teacher, n, data_seed, covariates);

  TrainedModel a = train_erm(mixture_ds, loss, train_cfg);
  TrainedModel b = train_erm(common_ds, loss, train_cfg);

  ConvergenceGap gap;
  gap.pi = spec.rare_weight;
  gap.epsilon = (a.params.values - b.params.values).norm();
  gap.seed = seed;
  gap.config_hash = a.config_hash;
  return gap;
}

namespace {

struct JointCounts {
  std::vector<std::size_t> joint;  // bins x 2
  std::vector<std::size_t> score_marginal;
  std::size_t label_marginal[2] = {0, 0};
  std::size_t n = 0;
  int bins = 0;
};

/// Equal-frequency binning by rank; ties keep their stable sort order.
std::vector<int> assign_bins(const std::vector<double>& scores, int bins) {
  std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<int> bin(n);
  for (std::size_t r = 0; r < n; ++r) {
    bin[order[r]] = static_cast<int>((r * static_cast<std::size_t>(bins)) / n);
  }
  return bin;
}

JointCounts count_joint(const std::vector<double>& scores, const std::vector<int>& labels,
                        int bins) {
  JointCounts c;
  c.bins = bins;
  c.n = scores.size();
  c.joint.assign(static_cast<std::size_t>(bins) * 2, 0);
  c.score_marginal.assign(bins, 0);
  std::vector<int> bin = assign_bins(scores, bins);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    c.joint[static_cast<std::size_t>(bin[i]) * 2 + labels[i]] += 1;
    c.score_marginal[bin[i]] += 1;
    c.label_marginal[labels[i]] += 1;
  }
  return c;
}

/// Plug-in MI with Miller-Madow correction, in nats. Not floored here.
double mi_miller_madow(const JointCounts& c) {
  double n = static_cast<double>(c.n);
  double mi = 0.0;
  std::size_t occupied_joint = 0, occupied_score = 0, occupied_label = 0;
  for (int b = 0; b < c.bins; ++b) {
    if (c.score_marginal[b] > 0) ++occupied_score;
    for (int y = 0; y < 2; ++y) {
      std::size_t nby = c.joint[static_cast<std::size_t>(b) * 2 + y];
      if (nby == 0) continue;
      ++occupied_joint;
      double pby = static_cast<double>(nby) / n;
      double pb = static_cast<double>(c.score_marginal[b]) / n;
      double py = static_cast<double>(c.label_marginal[y]) / n;
      mi += pby * std::log(pby / (pb * py));
    }
  }
  for (int y = 0; y < 2; ++y) {
    if (c.label_marginal[y] > 0) ++occupied_label;
  }
  // I = H(B) + H(Y) - H(B,Y); each plug-in entropy gains (m-1)/(2N).
  double correction = (static_cast<double>(occupied_score - 1) +
                       static_cast<double>(occupied_label - 1) -
                       static_cast<double>(occupied_joint - 1)) /
                      (2.0 * n);
  return mi + correction;
}

}  // namespace

MIEstimate estimate_group_mi(const Dataset& ds, Group group, int bins,
                             const std::optional<ScoreProjection>& projection) {
  if (bins < 2) throw ValidationError("estimate_group_mi requires bins >= 2");
  if (ds.dim != 1 && !projection) {
    throw ValidationError("estimate_group_mi on d > 1 requires a score projection");
  }
  if (projection && projection->weights.size() != ds.dim) {
    throw ValidationError("score projection length does not match dataset dim");
  }

  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : ds.records) {
    if (r.group != group) continue;
    double s = projection ? projection->weights.dot(r.features) + projection->bias
                          : r.features[0];
    scores.push_back(s);
    labels.push_back(r.label);
  }
  if (scores.size() < 1000) {
    throw ValidationError("estimate_group_mi requires >= 1000 records in the group");
  }

  MIEstimate est;
  est.group = group;
  est.bins = bins;
  est.sample_count = scores.size();
  est.mi_nats = std::max(0.0, mi_miller_madow(count_joint(scores, labels, bins)));

  // Jackknife over 10 contiguous folds: recompute leaving each fold out.
  constexpr int kFolds = 10;
  std::size_t n = scores.size();
  std::vector<double> leave_out(kFolds);
  for (int f = 0; f < kFolds; ++f) {
    std::size_t lo = n * static_cast<std::size_t>(f) / kFolds;
    std::size_t hi = n * static_cast<std::size_t>(f + 1) / kFolds;
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(n - (hi - lo));
    l.reserve(n - (hi - lo));
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= lo && i < hi) continue;
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    leave_out[f] = std::max(0.0, mi_miller_madow(count_joint(s, l, bins)));
  }
  double mean = 0.0;
  for (double v : leave_out) mean += v;
  mean /= kFolds;
  double ss = 0.0;
  for (double v : leave_out) ss += (v - mean) * (v - mean);
  est.standard_error = std::sqrt(static_cast<double>(kFolds - 1) / kFolds * ss);
  return est;
}

std::string decomposition_to_json(const GradientDecomposition& d) {
  return detail::decomposition_json(d).dump(2) + "\n";
}

std::string mi_to_json(const std::vector<MIEstimate>& estimates) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : estimates) arr.push_back(detail::mi_json(e));
  return arr.dump(2) + "\n";
}

std::string gap_to_json(const ConvergenceGap& gap) {
  return detail::gap_json(gap).dump(2) + "\n";
}

}  // namespace tailaudit
