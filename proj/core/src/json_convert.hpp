#pragma once

#include <nlohmann/json.hpp>

#include "tailaudit/analysis.hpp"
#include "tailaudit/metrics.hpp"

namespace tailaudit::detail {

inline nlohmann::json performance_json(const GroupPerformance& gp) {
  nlohmann::json j;
  j["metric"] = gp.metric.name();
  j["n_common"] = gp.n_common;
  j["n_rare"] = gp.n_rare;
  if (gp.p_common) j["p_common"] = *gp.p_common;
  if (gp.p_rare) j["p_rare"] = *gp.p_rare;
  return j;
}

inline nlohmann::json interval_json(const BootstrapInterval& ci) {
  return {{"point", ci.point},
          {"lower", ci.lower},
          {"upper", ci.upper},
          {"resamples", ci.resamples},
          {"seed", ci.seed}};
}

inline nlohmann::json calibration_json(const CalibrationReport& cal) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : cal.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy},
                    {"count", b.count},
                    {"included", b.included}});
  }
  return {{"rcce", cal.rcce},
          {"n_rare", cal.n_rare},
          {"min_bin_count", cal.min_bin_count},
          {"excluded_mass", cal.excluded_mass},
          {"bins", bins}};
}

inline nlohmann::json decomposition_json(const GradientDecomposition& d) {
  return {{"pi_hat", d.pi_hat},
          {"norm_common", d.norm_common},
          {"norm_rare", d.norm_rare},
          {"contribution_common", d.contribution_common},
          {"contribution_rare", d.contribution_rare},
          {"ratio_bound", d.ratio_bound},
          {"contribution_ratio", d.contribution_ratio},
          {"total_norm", d.total_norm},
          {"identity_holds", d.identity_holds},
          {"literal_inequality_holds", d.literal_inequality_holds}};
}

inline nlohmann::json mi_json(const MIEstimate& e) {
  return {{"group", std::string(group_name(e.group))},
          {"mi_nats", e.mi_nats},
          {"bins", e.bins},
          {"sample_count", e.sample_count},
          {"standard_error", e.standard_error}};
}

inline nlohmann::json gap_json(const ConvergenceGap& g) {
  return {{"pi", g.pi},
          {"epsilon", g.epsilon},
          {"seed", g.seed},
          {"config_hash", g.config_hash}};
}

inline nlohmann::json rarity_json(const std::vector<RarityRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"condition_id", r.condition_id},
                   {"prevalence", r.prevalence},
                   {"clinical_utility_score", r.clinical_utility_score},
                   {"rarity_index", r.rarity_index},
                   {"flagged", r.flagged}});
  }
  return arr;
}

}  // namespace tailaudit::detail
