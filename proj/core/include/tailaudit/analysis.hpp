#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tailaudit/losses.hpp"
#include "tailaudit/models.hpp"
#include "tailaudit/synthgen.hpp"
#include "tailaudit/trainers.hpp"

namespace tailaudit {

/// Prevalence-weighted decomposition of the batch mean gradient.
/// contribution_g = weight_g * ||E_g[grad L]||2 with weights (1-pi_hat) and
/// pi_hat; by construction contribution_ratio equals
/// ratio_bound * norm_rare / norm_common (identity_holds checks it at fp
/// tolerance). literal_inequality_holds reports the observation
/// norm_rare <= ratio_bound * norm_common, which nothing guarantees.
struct GradientDecomposition {
  double pi_hat = 0.0;
  double norm_common = 0.0;
  double norm_rare = 0.0;
  double contribution_common = 0.0;
  double contribution_rare = 0.0;
  double ratio_bound = 0.0;        // pi_hat / (1 - pi_hat)
  double contribution_ratio = 0.0;  // contribution_rare / contribution_common
  double total_norm = 0.0;          // ||batch mean gradient||
  bool identity_holds = false;
  bool literal_inequality_holds = false;
};

GradientDecomposition decompose_gradients(const Dataset& ds, const ModelParams& params,
                                          const LossSpec& loss);

/// Parameter-space distance between a model trained on the mixture and one
/// trained on an equal-size common-only sample drawn from the same
/// record-coupled streams. Linear architecture only.
struct ConvergenceGap {
  double pi = 0.0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

ConvergenceGap convergence_gap(const MixtureSpec& spec, const TeacherSpec& teacher,
                               const TrainConfig& cfg, const LossSpec& loss, std::size_t n,
                               std::uint64_t seed,
                               const CovariateModel& covariates = CovariateModel::defaults());

/// Plug-in histogram estimate of I(score(X); Y | group) in nats with
/// Miller-Madow bias correction (floored at 0) and jackknife standard error
/// over 10 contiguous folds. Scores use equal-frequency bins.
struct MIEstimate {
  Group group = Group::common;
  double mi_nats = 0.0;
  int bins = 32;
  std::size_t sample_count = 0;
  double standard_error = 0.0;
};

/// Scalar reduction for multivariate features: score = weights.x + bias
/// (typically the group's teacher). d == 1 datasets default to the raw
/// feature.
struct ScoreProjection {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

MIEstimate estimate_group_mi(const Dataset& ds, Group group, int bins = 32,
                             const std::optional<ScoreProjection>& projection = std::nullopt);

std::string decomposition_to_json(const GradientDecomposition& d);
std::string mi_to_json(const std::vector<MIEstimate>& estimates);
std::string gap_to_json(const ConvergenceGap& gap);

}  // namespace tailaudit
