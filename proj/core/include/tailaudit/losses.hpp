#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "tailaudit/data.hpp"

namespace tailaudit {

struct ModelParams;  // models.hpp

/// Coefficients of the per-sample stakes weight
/// w = baseline + alpha*mortality + beta*discovery + gamma*equity.
struct WeightParams {
  double baseline = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  void validate() const;
};

double clinical_weight(const SampleCovariates& cov, const WeightParams& params);

/// 2x2 nonnegative cost matrix, rows = true class, cols = predicted class.
struct CostMatrix {
  double cost[2][2] = {{0.0, 1.0}, {1.0, 0.0}};

  double misclassification_cost(int true_class) const {
    return cost[true_class][1 - true_class];
  }
  void validate() const;
};

enum class LossKind { cross_entropy, focal, cost_sensitive, clinically_weighted };

std::string_view loss_kind_name(LossKind k);

/// Objective variant. For clinically_weighted, `base` names the wrapped
/// variant (never clinically_weighted itself) and the focal/cost fields
/// configure it.
struct LossSpec {
  LossKind kind = LossKind::cross_entropy;
  double focal_alpha = 1.0;
  double focal_gamma = 0.0;
  CostMatrix cost;
  LossKind base = LossKind::cross_entropy;
  WeightParams weight;

  static LossSpec cross_entropy();
  static LossSpec focal(double alpha, double gamma);
  static LossSpec cost_sensitive(const CostMatrix& m);
  static LossSpec clinically_weighted(const LossSpec& base_spec, const WeightParams& w);

  void validate() const;
};

/// Loss of one sample. p is the clamped model probability of class 1.
///   cross_entropy:       -log(p_t),  p_t = p if y==1 else 1-p
///   focal:               alpha * (1-p_t)^gamma * -log(p_t)
///   cost_sensitive:      cost(y, 1-y) * -log(p_t)
///   clinically_weighted: clinical_weight(cov) * base loss
double per_sample_loss(const LossSpec& loss, double p, int y, const SampleCovariates& cov);

/// d(per_sample_loss)/dz where p = sigmoid(z). Returns 0 when the
/// probability clamp was active (the computed loss is locally constant
/// there), which keeps the analytic gradient the exact derivative of the
/// evaluated objective.
double per_sample_dloss_dz(const LossSpec& loss, double p, bool clamped, int y,
                           const SampleCovariates& cov);

/// Mean per-sample loss with compensated summation, plus group-conditional
/// means (absent for empty groups).
struct ObjectiveValue {
  double total = 0.0;
  std::optional<double> common;
  std::optional<double> rare;
  std::size_t n_common = 0;
  std::size_t n_rare = 0;
};

ObjectiveValue objective_value(const Dataset& ds, const ModelParams& params,
                               const LossSpec& loss);
ObjectiveValue objective_value(const Dataset& ds, std::span<const std::size_t> indices,
                               const ModelParams& params, const LossSpec& loss);

}  // namespace tailaudit
