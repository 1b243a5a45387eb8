#include "tailaudit/losses.hpp"

#include <cmath>
#include <string>

#include "compensated.hpp"
#include "tailaudit/models.hpp"

namespace tailaudit {

void WeightParams::validate() const {
  if (!(baseline >= 0.0 && alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw ValidationError("weight coefficients must be nonnegative");
  }
  if (!(baseline + alpha + beta + gamma > 0.0)) {
    throw ValidationError("weight coefficients must not all be zero");
  }
}

double clinical_weight(const SampleCovariates& cov, const WeightParams& params) {
  return params.baseline + params.alpha * cov.mortality_risk +
         params.beta * cov.discovery_value + params.gamma * cov.equity_adjustment;
}

void CostMatrix::validate() const {
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (!(cost[i][j] >= 0.0)) throw ValidationError("cost matrix entries must be >= 0");
    }
  }
  if (cost[0][1] <= 0.0 && cost[1][0] <= 0.0) {
    throw ValidationError("cost matrix needs a positive off-diagonal entry");
  }
}

std::string_view loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::focal: return "focal";
    case LossKind::cost_sensitive: return "cost_sensitive";
    case LossKind::clinically_weighted: return "clinically_weighted";
  }
  return "?";
}

LossSpec LossSpec::cross_entropy() { return LossSpec{}; }

LossSpec LossSpec::focal(double alpha, double gamma) {
  LossSpec s;
  s.kind = LossKind::focal;
  s.focal_alpha = alpha;
  s.focal_gamma = gamma;
  return s;
}

LossSpec LossSpec::cost_sensitive(const CostMatrix& m) {
  LossSpec s;
  s.kind = LossKind::cost_sensitive;
  s.cost = m;
  return s;
}

LossSpec LossSpec::clinically_weighted(const LossSpec& base_spec, const WeightParams& w) {
  if (base_spec.kind == LossKind::clinically_weighted) {
    throw ValidationError("clinically_weighted cannot wrap itself");
  }
  LossSpec s = base_spec;
  s.kind = LossKind::clinically_weighted;
  s.base = base_spec.kind;
  s.weight = w;
  return s;
}

void LossSpec::validate() const {
  if (kind == LossKind::focal || (kind == LossKind::clinically_weighted && base == LossKind::focal)) {
    if (!(focal_alpha >= 0.0) || !(focal_gamma >= 0.0)) {
      throw ValidationError("focal alpha and gamma must be >= 0");
    }
  }
  if (kind == LossKind::cost_sensitive ||
      (kind == LossKind::clinically_weighted && base == LossKind::cost_sensitive)) {
    cost.validate();
  }
  if (kind == LossKind::clinically_weighted) {
    if (base == LossKind::clinically_weighted) {
      throw ValidationError("clinically_weighted cannot wrap itself");
    }
    weight.validate();
  }
}

namespace {

double base_loss(LossKind kind, const LossSpec& spec, double pt, int y) {
  double ce = -std::log(pt);
  switch (kind) {
    case LossKind::cross_entropy:
      return ce;
    case LossKind::focal:
      return spec.focal_alpha * std::pow(1.0 - pt, spec.focal_gamma) * ce;
    case LossKind::cost_sensitive:
      return spec.cost.misclassification_cost(y) * ce;
    case LossKind::clinically_weighted:
      break;
  }
  throw ValidationError("invalid base loss kind");
}

double base_dloss_dz(LossKind kind, const LossSpec& spec, double p, double pt, int y) {
  switch (kind) {
    case LossKind::cross_entropy:
      return p - static_cast<double>(y);
    case LossKind::focal: {
      // L = -alpha (1-pt)^g log(pt)
      // dL/dpt = alpha*g*(1-pt)^(g-1)*log(pt) - alpha*(1-pt)^g/pt
      double g = spec.focal_gamma;
      double one_m = 1.0 - pt;
      double term1 = g == 0.0 ? 0.0 : spec.focal_alpha * g * std::pow(one_m, g - 1.0) * std::log(pt);
      double term2 = -spec.focal_alpha * std::pow(one_m, g) / pt;
      double dpt_dz = (y == 1 ? 1.0 : -1.0) * p * (1.0 - p);
      return (term1 + term2) * dpt_dz;
    }
    case LossKind::cost_sensitive:
      return spec.cost.misclassification_cost(y) * (p - static_cast<double>(y));
    case LossKind::clinically_weighted:
      break;
  }
  throw ValidationError("invalid base loss kind");
}

}  // namespace

double per_sample_loss(const LossSpec& loss, double p, int y, const SampleCovariates& cov) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("per_sample_loss requires p in (0, 1)");
  }
  double pt = y == 1 ? p : 1.0 - p;
  if (loss.kind == LossKind::clinically_weighted) {
    return clinical_weight(cov, loss.weight) * base_loss(loss.base, loss, pt, y);
  }
  return base_loss(loss.kind, loss, pt, y);
}

double per_sample_dloss_dz(const LossSpec& loss, double p, bool clamped, int y,
                           const SampleCovariates& cov) {
  if (clamped) return 0.0;
  double pt = y == 1 ? p : 1.0 - p;
  if (loss.kind == LossKind::clinically_weighted) {
    return clinical_weight(cov, loss.weight) * base_dloss_dz(loss.base, loss, p, pt, y);
  }
  return base_dloss_dz(loss.kind, loss, p, pt, y);
}

ObjectiveValue objective_value(const Dataset& ds, std::span<const std::size_t> indices,
                               const ModelParams& params, const LossSpec& loss) {
  if (indices.empty()) throw ValidationError("objective_value requires a nonempty dataset");
  loss.validate();

  CompensatedSum sum_common, sum_rare;
  std::size_t n_common = 0, n_rare = 0;
  for (std::size_t idx : indices) {
    const DataRecord& r = ds.records[idx];
    Prediction pred = predict(params, r.features);
    if (!std::isfinite(pred.raw_score)) {
      throw NumericalError("non-finite score at record " + std::to_string(idx));
    }
    double l = per_sample_loss(loss, pred.p, r.label, r.covariates);
    if (!std::isfinite(l)) {
      throw NumericalError("non-finite loss at record " + std::to_string(idx));
    }
    if (r.group == Group::rare) {
      sum_rare.add(l);
      ++n_rare;
    } else {
      sum_common.add(l);
      ++n_common;
    }
  }

  ObjectiveValue out;
  out.n_common = n_common;
  out.n_rare = n_rare;
  double total_sum = sum_common.value() + sum_rare.value();
  out.total = total_sum / static_cast<double>(indices.size());
  if (n_common > 0) out.common = sum_common.value() / static_cast<double>(n_common);
  if (n_rare > 0) out.rare = sum_rare.value() / static_cast<double>(n_rare);
  return out;
}

ObjectiveValue objective_value(const Dataset& ds, const ModelParams& params,
                               const LossSpec& loss) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return objective_value(ds, idx, params, loss);
}

}  // namespace tailaudit
