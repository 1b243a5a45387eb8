// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "tailaudit/losses.hpp"
#include "tailaudit/metrics.hpp"
#include "tailaudit/models.hpp"

namespace tailaudit::oracle {

/// Mean per-sample loss over a batch evaluated from scratch (plain
/// summation): the scalar whose gradient batch_gradient claims to return.
double mean_batch_loss(const ModelParams& params, const Dataset& ds,
                       std::span<const std::size_t> indices, const LossSpec& loss,
                       const std::optional<WeightParams>& weight_ctx);

/// Central finite differences of mean_batch_loss, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(const ModelParams& params, const Dataset& ds,
                                           std::span<const std::size_t> indices,
                                           const LossSpec& loss,
                                           const std::optional<WeightParams>& weight_ctx,
                                           double step = 1e-6);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor makes the
/// comparison absolute where both gradients are tiny, the standard
/// finite-difference practice.
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          double floor = 1e-4);

/// Composite Simpson quadrature.
double simpson(double a, double b, int intervals, const std::function<double(double)>& f);

/// P(X > t) for X ~ N(mean, sd^2), by quadrature over [t, mean + 12 sd].
double gaussian_upper_tail(double mean, double sd, double t);

/// Binary entropy in nats.
double binary_entropy(double q);

/// One-sided sign test: P(Binomial(n, 1/2) >= k), exact.
double sign_test_p_value(int k, int n);

/// Calibrated-by-construction rare-group predictions: p_hat ~ U(0.5, 1),
/// y = 1 with probability p_hat.
PredictionSet calibrated_rare_predictions(std::size_t n, std::uint64_t seed);

}  // namespace tailaudit::oracle
