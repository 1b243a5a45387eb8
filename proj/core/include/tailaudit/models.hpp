#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "tailaudit/data.hpp"
#include "tailaudit/losses.hpp"

namespace tailaudit {

enum class Architecture { linear, mlp1 };

std::string_view architecture_name(Architecture a);
Architecture parse_architecture(std::string_view s);

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] so the
/// cross-entropy loss stays finite; calibration consumers should know the
/// clamp exists.
inline constexpr double kProbClamp = 1e-12;

/// Classifier parameters as one flat vector.
///   linear: [w_0..w_{d-1}, b]
///   mlp1:   [W1 row-major (h x d), b1 (h), w2 (h), b2]; hidden tanh
struct ModelParams {
  Architecture arch = Architecture::linear;
  int input_dim = 0;
  int hidden_width = 0;  // 0 for linear
  Eigen::VectorXd values;

  static ModelParams linear_zeros(int input_dim);
  /// Entries i.i.d. uniform(-0.1, 0.1) from the given stream seed.
  static ModelParams mlp1_init(int input_dim, int hidden_width, std::uint64_t seed);

  Eigen::Index param_count() const { return values.size(); }
  void validate() const;
};

double score(const ModelParams& params, const Eigen::VectorXd& x);

struct Prediction {
  double p = 0.5;        // clamped probability of class 1
  double raw_score = 0;  // pre-sigmoid score
  bool clamped = false;  // whether the clamp was active
};

Prediction predict(const ModelParams& params, const Eigen::VectorXd& x);

/// Clamped sigmoid(score(x)).
double predict_proba(const ModelParams& params, const Eigen::VectorXd& x);

/// Mean gradient of the (optionally weighted) per-sample loss over a batch,
/// with group-conditional mean gradients and losses. Sums are compensated
/// and the batch mean is assembled from the group sums, so
/// total == (n_c/n)*common + (n_r/n)*rare holds to accumulation order.
struct BatchGradient {
  Eigen::VectorXd total;
  std::optional<Eigen::VectorXd> common;
  std::optional<Eigen::VectorXd> rare;
  std::size_t n_common = 0;
  std::size_t n_rare = 0;
  double mean_loss = 0.0;
  std::optional<double> loss_common;
  std::optional<double> loss_rare;
};

/// weight_ctx, when present, multiplies each sample's loss (and gradient) by
/// clinical_weight(covariates, *weight_ctx) on top of the loss spec.
BatchGradient batch_gradient(const ModelParams& params, const Dataset& ds,
                             std::span<const std::size_t> indices, const LossSpec& loss,
                             const std::optional<WeightParams>& weight_ctx = std::nullopt);
BatchGradient batch_gradient(const ModelParams& params, const Dataset& ds,
                             const LossSpec& loss,
                             const std::optional<WeightParams>& weight_ctx = std::nullopt);

/// JSON object {architecture, input_dim, hidden_width, params:[...]} with the
/// flat layout documented on ModelParams.
std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(std::string_view text);
void write_model_json(const ModelParams& params, const std::string& path);
ModelParams read_model_json(const std::string& path);

}  // namespace tailaudit
