#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailaudit/losses.hpp"
#include "tailaudit/metrics.hpp"
#include "tailaudit/models.hpp"

namespace tailaudit {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 30;
  int batch_size = 64;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  Architecture architecture = Architecture::linear;
  int hidden_width = 8;

  void validate() const;
};

/// Group-robust training: exponentiated-gradient weights over the group
/// simplex, step size group_step_size on the group mean losses.
struct DROConfig {
  double group_step_size = 0.05;
  std::vector<Group> groups = {Group::common, Group::rare};

  void validate() const;
};

/// Constrained objective: descend on E[L_common] + lambda*E[L_rare], return
/// the best epoch whose validation common-group performance meets
/// p_baseline.
struct ConstraintSpec {
  double lambda = 0.0;
  double p_baseline = 0.5;
  MetricKind metric;

  void validate() const;
};

struct EpochRecord {
  double train_objective = 0.0;
  GroupPerformance val_performance;
  std::optional<double> val_loss_common;
  std::optional<double> val_loss_rare;
  std::optional<std::array<double, 2>> dro_weights;  // q over {common, rare}
};

struct TrainedModel {
  ModelParams params;
  std::vector<EpochRecord> history;  // one record per epoch
  std::uint64_t seed = 0;
  std::string config_hash;
  std::optional<int> selected_epoch;  // constrained: checkpointed epoch (0-based)
};

std::string trained_model_to_json(const TrainedModel& model);
void write_trained_model_json(const TrainedModel& model, const std::string& path);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Deterministic split stratified by (group, label); strata too small to
/// spare a record stay entirely in the training split.
SplitIndices stratified_split(const Dataset& ds, double validation_fraction,
                              std::uint64_t seed);

/// Model probabilities over a dataset, carrying labels and group tags.
PredictionSet predict_dataset(const ModelParams& params, const Dataset& ds);

/// Mini-batch SGD with momentum on the mean loss. Deterministic epoch
/// shuffles from the seed; zero init for linear, seeded uniform(-0.1, 0.1)
/// for mlp1. History records the full-pass training objective and
/// validation metrics per epoch.
TrainedModel train_erm(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                       const MetricKind& val_metric = MetricKind::auroc());

TrainedModel train_group_dro(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                             const DROConfig& dro,
                             const MetricKind& val_metric = MetricKind::auroc());

/// Throws InfeasibilityError (carrying the best common-group performance
/// achieved) when no epoch satisfies the baseline.
TrainedModel train_constrained(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                               const ConstraintSpec& constraint);

}  // namespace tailaudit
