#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailaudit/analysis.hpp"
#include "tailaudit/metrics.hpp"
#include "tailaudit/trainers.hpp"

namespace tailaudit {

enum class TrainerKind { erm, dro, constrained };

std::string_view trainer_kind_name(TrainerKind k);

/// One rarity-index input; prevalence < 0 means "derive from
/// mixture.rare_weight".
struct RaritySpec {
  std::string condition_id;
  double prevalence = -1.0;
  double clinical_utility_score = 1.0;
};

/// Everything one experiment needs, resolved against documented defaults
/// (the defaults are the reference configuration).
struct ExperimentConfig {
  MixtureSpec mixture;
  TeacherSpec teacher;
  CovariateModel covariates;
  std::size_t n_train = 20000;
  std::size_t n_test = 20000;
  LossSpec loss;
  TrainerKind trainer_kind = TrainerKind::erm;
  TrainConfig train;  // train.seed is overridden by each run seed
  DROConfig dro;
  ConstraintSpec constrained;
  MetricKind metric;
  int bootstrap_resamples = 1000;
  int rcce_bins = 15;
  std::size_t rcce_min_bin_count = 5;
  std::vector<RaritySpec> rarity;  // empty = single auto record
  bool compute_convergence_gap = false;
  int mi_bins = 32;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string output_dir = "out";
  std::vector<double> sweep_pi;

  void validate() const;
};

/// Flat key = value config format. Unknown keys are rejected; every
/// constraint violation names the offending key.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Canonical serialization: every key, sorted, with shortest round-trip
/// number rendering. The config hash is the SHA-256 of this text. The
/// output directory is excluded (it does not define the experiment).
std::string canonical_config_text(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);
std::string default_config_text();

struct SeedResult {
  std::uint64_t seed = 0;
  std::optional<GroupPerformance> performance;
  std::optional<double> rcpg_value;
  std::optional<BootstrapInterval> rcpg_ci;
  std::optional<CalibrationReport> calibration;
  std::optional<GradientDecomposition> grad_init;
  std::optional<GradientDecomposition> grad_final;
  std::optional<ConvergenceGap> gap;
};

struct ExperimentReport {
  std::string config_hash;
  std::string config_canonical;
  std::string tool_version;
  std::string timestamp;  // excluded from the hash and from reproducibility comparison
  std::vector<SeedResult> per_seed;
  std::vector<RarityRecord> rarity_records;
  std::optional<double> median_rcpg;
  std::optional<double> median_rcce;
  std::optional<double> median_p_common;
  std::optional<double> median_p_rare;
  std::optional<double> median_epsilon;
};

std::string report_to_json(const ExperimentReport& report);

/// Runs every seed (in parallel up to `jobs`), assembles the report, and
/// writes report.json + metrics.csv under cfg.output_dir. Nothing is
/// written when any seed fails.
ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs = 1);

struct SweepCell {
  double pi = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  std::optional<double> rcpg_value;
  std::string error;  // nonempty = cell failed
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string summary_json;
};

/// Runs one experiment per (pi, seed) cell into its own subdirectory,
/// always computing the convergence gap, and emits epsilon_vs_pi.csv,
/// rcpg_vs_pi.csv and summary.json under cfg.output_dir. Cells fail
/// independently.
SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1);

struct AuditOptions {
  MetricKind metric;
  int bootstrap_resamples = 1000;
  int rcce_bins = 15;
  std::size_t rcce_min_bin_count = 5;
  std::uint64_t seed = 0;
  std::vector<RaritySpec> rarity;

  void validate() const;
};

struct AuditReport {
  MetricKind metric;
  GroupPerformance performance;
  double rcpg_value = 0.0;
  BootstrapInterval rcpg_ci;
  CalibrationReport calibration;
  std::vector<RarityRecord> rarity_records;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Model-agnostic audit of an external predictions file.
AuditReport audit_predictions(const PredictionSet& preds, const AuditOptions& options);
AuditReport audit_predictions_file(const std::string& preds_path, const AuditOptions& options);
std::string audit_to_json(const AuditReport& report);

/// Default parallelism: TAILAUDIT_JOBS env var, else 1.
int default_jobs();

}  // namespace tailaudit
