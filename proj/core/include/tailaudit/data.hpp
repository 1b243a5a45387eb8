#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tailaudit/errors.hpp"
#include "tailaudit/rng.hpp"

namespace tailaudit {

/// Subgroup tag. The whole audit surface is two-group; supporting more
/// groups means widening this enum and the per-group fields that mirror it.
enum class Group : std::uint8_t { common = 0, rare = 1 };

std::string_view group_name(Group g);
Group parse_group(std::string_view s);

/// Per-sample stakes covariates, each normalized to [0, 1].
struct SampleCovariates {
  double mortality_risk = 0.0;
  double discovery_value = 0.0;
  double equity_adjustment = 0.0;

  void validate() const;
};

/// One mixture component: mean vector plus a symmetric positive-definite
/// covariance.
struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;
  /// Lower Cholesky factor; throws ValidationError when the covariance is
  /// not positive definite.
  Eigen::MatrixXd cholesky_factor() const;
};

/// Two-component population model: features are drawn from the rare
/// component with probability rare_weight and from the common one otherwise.
struct MixtureSpec {
  double rare_weight = 0.05;
  GaussianComponent common;
  GaussianComponent rare;
  int dim = 0;

  void validate() const;
};

/// Linear labeling rule: positive iff weights·x + bias > 0.
struct LinearTeacher {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double score(const Eigen::VectorXd& x) const { return weights.dot(x) + bias; }
};

/// Per-group labeling rules with independent flip noise. Defaults elsewhere
/// pick rules whose optimal decision boundaries differ between groups, so
/// that a single predictor cannot serve both.
struct TeacherSpec {
  LinearTeacher common;
  LinearTeacher rare;
  double label_noise = 0.0;

  const LinearTeacher& for_group(Group g) const {
    return g == Group::common ? common : rare;
  }
  void validate(int dim) const;
};

struct DataRecord {
  Eigen::VectorXd features;
  int label = 0;  // 0/1
  Group group = Group::common;
  SampleCovariates covariates;
};

struct Dataset {
  int dim = 0;
  std::vector<DataRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t count(Group g) const;
  std::vector<std::size_t> indices_of(Group g) const;
  void validate() const;
};

/// Generator for one covariate of one group: Beta(a, b) or a degenerate
/// constant.
struct CovariateDistribution {
  enum class Kind { beta, constant };
  Kind kind = Kind::beta;
  double a = 1.0;
  double b = 1.0;
  double value = 0.0;

  static CovariateDistribution beta_dist(double a, double b) {
    return {Kind::beta, a, b, 0.0};
  }
  static CovariateDistribution constant(double v) {
    return {Kind::constant, 1.0, 1.0, v};
  }

  double sample(RngStream& rng) const;
  void validate(std::string_view what) const;
};

/// Per-group covariate generators, indexed by Group.
struct CovariateModel {
  CovariateDistribution mortality[2];
  CovariateDistribution discovery[2];
  CovariateDistribution equity[2];

  /// Common mortality Beta(2,5), rare mortality Beta(5,2); discovery and
  /// equity uniform (Beta(1,1)) for both groups.
  static CovariateModel defaults();

  SampleCovariates sample(Group g, RngStream& rng) const;
  void validate() const;
};

/// Dataset CSV with header
/// x_0,...,x_{d-1},y,group,mortality_risk,discovery_value,equity_adjustment.
/// Floats are written as shortest round-trip decimals; read(write(ds)) is
/// bit-identical.
std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(std::string_view text);
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

/// Shortest round-trip decimal rendering of a double (std::to_chars).
std::string format_double(double v);

}  // namespace tailaudit
