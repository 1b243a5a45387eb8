#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace tailaudit {

/// Neumaier compensated scalar accumulator. Keeps group-decomposition
/// identities testable at 1e-12 tolerances.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Per-coordinate Neumaier accumulation of dense vectors.
class CompensatedVector {
 public:
  explicit CompensatedVector(Eigen::Index n)
      : sum_(Eigen::VectorXd::Zero(n)), comp_(Eigen::VectorXd::Zero(n)) {}

  void add(Eigen::Index i, double x) {
    double s = sum_[i];
    double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      comp_[i] += (s - t) + x;
    } else {
      comp_[i] += (x - t) + s;
    }
    sum_[i] = t;
  }

  Eigen::VectorXd value() const { return sum_ + comp_; }
  Eigen::Index size() const { return sum_.size(); }

 private:
  Eigen::VectorXd sum_;
  Eigen::VectorXd comp_;
};

}  // namespace tailaudit
