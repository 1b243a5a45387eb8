// Shared fixtures: the reference population model used across tests.
#pragma once

#include "tailaudit/data.hpp"

namespace tailaudit::testsupport {

inline MixtureSpec reference_mixture(double rare_weight = 0.05) {
  MixtureSpec spec;
  spec.dim = 2;
  spec.rare_weight = rare_weight;
  spec.common.mean = Eigen::Vector2d(0.0, 0.0);
  spec.common.covariance = Eigen::Matrix2d::Identity();
  spec.rare.mean = Eigen::Vector2d(3.0, 1.5);
  spec.rare.covariance = 0.25 * Eigen::Matrix2d::Identity();
  return spec;
}

inline TeacherSpec reference_teacher(double label_noise = 0.05) {
  TeacherSpec teacher;
  teacher.common.weights = Eigen::Vector2d(1.0, 1.0);
  teacher.common.bias = 0.0;
  teacher.rare.weights = Eigen::Vector2d(-1.0, 1.0);
  teacher.rare.bias = 2.0;
  teacher.label_noise = label_noise;
  return teacher;
}

inline MixtureSpec mixture_1d(double rare_weight, double common_mean, double common_var,
                              double rare_mean, double rare_var) {
  MixtureSpec spec;
  spec.dim = 1;
  spec.rare_weight = rare_weight;
  spec.common.mean = Eigen::VectorXd::Constant(1, common_mean);
  spec.common.covariance = Eigen::MatrixXd::Constant(1, 1, common_var);
  spec.rare.mean = Eigen::VectorXd::Constant(1, rare_mean);
  spec.rare.covariance = Eigen::MatrixXd::Constant(1, 1, rare_var);
  return spec;
}

inline TeacherSpec teacher_1d(double w_common, double b_common, double w_rare, double b_rare,
                              double noise) {
  TeacherSpec teacher;
  teacher.common.weights = Eigen::VectorXd::Constant(1, w_common);
  teacher.common.bias = b_common;
  teacher.rare.weights = Eigen::VectorXd::Constant(1, w_rare);
  teacher.rare.bias = b_rare;
  teacher.label_noise = noise;
  return teacher;
}

}  // namespace tailaudit::testsupport
