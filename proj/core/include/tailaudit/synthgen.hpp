#pragma once

#include <cstdint>

#include "tailaudit/data.hpp"

namespace tailaudit {

/// Draws n labeled records: group ~ Bernoulli(rare_weight), features from the
/// group's Gaussian (via Cholesky), label from the group's teacher with flip
/// noise, covariates from the covariate model. Record i consumes only its own
/// child stream mix_seed(seed, i), so generation is order-independent and two
/// generations with different mixture weights stay coupled record-by-record.
/// The realized rare count is checked against the central 99.99% binomial
/// band.
Dataset sample_mixture(const MixtureSpec& spec, const TeacherSpec& teacher, std::size_t n,
                       std::uint64_t seed,
                       const CovariateModel& covariates = CovariateModel::defaults());

/// Returns ds plus rare records duplicated with replacement until the rare
/// count is round(factor * original rare count); record order is then
/// shuffled deterministically. Never alters any record's contents.
Dataset oversample_rare(const Dataset& ds, double factor, std::uint64_t seed);

/// Monte-Carlo estimate of the best achievable per-group accuracy under the
/// teacher (the Bayes predictor reproduces the clean teacher label, so the
/// estimate concentrates on 1 - label_noise).
struct BayesReference {
  double accuracy_common = 0.0;
  double accuracy_rare = 0.0;
  double se_common = 0.0;
  double se_rare = 0.0;
  std::size_t n_mc = 0;
};

BayesReference bayes_reference(const MixtureSpec& spec, const TeacherSpec& teacher,
                               std::size_t n_mc, std::uint64_t seed);

/// Central 99.99% binomial(n, pi) acceptance band for the rare count
/// (normal approximation with continuity correction; exact for pi == 0).
bool rare_count_plausible(std::size_t n, double pi, std::size_t rare_count);

}  // namespace tailaudit
