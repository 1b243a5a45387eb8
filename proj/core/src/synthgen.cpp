#include "tailaudit/synthgen.hpp"

#include <cmath>
#include <string>

namespace tailaudit {

namespace {

constexpr double kBandZ = 3.8906;  // two-sided 99.99% normal quantile

}  // namespace

bool rare_count_plausible(std::size_t n, double pi, std::size_t rare_count) {
  if (pi == 0.0) return rare_count == 0;
  double mean = static_cast<double>(n) * pi;
  double sd = std::sqrt(static_cast<double>(n) * pi * (1.0 - pi));
  double k = static_cast<double>(rare_count);
  double half_width = kBandZ * sd + 0.5;
  return k >= mean - half_width && k <= mean + half_width;
}

Dataset sample_mixture(const MixtureSpec& spec, const TeacherSpec& teacher, std::size_t n,
                       std::uint64_t seed, const CovariateModel& covariates) {
  spec.validate();
  teacher.validate(spec.dim);
  covariates.validate();
  if (n < 1) throw ValidationError("sample_mixture requires n >= 1");

  const Eigen::MatrixXd chol_common = spec.common.cholesky_factor();
  const Eigen::MatrixXd chol_rare = spec.rare.cholesky_factor();
  const int d = spec.dim;

  Dataset ds;
  ds.dim = d;
  ds.records.resize(n);
  Eigen::VectorXd z(d);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng = RngStream::child(seed, i);
    Group g = rng.bernoulli(spec.rare_weight) ? Group::rare : Group::common;
    for (int j = 0; j < d; ++j) z[j] = rng.normal();

    DataRecord& r = ds.records[i];
    r.group = g;
    if (g == Group::rare) {
      r.features = spec.rare.mean + chol_rare * z;
    } else {
      r.features = spec.common.mean + chol_common * z;
    }
    r.covariates = covariates.sample(g, rng);
    int label = teacher.for_group(g).score(r.features) > 0.0 ? 1 : 0;
    double flip = rng.uniform01();  // drawn even at zero noise, keeps streams aligned
    if (flip < teacher.label_noise) label = 1 - label;
    r.label = label;
  }

  std::size_t rare_count = ds.count(Group::rare);
  if (!rare_count_plausible(n, spec.rare_weight, rare_count)) {
    throw Error("generated rare count " + std::to_string(rare_count) +
                " falls outside the central 99.99% binomial band for pi = " +
                format_double(spec.rare_weight));
  }
  return ds;
}

Dataset oversample_rare(const Dataset& ds, double factor, std::uint64_t seed) {
  if (!(factor >= 1.0)) throw ValidationError("oversample factor must be >= 1");
  std::vector<std::size_t> rare_idx = ds.indices_of(Group::rare);
  if (rare_idx.empty()) {
    throw EmptySubgroupError("oversample_rare: dataset has no rare records");
  }

  std::size_t target = static_cast<std::size_t>(
      std::llround(factor * static_cast<double>(rare_idx.size())));
  Dataset out;
  out.dim = ds.dim;
  out.records = ds.records;
  out.records.reserve(ds.records.size() + (target - rare_idx.size()));

  RngStream rng = RngStream::child(seed, "oversample");
  for (std::size_t k = rare_idx.size(); k < target; ++k) {
    out.records.push_back(ds.records[rare_idx[rng.index(rare_idx.size())]]);
  }
  rng.shuffle(out.records);
  return out;
}

BayesReference bayes_reference(const MixtureSpec& spec, const TeacherSpec& teacher,
                               std::size_t n_mc, std::uint64_t seed) {
  spec.validate();
  teacher.validate(spec.dim);
  if (n_mc < 10000) throw ValidationError("bayes_reference requires n_mc >= 10000");

  BayesReference ref;
  ref.n_mc = n_mc;
  const int d = spec.dim;
  Eigen::VectorXd z(d), x(d);
  for (Group g : {Group::common, Group::rare}) {
    const Eigen::MatrixXd chol = (g == Group::common ? spec.common : spec.rare).cholesky_factor();
    const Eigen::VectorXd& mean = (g == Group::common ? spec.common : spec.rare).mean;
    RngStream rng = RngStream::child(seed, g == Group::common ? "bayes_common" : "bayes_rare");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
      for (int j = 0; j < d; ++j) z[j] = rng.normal();
      x = mean + chol * z;
      int clean = teacher.for_group(g).score(x) > 0.0 ? 1 : 0;
      int observed = clean;
      if (rng.uniform01() < teacher.label_noise) observed = 1 - observed;
      // The Bayes predictor outputs the clean label (noise < 0.5 keeps it optimal).
      if (observed == clean) ++correct;
    }
    double acc = static_cast<double>(correct) / static_cast<double>(n_mc);
    double se = std::sqrt(acc * (1.0 - acc) / static_cast<double>(n_mc));
    if (g == Group::common) {
      ref.accuracy_common = acc;
      ref.se_common = se;
    } else {
      ref.accuracy_rare = acc;
      ref.se_rare = se;
    }
  }
  return ref;
}

}  // namespace tailaudit
