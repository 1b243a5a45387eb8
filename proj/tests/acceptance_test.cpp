// Acceptance suite: one test per criterion, one PASS/FAIL line each.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "tailaudit/analysis.hpp"
#include "tailaudit/runner.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace tailaudit {
namespace {

using testsupport::mixture_1d;
using testsupport::reference_mixture;
using testsupport::reference_teacher;
using testsupport::teacher_1d;

std::string temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("tailaudit_acceptance_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

TrainConfig reference_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 30;
  cfg.batch_size = 64;
  cfg.momentum = 0.0;
  cfg.validation_fraction = 0.2;
  cfg.seed = seed;
  return cfg;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// End-to-end RCPG of one ERM run at the given prevalence.
double erm_test_rcpg(double pi, std::uint64_t seed, const LossSpec& loss,
                     const CovariateModel& cov = CovariateModel::defaults()) {
  MixtureSpec spec = reference_mixture(pi);
  TeacherSpec teacher = reference_teacher();
  Dataset train_ds = sample_mixture(spec, teacher, 20000, mix_seed(seed, "train_data"), cov);
  Dataset test_ds = sample_mixture(spec, teacher, 20000, mix_seed(seed, "test_data"), cov);
  TrainedModel model = train_erm(train_ds, loss, reference_train_config(mix_seed(seed, "train")));
  return rcpg(group_performance(predict_dataset(model.params, test_ds), MetricKind::auroc()));
}

TEST(Acceptance, Criterion01_GradientContributionIdentity) {
  // Equal-norm construction: ratio equals pi/(1-pi) within 1e-12.
  Dataset constructed;
  constructed.dim = 2;
  for (int i = 0; i < 10; ++i) {
    DataRecord r;
    r.features = Eigen::Vector2d(1.0, 0.5);
    r.label = 0;
    r.group = i < 7 ? Group::common : Group::rare;
    constructed.records.push_back(r);
  }
  GradientDecomposition d =
      decompose_gradients(constructed, ModelParams::linear_zeros(2), LossSpec::cross_entropy());
  EXPECT_NEAR(d.contribution_ratio, 0.3 / 0.7, 1e-12);
  EXPECT_TRUE(d.identity_holds);

  // Reference config at theta = 0 against the independent recomputation
  // script run on the serialized dataset.
  Dataset ds = sample_mixture(reference_mixture(), reference_teacher(), 20000, 4242);
  std::string dir = temp_dir("c1");
  std::string csv = dir + "/ds.csv";
  std::string out = dir + "/oracle.json";
  write_dataset_csv(ds, csv);
  std::string cmd = std::string("python3 ") + TAILAUDIT_SOURCE_DIR +
                    "/tests/oracle_decomposition.py " + csv + " " + out;
  ASSERT_EQ(std::system(cmd.c_str()), 0) << cmd;
  std::ifstream f(out);
  ASSERT_TRUE(f.good());
  nlohmann::json oracle_json = nlohmann::json::parse(f);

  GradientDecomposition ref =
      decompose_gradients(ds, ModelParams::linear_zeros(2), LossSpec::cross_entropy());
  EXPECT_NEAR(ref.pi_hat, oracle_json["pi_hat"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.norm_common, oracle_json["norm_common"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.norm_rare, oracle_json["norm_rare"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.contribution_common, oracle_json["contribution_common"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.contribution_rare, oracle_json["contribution_rare"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.ratio_bound, oracle_json["ratio_bound"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.contribution_ratio, oracle_json["contribution_ratio"].get<double>(), 1e-10);
  EXPECT_NEAR(ref.total_norm, oracle_json["total_norm"].get<double>(), 1e-10);
}

TEST(Acceptance, Criterion02_ConvergenceGap) {
  TeacherSpec teacher = reference_teacher();
  LossSpec ce = LossSpec::cross_entropy();

  ConvergenceGap zero =
      convergence_gap(reference_mixture(0.0), teacher, reference_train_config(0), ce, 20000, 7);
  EXPECT_EQ(zero.epsilon, 0.0);

  std::vector<double> pis = {0.3, 0.1, 0.03, 0.01};
  std::vector<double> medians;
  for (double pi : pis) {
    std::vector<double> eps;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      eps.push_back(
          convergence_gap(reference_mixture(pi), teacher, reference_train_config(0), ce, 20000,
                          seed)
              .epsilon);
    }
    medians.push_back(median(eps));
  }
  std::printf("  epsilon(0) = %g; median epsilon by pi {0.3, 0.1, 0.03, 0.01}: %.4f %.4f %.4f %.4f\n",
              zero.epsilon, medians[0], medians[1], medians[2], medians[3]);
  for (std::size_t i = 1; i < medians.size(); ++i) {
    EXPECT_LE(medians[i], medians[i - 1] + 1e-12)
        << "median epsilon increased from pi=" << pis[i - 1] << " to pi=" << pis[i];
  }
}

TEST(Acceptance, Criterion03_LowPrevalencePerformanceGap) {
  LossSpec ce = LossSpec::cross_entropy();
  int positive_diffs = 0;
  const int n_seeds = 10;
  std::vector<double> low_pi_gaps;
  for (int s = 1; s <= n_seeds; ++s) {
    double gap_low_pi = erm_test_rcpg(0.01, static_cast<std::uint64_t>(s), ce);
    double gap_high_pi = erm_test_rcpg(0.3, static_cast<std::uint64_t>(s), ce);
    low_pi_gaps.push_back(gap_low_pi);
    if (gap_low_pi > gap_high_pi) ++positive_diffs;
  }
  EXPECT_GT(median(low_pi_gaps), 0.0);
  double p = oracle::sign_test_p_value(positive_diffs, n_seeds);
  std::printf("  %d of %d paired seeds have RCPG(pi=0.01) > RCPG(pi=0.3); sign test p = %.4g\n",
              positive_diffs, n_seeds, p);
  EXPECT_LT(p, 0.05) << positive_diffs << " of " << n_seeds << " seeds positive";
}

TEST(Acceptance, Criterion04_ClinicalWeightingMitigation) {
  const double pi = 0.05;
  // Equity covariate = group indicator; weight = 1 + (1/pi - 1) * equity
  // gives exactly 1/pi on rare samples and 1 on common ones.
  CovariateModel cov = CovariateModel::defaults();
  cov.equity[static_cast<int>(Group::common)] = CovariateDistribution::constant(0.0);
  cov.equity[static_cast<int>(Group::rare)] = CovariateDistribution::constant(1.0);
  WeightParams w;
  w.baseline = 1.0;
  w.alpha = 0.0;
  w.beta = 0.0;
  w.gamma = 1.0 / pi - 1.0;
  LossSpec weighted = LossSpec::clinically_weighted(LossSpec::cross_entropy(), w);

  std::vector<double> rcpg_erm, rcpg_weighted;
  for (int s = 1; s <= 10; ++s) {
    rcpg_erm.push_back(erm_test_rcpg(pi, static_cast<std::uint64_t>(s), LossSpec::cross_entropy(), cov));
    rcpg_weighted.push_back(erm_test_rcpg(pi, static_cast<std::uint64_t>(s), weighted, cov));
  }
  double base = median(rcpg_erm);
  double mitigated = median(rcpg_weighted);
  std::printf("  median RCPG: ERM %.4f -> clinically weighted %.4f (reduction %.0f%%)\n", base,
              mitigated, 100.0 * (1.0 - mitigated / base));
  EXPECT_GT(base, 0.0);
  EXPECT_LE(mitigated, 0.5 * base)
      << "ERM median RCPG " << base << ", weighted median RCPG " << mitigated;
}

TEST(Acceptance, Criterion05_FocalReduction) {
  LossSpec ce = LossSpec::cross_entropy();
  LossSpec focal = LossSpec::focal(1.0, 0.0);
  RngStream rng(2025);
  const SampleCovariates cov{0, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    double p = rng.uniform(1e-9, 1.0 - 1e-9);
    int y = rng.bernoulli(0.5) ? 1 : 0;
    ASSERT_NEAR(per_sample_loss(focal, p, y, cov), per_sample_loss(ce, p, y, cov), 1e-12);
  }
}

TEST(Acceptance, Criterion06_ConstraintSoundness) {
  RngStream rng(606);
  int feasible = 0, infeasible = 0;
  for (int run = 0; run < 100; ++run) {
    double noise = run % 2 == 0 ? 0.05 : 0.2;
    Dataset ds = sample_mixture(reference_mixture(0.2), reference_teacher(noise), 1500,
                                static_cast<std::uint64_t>(9000 + run));
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 8;
    cfg.batch_size = 64;
    cfg.seed = static_cast<std::uint64_t>(run);
    ConstraintSpec cs;
    cs.lambda = rng.uniform(0.0, 20.0);
    cs.p_baseline = rng.uniform(0.55, 0.995);
    try {
      TrainedModel model = train_constrained(ds, LossSpec::cross_entropy(), cfg, cs);
      ASSERT_TRUE(model.selected_epoch.has_value());
      const EpochRecord& chosen = model.history[*model.selected_epoch];
      ASSERT_TRUE(chosen.val_performance.p_common.has_value());
      // Soundness: never returns a model below the baseline.
      ASSERT_GE(*chosen.val_performance.p_common, cs.p_baseline);
      ++feasible;
    } catch (const InfeasibilityError& e) {
      ASSERT_LT(e.best_p_common(), cs.p_baseline);
      ++infeasible;
    }
  }
  std::printf("  %d feasible runs (all satisfied the baseline), %d infeasible errors\n", feasible,
              infeasible);
  EXPECT_GT(feasible, 0);
  EXPECT_GT(infeasible, 0);

  // Infeasible baseline through the CLI: exit code 3.
  std::string dir = temp_dir("c6");
  std::string cfg_path = dir + "/infeasible.conf";
  {
    std::ofstream f(cfg_path);
    f << "trainer.kind = constrained\n"
      << "trainer.constrained.p_baseline = 0.999\n"
      << "teacher.label_noise = 0.2\n"
      << "data.n_train = 1200\n"
      << "data.n_test = 400\n"
      << "trainer.epochs = 3\n"
      << "seeds = 1\n"
      << "output.dir = " << dir << "/out\n";
  }
  std::string cmd = std::string(TAILAUDIT_CLI_PATH) + " run --config " + cfg_path +
                    " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 3);
}

TEST(Acceptance, Criterion07_DroImprovement) {
  LossSpec ce = LossSpec::cross_entropy();
  DROConfig dro;
  dro.group_step_size = 0.05;
  std::vector<double> worst_erm, worst_dro;
  for (int s = 1; s <= 10; ++s) {
    Dataset ds = sample_mixture(reference_mixture(), reference_teacher(), 20000,
                                mix_seed(static_cast<std::uint64_t>(s), "dro_data"));
    TrainConfig cfg = reference_train_config(mix_seed(static_cast<std::uint64_t>(s), "dro_train"));
    TrainedModel erm = train_erm(ds, ce, cfg);
    TrainedModel robust = train_group_dro(ds, ce, cfg, dro);
    auto worst = [](const TrainedModel& m) {
      const EpochRecord& last = m.history.back();
      return std::max(last.val_loss_common.value(), last.val_loss_rare.value());
    };
    worst_erm.push_back(worst(erm));
    worst_dro.push_back(worst(robust));
  }
  std::printf("  median worst-group validation loss: ERM %.4f, group-DRO %.4f\n",
              median(worst_erm), median(worst_dro));
  EXPECT_LE(median(worst_dro), median(worst_erm));

  // Degenerate single-group simplex equals ERM within 1e-12.
  Dataset common_only = sample_mixture(reference_mixture(0.0), reference_teacher(), 3000, 99);
  TrainConfig cfg = reference_train_config(31);
  cfg.epochs = 10;
  DROConfig singleton;
  singleton.groups = {Group::common};
  TrainedModel erm = train_erm(common_only, ce, cfg);
  TrainedModel robust = train_group_dro(common_only, ce, cfg, singleton);
  EXPECT_LT((erm.params.values - robust.params.values).lpNorm<Eigen::Infinity>(), 1e-12);
  for (std::size_t e = 0; e < erm.history.size(); ++e) {
    ASSERT_NEAR(erm.history[e].train_objective, robust.history[e].train_objective, 1e-12);
  }
}

TEST(Acceptance, Criterion08_RcceCorrectness) {
  // Constant-confidence constructions with exact analytic values.
  PredictionSet all_correct;
  for (int i = 0; i < 50; ++i) all_correct.records.push_back({0.9, 1, Group::rare});
  EXPECT_NEAR(rcce(all_correct).rcce, 0.1, 1e-12);

  PredictionSet mixed;  // confidence 0.8, accuracy 0.6 -> rcce = 0.2
  for (int i = 0; i < 50; ++i) mixed.records.push_back({0.8, i < 30 ? 1 : 0, Group::rare});
  EXPECT_NEAR(rcce(mixed).rcce, 0.2, 1e-12);

  PredictionSet calibrated_bins;  // accuracy equals confidence in each bin
  auto add_bin = [&](double conf, int total, int correct) {
    for (int i = 0; i < total; ++i) {
      calibrated_bins.records.push_back({conf, i < correct ? 1 : 0, Group::rare});
    }
  };
  add_bin(0.6, 20, 12);
  add_bin(0.8, 20, 16);
  EXPECT_NEAR(rcce(calibrated_bins).rcce, 0.0, 1e-12);

  // Calibrated-by-construction generator at n = 1e5.
  PredictionSet generated = oracle::calibrated_rare_predictions(100000, 808);
  EXPECT_LT(rcce(generated).rcce, 0.02);
}

TEST(Acceptance, Criterion09_RarityIndex) {
  RarityRecord flagged = rarity_index("gcm", 0.005, 1.0);
  EXPECT_EQ(flagged.rarity_index, 200.0);
  EXPECT_TRUE(flagged.flagged);

  RarityRecord common_condition = rarity_index("ubiquitous", 1.0, 1.0);
  EXPECT_EQ(common_condition.rarity_index, 1.0);
  EXPECT_FALSE(common_condition.flagged);

  RarityRecord boundary = rarity_index("boundary", 0.01, 1.0);
  EXPECT_EQ(boundary.rarity_index, 100.0);
  EXPECT_FALSE(boundary.flagged);  // strict inequality

  RngStream rng(909);
  for (int i = 0; i < 1000; ++i) {
    double prevalence = rng.uniform(1e-6, 1.0);
    double utility = rng.uniform(1e-3, 100.0);
    RarityRecord r = rarity_index("x", prevalence, utility);
    ASSERT_LE(std::abs(r.rarity_index * r.prevalence - utility), 1e-15 * utility);
  }
}

TEST(Acceptance, Criterion10_GradientExactness) {
  CostMatrix costs;
  costs.cost[0][1] = 2.0;
  costs.cost[1][0] = 5.0;
  WeightParams w{0.5, 1.0, 2.0, 0.25};
  std::vector<LossSpec> losses = {
      LossSpec::cross_entropy(), LossSpec::focal(0.25, 2.0), LossSpec::cost_sensitive(costs),
      LossSpec::clinically_weighted(LossSpec::cross_entropy(), w)};

  RngStream rng(1010);
  const int d = 3;
  double worst = 0.0;
  for (const LossSpec& loss : losses) {
    for (Architecture arch : {Architecture::linear, Architecture::mlp1}) {
      for (int draw = 0; draw < 100; ++draw) {
        Dataset batch;
        batch.dim = d;
        for (int i = 0; i < 16; ++i) {
          DataRecord r;
          r.features = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
          r.label = rng.bernoulli(0.5) ? 1 : 0;
          r.group = i % 2 == 0 ? Group::common : Group::rare;
          r.covariates = {rng.uniform01(), rng.uniform01(), rng.uniform01()};
          batch.records.push_back(r);
        }
        ModelParams params = arch == Architecture::linear
                                 ? ModelParams::linear_zeros(d)
                                 : ModelParams::mlp1_init(d, 4, 2020 + draw);
        for (Eigen::Index i = 0; i < params.values.size(); ++i) {
          params.values[i] = rng.uniform(-1.0, 1.0);
        }
        std::vector<std::size_t> idx(batch.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        BatchGradient bg = batch_gradient(params, batch, idx, loss, std::nullopt);
        Eigen::VectorXd fd =
            oracle::finite_difference_gradient(params, batch, idx, loss, std::nullopt);
        worst = std::max(worst, oracle::max_relative_error(bg.total, fd));
      }
    }
  }
  std::printf("  max relative error vs central differences: %.3g\n", worst);
  EXPECT_LT(worst, 1e-5);
}

TEST(Acceptance, Criterion11_MiEstimator) {
  // Independence: random labels carry no information about the feature.
  MixtureSpec spec = mixture_1d(0.0, 0.0, 1.0, 5.0, 1.0);
  TeacherSpec teacher = teacher_1d(1.0, 0.0, 1.0, 0.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 100000, 111);
  RngStream rng(112);
  for (auto& r : ds.records) r.label = rng.bernoulli(0.5) ? 1 : 0;
  MIEstimate independent = estimate_group_mi(ds, Group::common);
  EXPECT_LT(independent.mi_nats, 0.01);

  // Known threshold rule vs numeric integration.
  const double threshold = 0.3;
  TeacherSpec thr = teacher_1d(1.0, -threshold, 1.0, 0.0, 0.0);
  Dataset thr_ds = sample_mixture(spec, thr, 100000, 113);
  MIEstimate est = estimate_group_mi(thr_ds, Group::common);
  double expected = oracle::binary_entropy(oracle::gaussian_upper_tail(0.0, 1.0, threshold));
  std::printf("  independence MI = %.5f nats; threshold MI = %.5f vs quadrature %.5f\n",
              independent.mi_nats, est.mi_nats, expected);
  EXPECT_NEAR(est.mi_nats, expected, 0.1 * expected);
}

TEST(Acceptance, Criterion12_Reproducibility) {
  std::string dir_a = temp_dir("c12_a");
  std::string dir_b = temp_dir("c12_b");
  std::string base =
      "seeds = 17\n"
      "metrics.bootstrap_resamples = 1000\n";
  ExperimentConfig cfg = parse_config_text(base + "output.dir = " + dir_a + "\n");
  run_experiment(cfg);
  ExperimentConfig cfg_b = parse_config_text(base + "output.dir = " + dir_b + "\n");
  run_experiment(cfg_b);

  auto strip_timestamp = [](const std::string& path) {
    std::ifstream f(path);
    EXPECT_TRUE(f.good()) << path;
    std::string text, line;
    while (std::getline(f, line)) {
      if (line.find("\"timestamp\"") != std::string::npos) continue;
      text += line;
      text += '\n';
    }
    return text;
  };
  // Byte-identical after removing the timestamp field.
  EXPECT_EQ(strip_timestamp(dir_a + "/report.json"), strip_timestamp(dir_b + "/report.json"));
}

class CriterionPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::printf("[%s] %s (%.1fs)\n", info.result()->Passed() ? "PASS" : "FAIL", info.name(),
                static_cast<double>(info.result()->elapsed_time()) / 1000.0);
    std::fflush(stdout);
  }
};

}  // namespace
}  // namespace tailaudit

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new tailaudit::CriterionPrinter);
  return RUN_ALL_TESTS();
}
