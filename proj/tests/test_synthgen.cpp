#include "tailaudit/synthgen.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"

namespace tailaudit {
namespace {

using testsupport::mixture_1d;
using testsupport::reference_mixture;
using testsupport::reference_teacher;
using testsupport::teacher_1d;

TEST(SampleMixture, RareFractionInBand) {
  MixtureSpec spec = mixture_1d(0.1, 0.0, 1.0, 3.0, 0.25);
  TeacherSpec teacher = teacher_1d(1.0, 0.0, 1.0, 0.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 10000, 1234);
  double fraction = static_cast<double>(ds.count(Group::rare)) / ds.size();
  EXPECT_GE(fraction, 0.08);
  EXPECT_LE(fraction, 0.12);
}

TEST(SampleMixture, ZeroWeightMeansAllCommon) {
  MixtureSpec spec = mixture_1d(0.0, 0.0, 1.0, 3.0, 0.25);
  TeacherSpec teacher = teacher_1d(1.0, 0.0, 1.0, 0.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 5000, 99);
  EXPECT_EQ(ds.count(Group::rare), 0u);
  EXPECT_EQ(ds.count(Group::common), 5000u);
}

TEST(SampleMixture, ConstantTeacherLabelsAllOne) {
  MixtureSpec spec = mixture_1d(0.2, 0.0, 1.0, 3.0, 0.25);
  TeacherSpec teacher = teacher_1d(0.0, 1.0, 0.0, 1.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 2000, 5);
  for (const auto& r : ds.records) ASSERT_EQ(r.label, 1);
}

TEST(SampleMixture, DeterministicSerialization) {
  Dataset a = sample_mixture(reference_mixture(), reference_teacher(), 3000, 2024);
  Dataset b = sample_mixture(reference_mixture(), reference_teacher(), 3000, 2024);
  EXPECT_EQ(dataset_to_csv(a), dataset_to_csv(b));
}

TEST(SampleMixture, GroupMeansConverge) {
  MixtureSpec spec = reference_mixture(0.5);
  TeacherSpec teacher = reference_teacher(0.0);
  const std::size_t n = 100000;
  Dataset ds = sample_mixture(spec, teacher, n, 31);
  for (Group g : {Group::common, Group::rare}) {
    const GaussianComponent& comp = g == Group::common ? spec.common : spec.rare;
    std::size_t count = ds.count(g);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(spec.dim);
    for (const auto& r : ds.records) {
      if (r.group == g) mean += r.features;
    }
    mean /= static_cast<double>(count);
    for (int j = 0; j < spec.dim; ++j) {
      double sigma = std::sqrt(comp.covariance(j, j));
      double tolerance = 4.0 * sigma / std::sqrt(static_cast<double>(count));
      EXPECT_NEAR(mean[j], comp.mean[j], tolerance) << "group " << group_name(g) << " coord " << j;
    }
  }
}

TEST(SampleMixture, CovariatesFollowGroupModel) {
  Dataset ds = sample_mixture(reference_mixture(0.5), reference_teacher(), 20000, 8);
  double sum[2] = {0.0, 0.0};
  std::size_t cnt[2] = {0, 0};
  for (const auto& r : ds.records) {
    sum[static_cast<int>(r.group)] += r.covariates.mortality_risk;
    cnt[static_cast<int>(r.group)] += 1;
  }
  double mean_common = sum[0] / cnt[0];
  double mean_rare = sum[1] / cnt[1];
  EXPECT_NEAR(mean_common, 2.0 / 7.0, 0.02);  // Beta(2,5)
  EXPECT_NEAR(mean_rare, 5.0 / 7.0, 0.02);    // Beta(5,2)
}

TEST(SampleMixture, RejectsBadSpecs) {
  MixtureSpec spec = reference_mixture();
  TeacherSpec teacher = reference_teacher();
  spec.common.covariance(0, 1) = 0.5;  // asymmetric
  EXPECT_THROW(sample_mixture(spec, teacher, 100, 1), ValidationError);

  spec = reference_mixture();
  spec.common.covariance = -Eigen::Matrix2d::Identity();  // not PD
  EXPECT_THROW(sample_mixture(spec, teacher, 100, 1), ValidationError);

  spec = reference_mixture();
  teacher.common.weights = Eigen::Vector3d(1.0, 1.0, 1.0);  // dim mismatch
  EXPECT_THROW(sample_mixture(spec, teacher, 100, 1), ValidationError);
}

TEST(RareCountBand, DegenerateAndTypical) {
  EXPECT_TRUE(rare_count_plausible(1000, 0.0, 0));
  EXPECT_FALSE(rare_count_plausible(1000, 0.0, 1));
  EXPECT_TRUE(rare_count_plausible(10000, 0.1, 1000));
  EXPECT_FALSE(rare_count_plausible(10000, 0.1, 1300));
}

TEST(OversampleRare, IdentityFactorIsPermutation) {
  Dataset ds = sample_mixture(reference_mixture(0.2), reference_teacher(), 1000, 3);
  Dataset out = oversample_rare(ds, 1.0, 44);
  ASSERT_EQ(out.size(), ds.size());
  auto key = [](const DataRecord& r) {
    return std::make_tuple(r.features[0], r.features[1], r.label, r.group,
                           r.covariates.mortality_risk);
  };
  std::vector<decltype(key(ds.records[0]))> a, b;
  for (const auto& r : ds.records) a.push_back(key(r));
  for (const auto& r : out.records) b.push_back(key(r));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(OversampleRare, TripleFactorTriplesRareCount) {
  MixtureSpec spec = mixture_1d(0.5, 0.0, 1.0, 3.0, 0.25);
  TeacherSpec teacher = teacher_1d(1.0, 0.0, 1.0, 0.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 300, 12);
  // Pin the rare count exactly by trimming to 100 rare + 100 common.
  Dataset trimmed;
  trimmed.dim = ds.dim;
  std::size_t want_rare = 100, want_common = 100;
  for (const auto& r : ds.records) {
    if (r.group == Group::rare && want_rare > 0) {
      trimmed.records.push_back(r);
      --want_rare;
    } else if (r.group == Group::common && want_common > 0) {
      trimmed.records.push_back(r);
      --want_common;
    }
  }
  ASSERT_EQ(want_rare, 0u);
  ASSERT_EQ(want_common, 0u);
  Dataset out = oversample_rare(trimmed, 3.0, 7);
  EXPECT_EQ(out.count(Group::rare), 300u);
  EXPECT_EQ(out.count(Group::common), 100u);
}

TEST(OversampleRare, EmptyRareGroupFails) {
  MixtureSpec spec = mixture_1d(0.0, 0.0, 1.0, 3.0, 0.25);
  TeacherSpec teacher = teacher_1d(1.0, 0.0, 1.0, 0.0, 0.0);
  Dataset ds = sample_mixture(spec, teacher, 100, 2);
  EXPECT_THROW(oversample_rare(ds, 2.0, 1), EmptySubgroupError);
}

TEST(OversampleRare, NeverAltersRecordContents) {
  Dataset ds = sample_mixture(reference_mixture(0.3), reference_teacher(), 500, 21);
  Dataset out = oversample_rare(ds, 2.5, 9);
  // Every output record must be bit-identical to some input record.
  auto equal_record = [](const DataRecord& a, const DataRecord& b) {
    return a.features == b.features && a.label == b.label && a.group == b.group &&
           a.covariates.mortality_risk == b.covariates.mortality_risk &&
           a.covariates.discovery_value == b.covariates.discovery_value &&
           a.covariates.equity_adjustment == b.covariates.equity_adjustment;
  };
  for (const auto& r : out.records) {
    bool found = false;
    for (const auto& s : ds.records) {
      if (equal_record(r, s)) {
        found = true;
        break;
      }
    }
    ASSERT_TRUE(found);
  }
}

TEST(BayesReference, NoiselessTeacherScoresPerfect) {
  BayesReference ref = bayes_reference(reference_mixture(), reference_teacher(0.0), 20000, 5);
  EXPECT_NEAR(ref.accuracy_common, 1.0, 3.0 * ref.se_common + 1e-12);
  EXPECT_NEAR(ref.accuracy_rare, 1.0, 3.0 * ref.se_rare + 1e-12);
}

TEST(BayesReference, NoiseFloorRecovered) {
  BayesReference ref = bayes_reference(reference_mixture(), reference_teacher(0.2), 50000, 6);
  EXPECT_NEAR(ref.accuracy_common, 0.8, 3.0 * ref.se_common);
  EXPECT_NEAR(ref.accuracy_rare, 0.8, 3.0 * ref.se_rare);
}

// Reference-config oracle, frozen from a 1e6-draw run before the pipeline
// tests were wired (noise 0.05 puts both groups at ~0.95).
TEST(BayesReference, ReferenceConfigFrozenValue) {
  BayesReference ref = bayes_reference(reference_mixture(), reference_teacher(), 1000000, 20240601);
  EXPECT_NEAR(ref.accuracy_common, 0.949874, 5e-6);
  EXPECT_NEAR(ref.accuracy_rare, 0.949683, 5e-6);
  EXPECT_NEAR(ref.accuracy_common, 0.95, 3.0 * ref.se_common);
  EXPECT_NEAR(ref.accuracy_rare, 0.95, 3.0 * ref.se_rare);
}

TEST(BayesReference, RejectsTinyMonteCarlo) {
  EXPECT_THROW(bayes_reference(reference_mixture(), reference_teacher(), 100, 1), ValidationError);
}

TEST(DatasetCsv, RoundTripIsExact) {
  Dataset ds = sample_mixture(reference_mixture(0.3), reference_teacher(), 500, 77);
  std::string text = dataset_to_csv(ds);
  Dataset back = dataset_from_csv(text);
  EXPECT_EQ(dataset_to_csv(back), text);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ASSERT_TRUE(ds.records[i].features == back.records[i].features);
    ASSERT_EQ(ds.records[i].label, back.records[i].label);
    ASSERT_EQ(ds.records[i].group, back.records[i].group);
  }
}

TEST(DatasetCsv, SchemaErrorsNameTheLine) {
  EXPECT_THROW(dataset_from_csv("bogus header\n1,2\n"), SchemaError);
  try {
    dataset_from_csv("x_0,y,group,mortality_risk,discovery_value,equity_adjustment\n1,1,common,0,0\n");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  // Header only.
  EXPECT_THROW(dataset_from_csv("x_0,y,group,mortality_risk,discovery_value,equity_adjustment\n"),
               SchemaError);
}

}  // namespace
}  // namespace tailaudit
