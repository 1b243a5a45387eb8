#include <benchmark/benchmark.h>

#include "tailaudit/analysis.hpp"
#include "tailaudit/metrics.hpp"
#include "tailaudit/synthgen.hpp"
#include "tailaudit/trainers.hpp"

namespace {

using namespace tailaudit;

MixtureSpec bench_mixture(double pi) {
  MixtureSpec spec;
  spec.dim = 2;
  spec.rare_weight = pi;
  spec.common.mean = Eigen::Vector2d(0.0, 0.0);
  spec.common.covariance = Eigen::Matrix2d::Identity();
  spec.rare.mean = Eigen::Vector2d(3.0, 1.5);
  spec.rare.covariance = 0.25 * Eigen::Matrix2d::Identity();
  return spec;
}

TeacherSpec bench_teacher() {
  TeacherSpec teacher;
  teacher.common.weights = Eigen::Vector2d(1.0, 1.0);
  teacher.common.bias = 0.0;
  teacher.rare.weights = Eigen::Vector2d(-1.0, 1.0);
  teacher.rare.bias = 2.0;
  teacher.label_noise = 0.05;
  return teacher;
}

void BM_SampleMixture(benchmark::State& state) {
  MixtureSpec spec = bench_mixture(0.05);
  TeacherSpec teacher = bench_teacher();
  std::uint64_t seed = 1;
  for (auto _ : state) {
    Dataset ds = sample_mixture(spec, teacher, static_cast<std::size_t>(state.range(0)), seed++);
    benchmark::DoNotOptimize(ds.records.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleMixture)->Arg(1000)->Arg(20000);

void BM_BatchGradientLinear(benchmark::State& state) {
  Dataset ds = sample_mixture(bench_mixture(0.05), bench_teacher(),
                              static_cast<std::size_t>(state.range(0)), 7);
  ModelParams params = ModelParams::linear_zeros(2);
  params.values << 0.4, -0.3, 0.1;
  LossSpec ce = LossSpec::cross_entropy();
  for (auto _ : state) {
    BatchGradient bg = batch_gradient(params, ds, ce);
    benchmark::DoNotOptimize(bg.total.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchGradientLinear)->Arg(64)->Arg(20000);

void BM_BatchGradientFocalMlp(benchmark::State& state) {
  Dataset ds = sample_mixture(bench_mixture(0.05), bench_teacher(),
                              static_cast<std::size_t>(state.range(0)), 9);
  ModelParams params = ModelParams::mlp1_init(2, 8, 3);
  LossSpec focal = LossSpec::focal(0.25, 2.0);
  for (auto _ : state) {
    BatchGradient bg = batch_gradient(params, ds, focal);
    benchmark::DoNotOptimize(bg.total.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchGradientFocalMlp)->Arg(64)->Arg(4096);

PredictionSet bench_predictions(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed);
  PredictionSet preds;
  preds.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = rng.uniform01();
    Group g = i % 20 == 0 ? Group::rare : Group::common;
    preds.records.push_back({p, rng.bernoulli(p) ? 1 : 0, g});
  }
  return preds;
}

void BM_GroupAuroc(benchmark::State& state) {
  PredictionSet preds = bench_predictions(static_cast<std::size_t>(state.range(0)), 5);
  MetricKind metric = MetricKind::auroc();
  for (auto _ : state) {
    GroupPerformance gp = group_performance(preds, metric);
    benchmark::DoNotOptimize(gp.p_common);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GroupAuroc)->Arg(2000)->Arg(20000);

void BM_Rcce(benchmark::State& state) {
  PredictionSet preds = bench_predictions(static_cast<std::size_t>(state.range(0)), 11);
  for (auto _ : state) {
    CalibrationReport rep = rcce(preds);
    benchmark::DoNotOptimize(rep.rcce);
  }
}
BENCHMARK(BM_Rcce)->Arg(20000);

void BM_BootstrapRcpg(benchmark::State& state) {
  PredictionSet preds = bench_predictions(4000, 13);
  MetricClosure closure = rcpg_closure(MetricKind::auroc());
  for (auto _ : state) {
    BootstrapInterval ci = bootstrap_ci(preds, closure, static_cast<int>(state.range(0)), 1);
    benchmark::DoNotOptimize(ci.point);
  }
}
BENCHMARK(BM_BootstrapRcpg)->Arg(100);

void BM_GroupMi(benchmark::State& state) {
  Dataset ds = sample_mixture(bench_mixture(0.5), bench_teacher(),
                              static_cast<std::size_t>(state.range(0)), 17);
  ScoreProjection proj{Eigen::Vector2d(1.0, 1.0), 0.0};
  for (auto _ : state) {
    MIEstimate est = estimate_group_mi(ds, Group::common, 32, proj);
    benchmark::DoNotOptimize(est.mi_nats);
  }
}
BENCHMARK(BM_GroupMi)->Arg(20000);

void BM_TrainErmEpoch(benchmark::State& state) {
  Dataset ds = sample_mixture(bench_mixture(0.05), bench_teacher(), 20000, 19);
  LossSpec ce = LossSpec::cross_entropy();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.seed = 2;
  for (auto _ : state) {
    TrainedModel model = train_erm(ds, ce, cfg);
    benchmark::DoNotOptimize(model.params.values.data());
  }
  state.SetItemsProcessed(state.iterations() * 20000);
}
BENCHMARK(BM_TrainErmEpoch);

}  // namespace

BENCHMARK_MAIN();
