// tailaudit: generate mixture populations, train frequency-weighted and
// corrected classifiers, and audit them with rare-case metrics.
//
// Exit codes: 0 success, 2 config error, 3 infeasibility, 4 numerical
// failure, 5 input schema error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tailaudit/analysis.hpp"
#include "tailaudit/runner.hpp"
#include "tailaudit/version.hpp"

namespace ta = tailaudit;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;  // 0 = use default
};

ta::ExperimentConfig load_or_default(const CommonArgs& args) {
  ta::ExperimentConfig cfg = args.config_path.empty()
                                 ? ta::parse_config_text("")
                                 : ta::load_config(args.config_path);
  if (args.seed) cfg.seeds = {*args.seed};
  if (!args.out.empty()) cfg.output_dir = args.out;
  return cfg;
}

int effective_jobs(const CommonArgs& args) {
  return args.jobs >= 1 ? args.jobs : ta::default_jobs();
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_jobs = false) {
  cmd->add_option("--config", args.config_path, "Experiment config file (defaults when omitted)");
  cmd->add_option("--out", args.out, "Output path override");
  cmd->add_option("--seed", args.seed, "Seed override (replaces the config seed list)");
  if (with_jobs) {
    cmd->add_option("--jobs", args.jobs, "Parallel cells (default: TAILAUDIT_JOBS or 1)");
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ta::Error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw ta::Error("failed writing '" + path + "'");
}

ta::ModelParams train_from_config(const ta::ExperimentConfig& cfg, const ta::Dataset& ds,
                                  std::uint64_t seed, ta::TrainedModel& out_model) {
  ta::TrainConfig tc = cfg.train;
  tc.seed = ta::mix_seed(seed, ta::stream_tag("train"));
  switch (cfg.trainer_kind) {
    case ta::TrainerKind::erm:
      out_model = ta::train_erm(ds, cfg.loss, tc, cfg.metric);
      break;
    case ta::TrainerKind::dro:
      out_model = ta::train_group_dro(ds, cfg.loss, tc, cfg.dro, cfg.metric);
      break;
    case ta::TrainerKind::constrained: {
      ta::ConstraintSpec cs = cfg.constrained;
      cs.metric = cfg.metric;
      out_model = ta::train_constrained(ds, cfg.loss, tc, cs);
      break;
    }
  }
  return out_model.params;
}

ta::AuditOptions audit_options_from(const ta::ExperimentConfig& cfg, std::uint64_t seed) {
  ta::AuditOptions opts;
  opts.metric = cfg.metric;
  opts.bootstrap_resamples = cfg.bootstrap_resamples;
  opts.rcce_bins = cfg.rcce_bins;
  opts.rcce_min_bin_count = cfg.rcce_min_bin_count;
  opts.seed = seed;
  opts.rarity = cfg.rarity;
  if (opts.rarity.empty() && cfg.mixture.rare_weight > 0.0) {
    opts.rarity.push_back({"rare_phenotype", cfg.mixture.rare_weight, 1.0});
  }
  return opts;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"rare-case training and audit toolkit"};
  app.set_version_flag("--version", std::string(ta::kVersion));
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults,
               "Print the documented default configuration and exit");
  app.require_subcommand(0, 1);

  CommonArgs gen_args, train_args, audit_args, grad_args, mi_args, sweep_args, run_args;
  std::string train_data, audit_preds, grad_data, grad_model, mi_data;
  std::size_t gen_n = 0;

  CLI::App* generate = app.add_subcommand("generate", "Sample a labeled synthetic population");
  add_common(generate, gen_args);
  generate->add_option("--n", gen_n, "Record count override (default data.n_train)");

  CLI::App* train = app.add_subcommand("train", "Train one model per the config");
  add_common(train, train_args);
  train->add_option("--data", train_data, "Train on an existing dataset CSV instead of generating");

  CLI::App* audit = app.add_subcommand("audit", "Audit an external predictions CSV");
  add_common(audit, audit_args);
  audit->add_option("--preds", audit_preds, "Predictions CSV (p_hat,y,group)")->required();

  CLI::App* grad = app.add_subcommand("grad", "Gradient contribution decomposition");
  add_common(grad, grad_args);
  grad->add_option("--data", grad_data, "Dataset CSV (generated from config when omitted)");
  grad->add_option("--model", grad_model, "Model JSON (initialization parameters when omitted)");

  CLI::App* mi = app.add_subcommand("mi", "Per-group mutual information of teacher score vs label");
  add_common(mi, mi_args);
  mi->add_option("--data", mi_data, "Dataset CSV (generated from config when omitted)");

  CLI::App* sweep = app.add_subcommand("sweep", "Run the prevalence sweep grid");
  add_common(sweep, sweep_args, true);

  CLI::App* run = app.add_subcommand("run", "Run the full experiment pipeline");
  add_common(run, run_args, true);

  CLI11_PARSE(app, argc, argv);

  if (print_defaults) {
    std::cout << ta::default_config_text();
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 0;
  }

  if (generate->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(gen_args);
    std::uint64_t seed = cfg.seeds.front();
    std::size_t n = gen_n > 0 ? gen_n : cfg.n_train;
    ta::Dataset ds = ta::sample_mixture(cfg.mixture, cfg.teacher, n,
                                        ta::mix_seed(seed, ta::stream_tag("train_data")),
                                        cfg.covariates);
    std::string out = gen_args.out.empty() ? "dataset.csv" : gen_args.out;
    ta::write_dataset_csv(ds, out);
    std::cout << "wrote " << ds.size() << " records (" << ds.count(ta::Group::rare)
              << " rare) to " << out << "\n";
    return 0;
  }

  if (train->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(train_args);
    std::uint64_t seed = cfg.seeds.front();
    ta::Dataset ds = train_data.empty()
                         ? ta::sample_mixture(cfg.mixture, cfg.teacher, cfg.n_train,
                                              ta::mix_seed(seed, ta::stream_tag("train_data")),
                                              cfg.covariates)
                         : ta::read_dataset_csv(train_data);
    ta::TrainedModel model;
    train_from_config(cfg, ds, seed, model);
    std::string out = train_args.out.empty() ? "model.json" : train_args.out;
    ta::write_trained_model_json(model, out);
    const auto& last = model.history.back();
    std::cout << "trainer=" << ta::trainer_kind_name(cfg.trainer_kind)
              << " epochs=" << model.history.size()
              << " final_objective=" << last.train_objective;
    if (last.val_performance.p_common) std::cout << " val_p_common=" << *last.val_performance.p_common;
    if (last.val_performance.p_rare) std::cout << " val_p_rare=" << *last.val_performance.p_rare;
    std::cout << "\nwrote " << out << "\n";
    return 0;
  }

  if (audit->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(audit_args);
    std::uint64_t seed = audit_args.seed ? *audit_args.seed : cfg.seeds.front();
    ta::AuditReport report =
        ta::audit_predictions_file(audit_preds, audit_options_from(cfg, seed));
    std::string out = audit_args.out.empty() ? "audit.json" : audit_args.out;
    write_text(out, ta::audit_to_json(report));
    std::printf("metric          %s\n", report.metric.name().c_str());
    if (report.performance.p_common) std::printf("p_common        %.6f\n", *report.performance.p_common);
    if (report.performance.p_rare) std::printf("p_rare          %.6f\n", *report.performance.p_rare);
    std::printf("rcpg            %.6f  [%.6f, %.6f]\n", report.rcpg_value, report.rcpg_ci.lower,
                report.rcpg_ci.upper);
    std::printf("rcce            %.6f\n", report.calibration.rcce);
    for (const auto& r : report.rarity_records) {
      std::printf("rarity          %s index=%.4g%s\n", r.condition_id.c_str(), r.rarity_index,
                  r.flagged ? " FLAGGED" : "");
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
  }

  if (grad->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(grad_args);
    std::uint64_t seed = cfg.seeds.front();
    ta::Dataset ds = grad_data.empty()
                         ? ta::sample_mixture(cfg.mixture, cfg.teacher, cfg.n_train,
                                              ta::mix_seed(seed, ta::stream_tag("train_data")),
                                              cfg.covariates)
                         : ta::read_dataset_csv(grad_data);
    ta::ModelParams params;
    if (!grad_model.empty()) {
      params = ta::read_model_json(grad_model);
    } else if (cfg.train.architecture == ta::Architecture::linear) {
      params = ta::ModelParams::linear_zeros(ds.dim);
    } else {
      params = ta::ModelParams::mlp1_init(ds.dim, cfg.train.hidden_width,
                                          ta::mix_seed(seed, ta::stream_tag("train")));
    }
    ta::GradientDecomposition d = ta::decompose_gradients(ds, params, cfg.loss);
    std::string out = grad_args.out.empty() ? "grad.json" : grad_args.out;
    write_text(out, ta::decomposition_to_json(d));
    std::printf("pi_hat              %.6f\n", d.pi_hat);
    std::printf("norm_common         %.6e\n", d.norm_common);
    std::printf("norm_rare           %.6e\n", d.norm_rare);
    std::printf("contribution_ratio  %.6e (bound %.6e)\n", d.contribution_ratio, d.ratio_bound);
    std::printf("wrote %s\n", out.c_str());
    return 0;
  }

  if (mi->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(mi_args);
    std::uint64_t seed = cfg.seeds.front();
    ta::Dataset ds = mi_data.empty()
                         ? ta::sample_mixture(cfg.mixture, cfg.teacher, cfg.n_train,
                                              ta::mix_seed(seed, ta::stream_tag("train_data")),
                                              cfg.covariates)
                         : ta::read_dataset_csv(mi_data);
    std::vector<ta::MIEstimate> estimates;
    for (ta::Group g : {ta::Group::common, ta::Group::rare}) {
      ta::ScoreProjection proj{cfg.teacher.for_group(g).weights, cfg.teacher.for_group(g).bias};
      estimates.push_back(ta::estimate_group_mi(ds, g, cfg.mi_bins, proj));
      const auto& e = estimates.back();
      std::printf("I(score;Y | %-6s) = %.4f nats (se %.4f, n=%zu)\n",
                  std::string(ta::group_name(g)).c_str(), e.mi_nats, e.standard_error,
                  e.sample_count);
    }
    std::string out = mi_args.out.empty() ? "mi.json" : mi_args.out;
    write_text(out, ta::mi_to_json(estimates));
    std::printf("wrote %s\n", out.c_str());
    return 0;
  }

  if (sweep->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(sweep_args);
    ta::SweepResult result = ta::run_sweep(cfg, effective_jobs(sweep_args));
    std::size_t failed = 0;
    for (const auto& c : result.cells) {
      if (!c.error.empty()) ++failed;
    }
    std::printf("sweep: %zu cells, %zu failed; outputs in %s\n", result.cells.size(), failed,
                cfg.output_dir.c_str());
    return failed == 0 ? 0 : 1;
  }

  if (run->parsed()) {
    ta::ExperimentConfig cfg = load_or_default(run_args);
    ta::ExperimentReport report = ta::run_experiment(cfg, effective_jobs(run_args));
    std::printf("config_hash   %s\n", report.config_hash.c_str());
    std::printf("seeds         %zu\n", report.per_seed.size());
    if (report.median_p_common) std::printf("median p_common  %.6f\n", *report.median_p_common);
    if (report.median_p_rare) std::printf("median p_rare    %.6f\n", *report.median_p_rare);
    if (report.median_rcpg) std::printf("median rcpg      %.6f\n", *report.median_rcpg);
    if (report.median_rcce) std::printf("median rcce      %.6f\n", *report.median_rcce);
    if (report.median_epsilon) std::printf("median epsilon   %.6f\n", *report.median_epsilon);
    std::printf("report in %s/report.json\n", cfg.output_dir.c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ta::InfeasibilityError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const ta::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 5;
  } catch (const ta::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const ta::InstabilityError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const ta::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
