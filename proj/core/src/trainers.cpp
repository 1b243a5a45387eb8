#include "tailaudit/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "tailaudit/hash.hpp"

namespace tailaudit {

void TrainConfig::validate() const {
  // 0 is allowed as the degenerate zero-step-size case.
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw ValidationError("validation_fraction must lie in (0, 0.5]");
  }
  if (architecture == Architecture::mlp1 && hidden_width < 1) {
    throw ValidationError("hidden_width must be >= 1 for mlp1");
  }
}

void DROConfig::validate() const {
  if (!(group_step_size > 0.0)) throw ValidationError("group_step_size must be > 0");
  if (groups.empty()) throw ValidationError("DRO group set must be nonempty");
  if (groups.size() > 2) throw ValidationError("DRO supports the two-group simplex");
  if (groups.size() == 2 && groups[0] == groups[1]) {
    throw ValidationError("DRO group set has a duplicate");
  }
}

void ConstraintSpec::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
  if (!(p_baseline > 0.0 && p_baseline < 1.0)) {
    throw ValidationError("p_baseline must lie in (0, 1)");
  }
  metric.validate();
}

SplitIndices stratified_split(const Dataset& ds, double validation_fraction,
                              std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw ValidationError("validation_fraction must lie in (0, 0.5]");
  }
  // Strata in fixed order: (common,0), (common,1), (rare,0), (rare,1).
  std::vector<std::size_t> strata[4];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const DataRecord& r = ds.records[i];
    int s = 2 * static_cast<int>(r.group) + r.label;
    strata[s].push_back(i);
  }

  SplitIndices split;
  for (int s = 0; s < 4; ++s) {
    auto& idx = strata[s];
    if (idx.empty()) continue;
    RngStream rng(mix_seed(mix_seed(seed, stream_tag("split")), static_cast<std::uint64_t>(s)));
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(validation_fraction * static_cast<double>(idx.size())));
    if (n_val >= idx.size()) n_val = idx.size() - 1;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_val ? split.validation : split.train).push_back(idx[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  if (split.train.empty()) throw ValidationError("degenerate split: empty training set");
  return split;
}

PredictionSet predict_dataset(const ModelParams& params, const Dataset& ds) {
  PredictionSet preds;
  preds.records.reserve(ds.size());
  for (const auto& r : ds.records) {
    preds.records.push_back({predict_proba(params, r.features), r.label, r.group});
  }
  return preds;
}

namespace {

ModelParams initial_params(const TrainConfig& cfg, int input_dim) {
  if (cfg.architecture == Architecture::linear) {
    return ModelParams::linear_zeros(input_dim);
  }
  return ModelParams::mlp1_init(input_dim, cfg.hidden_width, cfg.seed);
}

std::vector<std::size_t> shuffled_epoch_order(const std::vector<std::size_t>& train,
                                              std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order = train;
  RngStream rng(mix_seed(mix_seed(seed, stream_tag("shuffle")), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

PredictionSet predictions_on(const Dataset& ds, const std::vector<std::size_t>& indices,
                             const ModelParams& params) {
  PredictionSet preds;
  preds.records.reserve(indices.size());
  for (std::size_t i : indices) {
    const DataRecord& r = ds.records[i];
    preds.records.push_back({predict_proba(params, r.features), r.label, r.group});
  }
  return preds;
}

/// Like group_performance but a group whose metric is undefined is reported
/// absent instead of failing the epoch.
GroupPerformance soft_group_performance(const PredictionSet& preds, const MetricKind& metric) {
  GroupPerformance gp;
  gp.metric = metric;
  for (Group g : {Group::common, Group::rare}) {
    std::vector<PredRecord> sub = preds.subset(g);
    std::size_t n = sub.size();
    if (g == Group::common) {
      gp.n_common = n;
    } else {
      gp.n_rare = n;
    }
    if (n == 0) continue;
    try {
      double v = metric.kind == MetricKind::Kind::auroc
                     ? auroc(sub)
                     : sensitivity_at_specificity(sub, metric.specificity);
      if (g == Group::common) {
        gp.p_common = v;
      } else {
        gp.p_rare = v;
      }
    } catch (const UndefinedMetricError&) {
      // leave absent
    }
  }
  return gp;
}

void sgd_step(ModelParams& params, Eigen::VectorXd& velocity, const Eigen::VectorXd& grad,
              const TrainConfig& cfg) {
  velocity = cfg.momentum * velocity + grad;
  params.values -= cfg.learning_rate * velocity;
}

void check_train_labels(const Dataset& ds, const std::vector<std::size_t>& train) {
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i : train) {
    (ds.records[i].label == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos < 2 || n_neg < 2) {
    throw ValidationError("degenerate split: training split needs >= 2 records of each label");
  }
}

std::string canonical_train_config_text(const TrainConfig& cfg, const LossSpec& loss,
                                        const std::string& variant,
                                        const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> kv;
  kv["trainer.architecture"] = std::string(architecture_name(cfg.architecture));
  kv["trainer.batch_size"] = std::to_string(cfg.batch_size);
  kv["trainer.epochs"] = std::to_string(cfg.epochs);
  kv["trainer.hidden_width"] = std::to_string(cfg.hidden_width);
  kv["trainer.learning_rate"] = format_double(cfg.learning_rate);
  kv["trainer.momentum"] = format_double(cfg.momentum);
  kv["trainer.seed"] = std::to_string(cfg.seed);
  kv["trainer.validation_fraction"] = format_double(cfg.validation_fraction);
  kv["trainer.variant"] = variant;
  kv["loss.kind"] = std::string(loss_kind_name(loss.kind));
  kv["loss.base"] = std::string(loss_kind_name(loss.base));
  kv["loss.focal_alpha"] = format_double(loss.focal_alpha);
  kv["loss.focal_gamma"] = format_double(loss.focal_gamma);
  kv["loss.cost"] = format_double(loss.cost.cost[0][0]) + " " + format_double(loss.cost.cost[0][1]) +
                    " " + format_double(loss.cost.cost[1][0]) + " " +
                    format_double(loss.cost.cost[1][1]);
  kv["loss.weight"] = format_double(loss.weight.baseline) + " " + format_double(loss.weight.alpha) +
                      " " + format_double(loss.weight.beta) + " " +
                      format_double(loss.weight.gamma);
  for (const auto& [k, v] : extra) kv[k] = v;
  std::string text;
  for (const auto& [k, v] : kv) {
    text += k;
    text += " = ";
    text += v;
    text += '\n';
  }
  return text;
}

template <typename BatchDirection, typename EpochObjective, typename EpochHook>
TrainedModel run_sgd(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                     const MetricKind& val_metric, const std::string& variant,
                     const std::map<std::string, std::string>& hash_extra,
                     BatchDirection&& batch_direction, EpochObjective&& epoch_objective,
                     EpochHook&& epoch_hook) {
  cfg.validate();
  loss.validate();
  ds.validate();
  if (ds.size() < 2) throw ValidationError("training requires at least 2 records");

  SplitIndices split = stratified_split(ds, cfg.validation_fraction, cfg.seed);
  check_train_labels(ds, split.train);

  TrainedModel model;
  model.seed = cfg.seed;
  model.config_hash = sha256_hex(canonical_train_config_text(cfg, loss, variant, hash_extra));
  model.params = initial_params(cfg, ds.dim);

  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(model.params.param_count());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = shuffled_epoch_order(split.train, cfg.seed, epoch);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> batch(order.data() + start, len);
      try {
        BatchGradient bg = batch_gradient(model.params, ds, batch, loss);
        sgd_step(model.params, velocity, batch_direction(bg), cfg);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
      if (!model.params.values.allFinite()) {
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ": parameters became non-finite");
      }
    }

    EpochRecord rec;
    ObjectiveValue train_obj = objective_value(ds, split.train, model.params, loss);
    rec.train_objective = epoch_objective(train_obj);
    if (!split.validation.empty()) {
      PredictionSet val_preds = predictions_on(ds, split.validation, model.params);
      rec.val_performance = soft_group_performance(val_preds, val_metric);
      ObjectiveValue val_obj = objective_value(ds, split.validation, model.params, loss);
      rec.val_loss_common = val_obj.common;
      rec.val_loss_rare = val_obj.rare;
    } else {
      rec.val_performance.metric = val_metric;
    }
    epoch_hook(epoch, rec, model.params);
    model.history.push_back(std::move(rec));
  }
  return model;
}

}  // namespace

TrainedModel train_erm(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                       const MetricKind& val_metric) {
  return run_sgd(
      ds, loss, cfg, val_metric, "erm", {},
      [](const BatchGradient& bg) { return bg.total; },
      [](const ObjectiveValue& obj) { return obj.total; },
      [](int, EpochRecord&, const ModelParams&) {});
}

TrainedModel train_group_dro(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                             const DROConfig& dro, const MetricKind& val_metric) {
  dro.validate();
  for (Group g : dro.groups) {
    bool found = false;
    for (const auto& r : ds.records) {
      if (r.group == g) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw EmptySubgroupError(std::string("train_group_dro: group '") +
                               std::string(group_name(g)) + "' missing from dataset");
    }
  }

  // q over the configured group simplex, uniform start.
  std::array<double, 2> q{0.0, 0.0};
  for (Group g : dro.groups) q[static_cast<int>(g)] = 1.0 / static_cast<double>(dro.groups.size());
  auto in_set = [&](Group g) {
    return std::find(dro.groups.begin(), dro.groups.end(), g) != dro.groups.end();
  };

  auto direction = [&, in_set](const BatchGradient& bg) {
    // Exponentiated-gradient ascent on the group weights, then the
    // q-weighted descent direction. Groups absent from the batch keep
    // their weight factor.
    bool has_common = in_set(Group::common) && bg.common.has_value();
    bool has_rare = in_set(Group::rare) && bg.rare.has_value();
    if (has_common) {
      q[0] *= std::exp(dro.group_step_size * *bg.loss_common);
    }
    if (has_rare) {
      q[1] *= std::exp(dro.group_step_size * *bg.loss_rare);
    }
    double z = q[0] + q[1];
    if (!(z > 0.0) || !std::isfinite(z)) {
      throw NumericalError("DRO group weights degenerated");
    }
    q[0] /= z;
    q[1] /= z;

    Eigen::VectorXd dir = Eigen::VectorXd::Zero(bg.total.size());
    if (has_common) dir += q[0] * *bg.common;
    if (has_rare) dir += q[1] * *bg.rare;
    return dir;
  };

  auto objective = [&](const ObjectiveValue& obj) {
    double v = 0.0;
    if (in_set(Group::common) && obj.common) v += q[0] * *obj.common;
    if (in_set(Group::rare) && obj.rare) v += q[1] * *obj.rare;
    return v;
  };

  auto hook = [&](int, EpochRecord& rec, const ModelParams&) { rec.dro_weights = q; };

  std::map<std::string, std::string> extra;
  extra["dro.group_step_size"] = format_double(dro.group_step_size);
  std::string groups;
  for (Group g : dro.groups) {
    if (!groups.empty()) groups += " ";
    groups += std::string(group_name(g));
  }
  extra["dro.groups"] = groups;
  return run_sgd(ds, loss, cfg, val_metric, "dro", extra, direction, objective, hook);
}

TrainedModel train_constrained(const Dataset& ds, const LossSpec& loss, const TrainConfig& cfg,
                               const ConstraintSpec& constraint) {
  constraint.validate();
  if (ds.count(Group::common) == 0 || ds.count(Group::rare) == 0) {
    throw EmptySubgroupError("train_constrained requires both groups");
  }

  struct Checkpoint {
    ModelParams params;
    double objective = 0.0;
    int epoch = -1;
  };
  Checkpoint best;
  double best_p_common = -1.0;

  auto direction = [&](const BatchGradient& bg) {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(bg.total.size());
    if (bg.common) dir += *bg.common;
    if (bg.rare) dir += constraint.lambda * *bg.rare;
    return dir;
  };

  auto objective = [&](const ObjectiveValue& obj) {
    double v = obj.common ? *obj.common : 0.0;
    if (obj.rare) v += constraint.lambda * *obj.rare;
    return v;
  };

  auto hook = [&](int epoch, EpochRecord& rec, const ModelParams& params) {
    if (!rec.val_performance.p_common) {
      throw ValidationError(
          "degenerate split: common-group validation metric undefined for the constraint check");
    }
    double p_common = *rec.val_performance.p_common;
    best_p_common = std::max(best_p_common, p_common);
    if (p_common >= constraint.p_baseline &&
        (best.epoch < 0 || rec.train_objective < best.objective)) {
      best.params = params;
      best.objective = rec.train_objective;
      best.epoch = epoch;
    }
  };

  // Validation must carry both groups and both labels so the constraint and
  // audit metrics are well defined.
  SplitIndices probe = stratified_split(ds, cfg.validation_fraction, cfg.seed);
  std::size_t strata[4] = {0, 0, 0, 0};
  for (std::size_t i : probe.validation) {
    const DataRecord& r = ds.records[i];
    strata[2 * static_cast<int>(r.group) + r.label] += 1;
  }
  for (int s = 0; s < 4; ++s) {
    if (strata[s] == 0) {
      throw ValidationError(
          "degenerate split: validation split must contain both labels of both groups");
    }
  }

  std::map<std::string, std::string> extra;
  extra["constraint.lambda"] = format_double(constraint.lambda);
  extra["constraint.p_baseline"] = format_double(constraint.p_baseline);
  extra["constraint.metric"] = constraint.metric.name();
  TrainedModel model = run_sgd(ds, loss, cfg, constraint.metric, "constrained", extra, direction,
                               objective, hook);

  if (best.epoch < 0) {
    throw InfeasibilityError(
        "no epoch reached the common-group baseline " + format_double(constraint.p_baseline) +
            "; best achieved " + format_double(best_p_common),
        best_p_common);
  }
  model.params = best.params;
  model.selected_epoch = best.epoch;
  return model;
}

std::string trained_model_to_json(const TrainedModel& model) {
  nlohmann::json j;
  j["params"] = nlohmann::json::parse(model_to_json(model.params));
  j["seed"] = model.seed;
  j["config_hash"] = model.config_hash;
  if (model.selected_epoch) j["selected_epoch"] = *model.selected_epoch;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& rec : model.history) {
    nlohmann::json h;
    h["train_objective"] = rec.train_objective;
    nlohmann::json vp;
    vp["metric"] = rec.val_performance.metric.name();
    vp["n_common"] = rec.val_performance.n_common;
    vp["n_rare"] = rec.val_performance.n_rare;
    if (rec.val_performance.p_common) vp["p_common"] = *rec.val_performance.p_common;
    if (rec.val_performance.p_rare) vp["p_rare"] = *rec.val_performance.p_rare;
    h["validation"] = vp;
    if (rec.val_loss_common) h["val_loss_common"] = *rec.val_loss_common;
    if (rec.val_loss_rare) h["val_loss_rare"] = *rec.val_loss_rare;
    if (rec.dro_weights) {
      h["dro_weights"] = {(*rec.dro_weights)[0], (*rec.dro_weights)[1]};
    }
    hist.push_back(h);
  }
  j["history"] = hist;
  return j.dump(2) + "\n";
}

void write_trained_model_json(const TrainedModel& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << trained_model_to_json(model);
}

}  // namespace tailaudit
