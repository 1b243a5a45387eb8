#include "tailaudit/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "json_convert.hpp"
#include "tailaudit/hash.hpp"
#include "tailaudit/version.hpp"

namespace fs = std::filesystem;

namespace tailaudit {

using detail::calibration_json;
using detail::decomposition_json;
using detail::gap_json;
using detail::interval_json;
using detail::performance_json;
using detail::rarity_json;

std::string_view trainer_kind_name(TrainerKind k) {
  switch (k) {
    case TrainerKind::erm: return "erm";
    case TrainerKind::dro: return "dro";
    case TrainerKind::constrained: return "constrained";
  }
  return "?";
}

namespace {

// ---------------------------------------------------------------------------
// key = value config file

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

class ConfigMap {
 public:
  static ConfigMap from_text(std::string_view text) {
    ConfigMap m;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t pos = text.find('\n', start);
      if (pos == std::string_view::npos) pos = text.size();
      std::string_view line = text.substr(start, pos - start);
      start = pos + 1;
      ++line_no;
      if (std::size_t h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
      line = trim(line);
      if (line.empty()) {
        if (pos == text.size()) break;
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      }
      for (char c : key) {
        if (!(std::islower(static_cast<unsigned char>(c)) ||
              std::isdigit(static_cast<unsigned char>(c)) || c == '_' || c == '.')) {
          throw ConfigError("line " + std::to_string(line_no) + ": invalid key '" + key + "'");
        }
      }
      if (m.values_.count(key)) {
        throw ConfigError("duplicate key '" + key + "'");
      }
      m.values_[key] = value;
      if (pos == text.size()) break;
    }
    return m;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    return parse_double(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::int64_t v = 0;
    auto sv = trim(it->second);
    auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
    if (res.ec != std::errc{} || res.ptr != sv.data() + sv.size()) {
      throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
    }
    return v;
  }

  bool get_bool(const std::string& key, bool def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw ConfigError(key + ": expected 'true' or 'false', got '" + it->second + "'");
  }

  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    for (const auto& tok : tokenize(it->second)) out.push_back(parse_double(key, tok));
    return out;
  }

  std::vector<std::uint64_t> get_u64s(const std::string& key,
                                      const std::vector<std::uint64_t>& def) {
    accessed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<std::uint64_t> out;
    for (const auto& tok : tokenize(it->second)) {
      std::uint64_t v = 0;
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
        throw ConfigError(key + ": expected unsigned integers, got '" + tok + "'");
      }
      out.push_back(v);
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : values_) {
      if (!accessed_.count(key)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    }
  }

 private:
  static double parse_double(const std::string& key, std::string_view tok) {
    tok = trim(tok);
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
      throw ConfigError(key + ": expected a number, got '" + std::string(tok) + "'");
    }
    return v;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> accessed_;
};

// ---------------------------------------------------------------------------
// defaults (the reference configuration) and struct <-> text mapping

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_matrix_rowmajor(const std::string& key, const std::vector<double>& v, int d) {
  if (v.size() != static_cast<std::size_t>(d) * d) {
    throw ConfigError(key + ": expected " + std::to_string(d * d) + " entries (row-major " +
                      std::to_string(d) + "x" + std::to_string(d) + ")");
  }
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = v[static_cast<std::size_t>(i) * d + j];
  }
  return m;
}

CovariateDistribution parse_covariate(const std::string& key, const std::string& text) {
  auto toks = tokenize(text);
  if (toks.size() == 3 && toks[0] == "beta") {
    double a = 0.0, b = 0.0;
    auto pa = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), a);
    auto pb = std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(), b);
    if (pa.ec != std::errc{} || pb.ec != std::errc{} || !(a > 0.0) || !(b > 0.0)) {
      throw ConfigError(key + ": beta parameters must be positive numbers");
    }
    return CovariateDistribution::beta_dist(a, b);
  }
  if (toks.size() == 2 && toks[0] == "const") {
    double v = 0.0;
    auto pv = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), v);
    if (pv.ec != std::errc{} || !(v >= 0.0 && v <= 1.0)) {
      throw ConfigError(key + ": const value must lie in [0, 1]");
    }
    return CovariateDistribution::constant(v);
  }
  throw ConfigError(key + ": expected 'beta <a> <b>' or 'const <v>'");
}

std::string covariate_text(const CovariateDistribution& c) {
  if (c.kind == CovariateDistribution::Kind::constant) {
    return "const " + format_double(c.value);
  }
  return "beta " + format_double(c.a) + " " + format_double(c.b);
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> from_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<double> from_matrix_rowmajor(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

LossKind parse_loss_kind(const std::string& key, const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "focal") return LossKind::focal;
  if (s == "cost_sensitive") return LossKind::cost_sensitive;
  if (s == "clinically_weighted") return LossKind::clinically_weighted;
  throw ConfigError(key + ": unknown loss variant '" + s + "'");
}

std::string rarity_text(const std::vector<RaritySpec>& rarity) {
  if (rarity.empty()) return "auto";
  std::string out;
  for (std::size_t i = 0; i < rarity.size(); ++i) {
    if (i) out += " ; ";
    out += rarity[i].condition_id + " " + format_double(rarity[i].prevalence) + " " +
           format_double(rarity[i].clinical_utility_score);
  }
  return out;
}

std::vector<RaritySpec> parse_rarity(const std::string& key, const std::string& text) {
  if (trim(text) == "auto") return {};
  std::vector<RaritySpec> out;
  std::size_t start = 0;
  std::string str(text);
  while (start <= str.size()) {
    std::size_t pos = str.find(';', start);
    std::string part = str.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    auto toks = tokenize(part);
    if (toks.size() != 3) {
      throw ConfigError(key + ": expected ';'-separated '<id> <prevalence> <utility>' triples");
    }
    RaritySpec r;
    r.condition_id = toks[0];
    auto p1 = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), r.prevalence);
    auto p2 = std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(),
                              r.clinical_utility_score);
    if (p1.ec != std::errc{} || p2.ec != std::errc{}) {
      throw ConfigError(key + ": malformed number in rarity record");
    }
    if (!(r.prevalence > 0.0 && r.prevalence <= 1.0)) {
      throw ConfigError(key + ": prevalence must lie in (0, 1]");
    }
    if (!(r.clinical_utility_score > 0.0)) {
      throw ConfigError(key + ": utility must be positive");
    }
    out.push_back(std::move(r));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr char kRarityNote[] =
    "rarity_index = clinical_utility_score / prevalence; the >100 flag threshold is "
    "scale-dependent in the chosen utility units";

}  // namespace

void ExperimentConfig::validate() const {
  mixture.validate();
  teacher.validate(mixture.dim);
  covariates.validate();
  if (n_train < 2 || n_test < 1) throw ConfigError("data.n_train/n_test too small");
  loss.validate();
  train.validate();
  dro.validate();
  constrained.validate();
  metric.validate();
  if (bootstrap_resamples < 100) {
    throw ConfigError("metrics.bootstrap_resamples: must be >= 100");
  }
  if (rcce_bins < 2) throw ConfigError("metrics.rcce_bins: must be >= 2");
  if (seeds.empty()) throw ConfigError("seeds: must be nonempty");
  for (double pi : sweep_pi) {
    if (!(pi >= 0.0 && pi < 1.0)) throw ConfigError("sweep.pi: each value must lie in [0, 1)");
  }
  if (compute_convergence_gap && train.architecture != Architecture::linear) {
    throw ConfigError("analysis.convergence_gap: requires trainer.architecture = linear");
  }
}

ExperimentConfig parse_config_text(std::string_view text) {
  ConfigMap m = ConfigMap::from_text(text);
  ExperimentConfig cfg;

  int dim = static_cast<int>(m.get_int("mixture.dim", 2));
  if (dim < 1) throw ConfigError("mixture.dim: must be >= 1");
  cfg.mixture.dim = dim;
  cfg.mixture.rare_weight = m.get_double("mixture.rare_weight", 0.05);
  if (!(cfg.mixture.rare_weight >= 0.0 && cfg.mixture.rare_weight < 1.0)) {
    throw ConfigError("mixture.rare_weight: must lie in [0, 1)");
  }
  cfg.mixture.common.mean = to_vector(m.get_doubles("mixture.common.mean", {0.0, 0.0}));
  cfg.mixture.rare.mean = to_vector(m.get_doubles("mixture.rare.mean", {3.0, 1.5}));
  cfg.mixture.common.covariance = to_matrix_rowmajor(
      "mixture.common.cov", m.get_doubles("mixture.common.cov", {1.0, 0.0, 0.0, 1.0}), dim);
  cfg.mixture.rare.covariance = to_matrix_rowmajor(
      "mixture.rare.cov", m.get_doubles("mixture.rare.cov", {0.25, 0.0, 0.0, 0.25}), dim);
  if (cfg.mixture.common.mean.size() != dim || cfg.mixture.rare.mean.size() != dim) {
    throw ConfigError("mixture.*.mean: length must equal mixture.dim");
  }

  cfg.teacher.common.weights = to_vector(m.get_doubles("teacher.common.weights", {1.0, 1.0}));
  cfg.teacher.common.bias = m.get_double("teacher.common.bias", 0.0);
  cfg.teacher.rare.weights = to_vector(m.get_doubles("teacher.rare.weights", {-1.0, 1.0}));
  cfg.teacher.rare.bias = m.get_double("teacher.rare.bias", 2.0);
  cfg.teacher.label_noise = m.get_double("teacher.label_noise", 0.05);
  if (!(cfg.teacher.label_noise >= 0.0 && cfg.teacher.label_noise < 0.5)) {
    throw ConfigError("teacher.label_noise: must lie in [0, 0.5)");
  }
  if (cfg.teacher.common.weights.size() != dim || cfg.teacher.rare.weights.size() != dim) {
    throw ConfigError("teacher.*.weights: length must equal mixture.dim");
  }

  const int gc = static_cast<int>(Group::common);
  const int gr = static_cast<int>(Group::rare);
  cfg.covariates.mortality[gc] =
      parse_covariate("covariates.mortality.common",
                      m.get_string("covariates.mortality.common", "beta 2 5"));
  cfg.covariates.mortality[gr] = parse_covariate(
      "covariates.mortality.rare", m.get_string("covariates.mortality.rare", "beta 5 2"));
  cfg.covariates.discovery[gc] = parse_covariate(
      "covariates.discovery.common", m.get_string("covariates.discovery.common", "beta 1 1"));
  cfg.covariates.discovery[gr] = parse_covariate(
      "covariates.discovery.rare", m.get_string("covariates.discovery.rare", "beta 1 1"));
  cfg.covariates.equity[gc] = parse_covariate("covariates.equity.common",
                                              m.get_string("covariates.equity.common", "beta 1 1"));
  cfg.covariates.equity[gr] = parse_covariate("covariates.equity.rare",
                                              m.get_string("covariates.equity.rare", "beta 1 1"));

  std::int64_t n_train = m.get_int("data.n_train", 20000);
  std::int64_t n_test = m.get_int("data.n_test", 20000);
  if (n_train < 2) throw ConfigError("data.n_train: must be >= 2");
  if (n_test < 1) throw ConfigError("data.n_test: must be >= 1");
  cfg.n_train = static_cast<std::size_t>(n_train);
  cfg.n_test = static_cast<std::size_t>(n_test);

  LossSpec base;
  base.focal_alpha = m.get_double("loss.focal.alpha", 1.0);
  base.focal_gamma = m.get_double("loss.focal.gamma", 2.0);
  if (!(base.focal_alpha >= 0.0) || !(base.focal_gamma >= 0.0)) {
    throw ConfigError("loss.focal.alpha/gamma: must be >= 0");
  }
  auto cost = m.get_doubles("loss.cost.matrix", {0.0, 1.0, 1.0, 0.0});
  if (cost.size() != 4) throw ConfigError("loss.cost.matrix: expected 4 entries (row-major 2x2)");
  base.cost.cost[0][0] = cost[0];
  base.cost.cost[0][1] = cost[1];
  base.cost.cost[1][0] = cost[2];
  base.cost.cost[1][1] = cost[3];

  LossKind variant = parse_loss_kind("loss.variant", m.get_string("loss.variant", "cross_entropy"));
  LossKind clinical_base =
      parse_loss_kind("loss.clinical.base", m.get_string("loss.clinical.base", "cross_entropy"));
  WeightParams w;
  w.baseline = m.get_double("loss.clinical.baseline", 1.0);
  w.alpha = m.get_double("loss.clinical.alpha", 0.0);
  w.beta = m.get_double("loss.clinical.beta", 0.0);
  w.gamma = m.get_double("loss.clinical.gamma", 0.0);
  if (variant == LossKind::clinically_weighted) {
    if (clinical_base == LossKind::clinically_weighted) {
      throw ConfigError("loss.clinical.base: cannot be clinically_weighted");
    }
    LossSpec inner = base;
    inner.kind = clinical_base;
    try {
      w.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("loss.clinical.*: ") + e.what());
    }
    cfg.loss = LossSpec::clinically_weighted(inner, w);
  } else {
    cfg.loss = base;
    cfg.loss.kind = variant;
    cfg.loss.weight = w;
    cfg.loss.base = clinical_base;
  }

  std::string kind = m.get_string("trainer.kind", "erm");
  if (kind == "erm") {
    cfg.trainer_kind = TrainerKind::erm;
  } else if (kind == "dro") {
    cfg.trainer_kind = TrainerKind::dro;
  } else if (kind == "constrained") {
    cfg.trainer_kind = TrainerKind::constrained;
  } else {
    throw ConfigError("trainer.kind: unknown trainer '" + kind + "'");
  }

  cfg.train.learning_rate = m.get_double("trainer.learning_rate", 0.05);
  if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("trainer.learning_rate: must be > 0");
  std::int64_t epochs = m.get_int("trainer.epochs", 30);
  if (epochs < 1) throw ConfigError("trainer.epochs: must be >= 1");
  cfg.train.epochs = static_cast<int>(epochs);
  std::int64_t batch = m.get_int("trainer.batch_size", 64);
  if (batch < 1) throw ConfigError("trainer.batch_size: must be >= 1");
  cfg.train.batch_size = static_cast<int>(batch);
  cfg.train.momentum = m.get_double("trainer.momentum", 0.0);
  if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0)) {
    throw ConfigError("trainer.momentum: must lie in [0, 1)");
  }
  cfg.train.validation_fraction = m.get_double("trainer.validation_fraction", 0.2);
  if (!(cfg.train.validation_fraction > 0.0 && cfg.train.validation_fraction <= 0.5)) {
    throw ConfigError("trainer.validation_fraction: must lie in (0, 0.5]");
  }
  std::string arch = m.get_string("trainer.architecture", "linear");
  try {
    cfg.train.architecture = parse_architecture(arch);
  } catch (const ValidationError&) {
    throw ConfigError("trainer.architecture: must be 'linear' or 'mlp1'");
  }
  std::int64_t hidden = m.get_int("trainer.hidden_width", 8);
  if (hidden < 1) throw ConfigError("trainer.hidden_width: must be >= 1");
  cfg.train.hidden_width = static_cast<int>(hidden);

  cfg.dro.group_step_size = m.get_double("trainer.dro.group_step_size", 0.05);
  if (!(cfg.dro.group_step_size > 0.0)) {
    throw ConfigError("trainer.dro.group_step_size: must be > 0");
  }
  cfg.constrained.lambda = m.get_double("trainer.constrained.lambda", 10.0);
  if (!(cfg.constrained.lambda >= 0.0)) {
    throw ConfigError("trainer.constrained.lambda: must be >= 0");
  }
  cfg.constrained.p_baseline = m.get_double("trainer.constrained.p_baseline", 0.6);
  if (!(cfg.constrained.p_baseline > 0.0 && cfg.constrained.p_baseline < 1.0)) {
    throw ConfigError("trainer.constrained.p_baseline: must lie in (0, 1)");
  }

  std::string metric = m.get_string("metric.kind", "auroc");
  double spec_target = m.get_double("metric.specificity", 0.95);
  if (metric == "auroc") {
    cfg.metric = MetricKind::auroc();
  } else if (metric == "sensitivity_at_specificity") {
    if (!(spec_target > 0.0 && spec_target < 1.0)) {
      throw ConfigError("metric.specificity: must lie in (0, 1)");
    }
    cfg.metric = MetricKind::sensitivity_at_specificity(spec_target);
  } else {
    throw ConfigError("metric.kind: must be 'auroc' or 'sensitivity_at_specificity'");
  }
  cfg.metric.specificity = spec_target;
  cfg.constrained.metric = cfg.metric;

  std::int64_t resamples = m.get_int("metrics.bootstrap_resamples", 1000);
  if (resamples < 100) throw ConfigError("metrics.bootstrap_resamples: must be >= 100");
  cfg.bootstrap_resamples = static_cast<int>(resamples);
  std::int64_t rcce_bins = m.get_int("metrics.rcce_bins", 15);
  if (rcce_bins < 2) throw ConfigError("metrics.rcce_bins: must be >= 2");
  cfg.rcce_bins = static_cast<int>(rcce_bins);
  std::int64_t min_bin = m.get_int("metrics.rcce_min_bin_count", 5);
  if (min_bin < 1) throw ConfigError("metrics.rcce_min_bin_count: must be >= 1");
  cfg.rcce_min_bin_count = static_cast<std::size_t>(min_bin);

  cfg.rarity = parse_rarity("rarity.records", m.get_string("rarity.records", "auto"));
  cfg.compute_convergence_gap = m.get_bool("analysis.convergence_gap", false);
  std::int64_t mi_bins = m.get_int("analysis.mi_bins", 32);
  if (mi_bins < 2) throw ConfigError("analysis.mi_bins: must be >= 2");
  cfg.mi_bins = static_cast<int>(mi_bins);

  cfg.seeds = m.get_u64s("seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  if (cfg.seeds.empty()) throw ConfigError("seeds: must be nonempty");
  cfg.output_dir = m.get_string("output.dir", "out");
  cfg.sweep_pi = m.get_doubles("sweep.pi", {});
  for (double pi : cfg.sweep_pi) {
    if (!(pi >= 0.0 && pi < 1.0)) throw ConfigError("sweep.pi: each value must lie in [0, 1)");
  }

  m.finish();
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["mixture.dim"] = std::to_string(cfg.mixture.dim);
  kv["mixture.rare_weight"] = format_double(cfg.mixture.rare_weight);
  kv["mixture.common.mean"] = join_doubles(from_vector(cfg.mixture.common.mean));
  kv["mixture.common.cov"] = join_doubles(from_matrix_rowmajor(cfg.mixture.common.covariance));
  kv["mixture.rare.mean"] = join_doubles(from_vector(cfg.mixture.rare.mean));
  kv["mixture.rare.cov"] = join_doubles(from_matrix_rowmajor(cfg.mixture.rare.covariance));
  kv["teacher.common.weights"] = join_doubles(from_vector(cfg.teacher.common.weights));
  kv["teacher.common.bias"] = format_double(cfg.teacher.common.bias);
  kv["teacher.rare.weights"] = join_doubles(from_vector(cfg.teacher.rare.weights));
  kv["teacher.rare.bias"] = format_double(cfg.teacher.rare.bias);
  kv["teacher.label_noise"] = format_double(cfg.teacher.label_noise);
  const int gc = static_cast<int>(Group::common);
  const int gr = static_cast<int>(Group::rare);
  kv["covariates.mortality.common"] = covariate_text(cfg.covariates.mortality[gc]);
  kv["covariates.mortality.rare"] = covariate_text(cfg.covariates.mortality[gr]);
  kv["covariates.discovery.common"] = covariate_text(cfg.covariates.discovery[gc]);
  kv["covariates.discovery.rare"] = covariate_text(cfg.covariates.discovery[gr]);
  kv["covariates.equity.common"] = covariate_text(cfg.covariates.equity[gc]);
  kv["covariates.equity.rare"] = covariate_text(cfg.covariates.equity[gr]);
  kv["data.n_train"] = std::to_string(cfg.n_train);
  kv["data.n_test"] = std::to_string(cfg.n_test);
  kv["loss.variant"] = std::string(loss_kind_name(cfg.loss.kind));
  kv["loss.focal.alpha"] = format_double(cfg.loss.focal_alpha);
  kv["loss.focal.gamma"] = format_double(cfg.loss.focal_gamma);
  kv["loss.cost.matrix"] = join_doubles({cfg.loss.cost.cost[0][0], cfg.loss.cost.cost[0][1],
                                         cfg.loss.cost.cost[1][0], cfg.loss.cost.cost[1][1]});
  kv["loss.clinical.base"] = std::string(loss_kind_name(cfg.loss.base));
  kv["loss.clinical.baseline"] = format_double(cfg.loss.weight.baseline);
  kv["loss.clinical.alpha"] = format_double(cfg.loss.weight.alpha);
  kv["loss.clinical.beta"] = format_double(cfg.loss.weight.beta);
  kv["loss.clinical.gamma"] = format_double(cfg.loss.weight.gamma);
  kv["trainer.kind"] = std::string(trainer_kind_name(cfg.trainer_kind));
  kv["trainer.learning_rate"] = format_double(cfg.train.learning_rate);
  kv["trainer.epochs"] = std::to_string(cfg.train.epochs);
  kv["trainer.batch_size"] = std::to_string(cfg.train.batch_size);
  kv["trainer.momentum"] = format_double(cfg.train.momentum);
  kv["trainer.validation_fraction"] = format_double(cfg.train.validation_fraction);
  kv["trainer.architecture"] = std::string(architecture_name(cfg.train.architecture));
  kv["trainer.hidden_width"] = std::to_string(cfg.train.hidden_width);
  kv["trainer.dro.group_step_size"] = format_double(cfg.dro.group_step_size);
  kv["trainer.constrained.lambda"] = format_double(cfg.constrained.lambda);
  kv["trainer.constrained.p_baseline"] = format_double(cfg.constrained.p_baseline);
  kv["metric.kind"] = cfg.metric.kind == MetricKind::Kind::auroc ? "auroc"
                                                                 : "sensitivity_at_specificity";
  kv["metric.specificity"] = format_double(cfg.metric.specificity);
  kv["metrics.bootstrap_resamples"] = std::to_string(cfg.bootstrap_resamples);
  kv["metrics.rcce_bins"] = std::to_string(cfg.rcce_bins);
  kv["metrics.rcce_min_bin_count"] = std::to_string(cfg.rcce_min_bin_count);
  kv["rarity.records"] = rarity_text(cfg.rarity);
  kv["analysis.convergence_gap"] = cfg.compute_convergence_gap ? "true" : "false";
  kv["analysis.mi_bins"] = std::to_string(cfg.mi_bins);
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) seeds += ' ';
    seeds += std::to_string(cfg.seeds[i]);
  }
  kv["seeds"] = seeds;
  if (!cfg.sweep_pi.empty()) kv["sweep.pi"] = join_doubles(cfg.sweep_pi);

  std::string text;
  for (const auto& [k, v] : kv) {
    text += k;
    text += " = ";
    text += v;
    text += '\n';
  }
  return text;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return sha256_hex(canonical_config_text(cfg));
}

std::string default_config_text() {
  return canonical_config_text(parse_config_text("")) +
         "output.dir = out\n";  // excluded from the canonical form, listed for documentation
}

namespace {

// ---------------------------------------------------------------------------
// pipeline

std::string iso8601_utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  int n_threads = std::min<int>(jobs, static_cast<int>(count));
  threads.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

struct SeedRunOptions {
  bool compute_gap = false;
  bool allow_missing_rare = false;
};

ModelParams init_params_for(const ExperimentConfig& cfg, std::uint64_t train_seed) {
  if (cfg.train.architecture == Architecture::linear) {
    return ModelParams::linear_zeros(cfg.mixture.dim);
  }
  return ModelParams::mlp1_init(cfg.mixture.dim, cfg.train.hidden_width, train_seed);
}

SeedResult run_single_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const SeedRunOptions& opts) {
  SeedResult result;
  result.seed = seed;

  Dataset train_ds =
      sample_mixture(cfg.mixture, cfg.teacher, cfg.n_train, mix_seed(seed, stream_tag("train_data")),
                     cfg.covariates);
  Dataset test_ds =
      sample_mixture(cfg.mixture, cfg.teacher, cfg.n_test, mix_seed(seed, stream_tag("test_data")),
                     cfg.covariates);

  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(seed, stream_tag("train"));

  TrainedModel model;
  switch (cfg.trainer_kind) {
    case TrainerKind::erm:
      model = train_erm(train_ds, cfg.loss, tc, cfg.metric);
      break;
    case TrainerKind::dro:
      model = train_group_dro(train_ds, cfg.loss, tc, cfg.dro, cfg.metric);
      break;
    case TrainerKind::constrained: {
      ConstraintSpec cs = cfg.constrained;
      cs.metric = cfg.metric;
      model = train_constrained(train_ds, cfg.loss, tc, cs);
      break;
    }
  }

  bool have_rare = test_ds.count(Group::rare) > 0 && train_ds.count(Group::rare) > 0;
  if (!have_rare && !opts.allow_missing_rare) {
    throw EmptySubgroupError("rare group empty in generated data (seed " + std::to_string(seed) +
                             ")");
  }

  if (have_rare) {
    PredictionSet preds = predict_dataset(model.params, test_ds);
    GroupPerformance perf = group_performance(preds, cfg.metric);
    result.performance = perf;
    result.rcpg_value = rcpg(perf);
    result.rcpg_ci = bootstrap_ci(preds, rcpg_closure(cfg.metric), cfg.bootstrap_resamples,
                                  mix_seed(seed, stream_tag("bootstrap")));
    result.calibration = rcce(preds, cfg.rcce_bins, cfg.rcce_min_bin_count);
    result.grad_init = decompose_gradients(train_ds, init_params_for(cfg, tc.seed), cfg.loss);
    result.grad_final = decompose_gradients(train_ds, model.params, cfg.loss);
  }

  if (opts.compute_gap) {
    TrainConfig gap_cfg = tc;
    result.gap = convergence_gap(cfg.mixture, cfg.teacher, gap_cfg, cfg.loss, cfg.n_train,
                                 mix_seed(seed, stream_tag("gap")), cfg.covariates);
  }
  return result;
}

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<RarityRecord> resolve_rarity(const ExperimentConfig& cfg) {
  std::vector<RarityRecord> out;
  if (cfg.rarity.empty()) {
    if (cfg.mixture.rare_weight > 0.0) {
      out.push_back(rarity_index("rare_phenotype", cfg.mixture.rare_weight, 1.0));
    }
    return out;
  }
  for (const auto& r : cfg.rarity) {
    double prevalence = r.prevalence < 0.0 ? cfg.mixture.rare_weight : r.prevalence;
    out.push_back(rarity_index(r.condition_id, prevalence, r.clinical_utility_score));
  }
  return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot open '" + tmp + "' for writing");
    f << text;
    if (!f) throw Error("failed writing '" + tmp + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["config_canonical"] = report.config_canonical;
  j["tool_version"] = report.tool_version;
  j["timestamp"] = report.timestamp;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& s : report.per_seed) {
    nlohmann::json js;
    js["seed"] = s.seed;
    if (s.performance) js["performance"] = performance_json(*s.performance);
    if (s.rcpg_value) js["rcpg"] = *s.rcpg_value;
    if (s.rcpg_ci) js["rcpg_ci"] = interval_json(*s.rcpg_ci);
    if (s.calibration) js["calibration"] = calibration_json(*s.calibration);
    if (s.grad_init) js["gradient_decomposition_init"] = decomposition_json(*s.grad_init);
    if (s.grad_final) js["gradient_decomposition_final"] = decomposition_json(*s.grad_final);
    if (s.gap) js["convergence_gap"] = gap_json(*s.gap);
    per_seed.push_back(js);
  }
  j["per_seed"] = per_seed;
  j["rarity_records"] = rarity_json(report.rarity_records);
  j["rarity_note"] = kRarityNote;
  nlohmann::json agg;
  if (report.median_rcpg) agg["median_rcpg"] = *report.median_rcpg;
  if (report.median_rcce) agg["median_rcce"] = *report.median_rcce;
  if (report.median_p_common) agg["median_p_common"] = *report.median_p_common;
  if (report.median_p_rare) agg["median_p_rare"] = *report.median_p_rare;
  if (report.median_epsilon) agg["median_epsilon"] = *report.median_epsilon;
  j["aggregate"] = agg;
  return j.dump(2) + "\n";
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();

  ExperimentReport report;
  report.config_canonical = canonical_config_text(cfg);
  report.config_hash = sha256_hex(report.config_canonical);
  report.tool_version = kVersion;

  SeedRunOptions opts;
  opts.compute_gap = cfg.compute_convergence_gap;
  report.per_seed.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), jobs, [&](std::size_t i) {
    report.per_seed[i] = run_single_seed(cfg, cfg.seeds[i], opts);
  });

  report.rarity_records = resolve_rarity(cfg);

  std::vector<double> rcpgs, rcces, p_commons, p_rares, epsilons;
  for (const auto& s : report.per_seed) {
    if (s.rcpg_value) rcpgs.push_back(*s.rcpg_value);
    if (s.calibration) rcces.push_back(s.calibration->rcce);
    if (s.performance && s.performance->p_common) p_commons.push_back(*s.performance->p_common);
    if (s.performance && s.performance->p_rare) p_rares.push_back(*s.performance->p_rare);
    if (s.gap) epsilons.push_back(s.gap->epsilon);
  }
  report.median_rcpg = median_of(rcpgs);
  report.median_rcce = median_of(rcces);
  report.median_p_common = median_of(p_commons);
  report.median_p_rare = median_of(p_rares);
  report.median_epsilon = median_of(epsilons);

  report.timestamp = iso8601_utc_now();

  // All computation succeeded; only now touch the filesystem.
  fs::create_directories(cfg.output_dir);
  write_text_atomic(cfg.output_dir + "/report.json", report_to_json(report));
  std::string csv = "seed,p_common,p_rare,rcpg,rcce\n";
  for (const auto& s : report.per_seed) {
    csv += std::to_string(s.seed);
    csv += ',';
    csv += s.performance && s.performance->p_common ? format_double(*s.performance->p_common) : "";
    csv += ',';
    csv += s.performance && s.performance->p_rare ? format_double(*s.performance->p_rare) : "";
    csv += ',';
    csv += s.rcpg_value ? format_double(*s.rcpg_value) : "";
    csv += ',';
    csv += s.calibration ? format_double(s.calibration->rcce) : "";
    csv += '\n';
  }
  write_text_atomic(cfg.output_dir + "/metrics.csv", csv);
  return report;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  if (cfg.sweep_pi.empty()) throw ConfigError("sweep.pi: sweep requires at least one value");
  if (cfg.train.architecture != Architecture::linear) {
    throw ConfigError("trainer.architecture: sweeps compute the convergence gap, which requires "
                      "the linear architecture");
  }

  struct Cell {
    double pi;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double pi : cfg.sweep_pi) {
    for (std::uint64_t seed : cfg.seeds) cells.push_back({pi, seed});
  }

  SweepResult result;
  result.cells.resize(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    SweepCell& out = result.cells[i];
    out.pi = cells[i].pi;
    out.seed = cells[i].seed;
    try {
      ExperimentConfig cell_cfg = cfg;
      cell_cfg.mixture.rare_weight = cells[i].pi;
      cell_cfg.seeds = {cells[i].seed};
      cell_cfg.sweep_pi.clear();
      cell_cfg.compute_convergence_gap = true;
      cell_cfg.output_dir = cfg.output_dir + "/pi_" + format_double(cells[i].pi) + "/seed_" +
                            std::to_string(cells[i].seed);

      SeedRunOptions opts;
      opts.compute_gap = true;
      opts.allow_missing_rare = cells[i].pi == 0.0;
      SeedResult sr = run_single_seed(cell_cfg, cells[i].seed, opts);

      ExperimentReport cell_report;
      cell_report.config_canonical = canonical_config_text(cell_cfg);
      cell_report.config_hash = sha256_hex(cell_report.config_canonical);
      cell_report.tool_version = kVersion;
      cell_report.per_seed = {sr};
      cell_report.rarity_records = resolve_rarity(cell_cfg);
      if (sr.rcpg_value) cell_report.median_rcpg = *sr.rcpg_value;
      if (sr.calibration) cell_report.median_rcce = sr.calibration->rcce;
      if (sr.gap) cell_report.median_epsilon = sr.gap->epsilon;
      cell_report.timestamp = iso8601_utc_now();
      fs::create_directories(cell_cfg.output_dir);
      write_text_atomic(cell_cfg.output_dir + "/report.json", report_to_json(cell_report));

      if (sr.gap) out.epsilon = sr.gap->epsilon;
      if (sr.rcpg_value) out.rcpg_value = sr.rcpg_value;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  // Deterministic assembly ordered by (pi, seed) as enumerated.
  std::string eps_csv = "pi,seed,epsilon\n";
  std::string rcpg_csv = "pi,seed,rcpg\n";
  for (const auto& c : result.cells) {
    if (!c.error.empty()) continue;
    if (c.epsilon) {
      eps_csv += format_double(c.pi) + "," + std::to_string(c.seed) + "," +
                 format_double(*c.epsilon) + "\n";
    }
    if (c.rcpg_value) {
      rcpg_csv += format_double(c.pi) + "," + std::to_string(c.seed) + "," +
                  format_double(*c.rcpg_value) + "\n";
    }
  }

  nlohmann::json summary;
  summary["config_hash"] = config_hash(cfg);
  summary["tool_version"] = kVersion;
  nlohmann::json per_pi = nlohmann::json::array();
  for (double pi : cfg.sweep_pi) {
    std::vector<double> eps, gaps;
    std::size_t ok = 0, failed = 0;
    for (const auto& c : result.cells) {
      if (c.pi != pi) continue;
      if (!c.error.empty()) {
        ++failed;
        continue;
      }
      ++ok;
      if (c.epsilon) eps.push_back(*c.epsilon);
      if (c.rcpg_value) gaps.push_back(*c.rcpg_value);
    }
    nlohmann::json jp;
    jp["pi"] = pi;
    jp["cells_ok"] = ok;
    jp["cells_failed"] = failed;
    if (auto m = median_of(eps)) jp["median_epsilon"] = *m;
    if (auto m = median_of(gaps)) jp["median_rcpg"] = *m;
    per_pi.push_back(jp);
  }
  summary["per_pi"] = per_pi;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& c : result.cells) {
    if (!c.error.empty()) {
      failures.push_back({{"pi", c.pi}, {"seed", c.seed}, {"error", c.error}});
    }
  }
  summary["failures"] = failures;
  summary["timestamp"] = iso8601_utc_now();
  result.summary_json = summary.dump(2) + "\n";

  fs::create_directories(cfg.output_dir);
  write_text_atomic(cfg.output_dir + "/epsilon_vs_pi.csv", eps_csv);
  write_text_atomic(cfg.output_dir + "/rcpg_vs_pi.csv", rcpg_csv);
  write_text_atomic(cfg.output_dir + "/summary.json", result.summary_json);
  return result;
}

void AuditOptions::validate() const {
  metric.validate();
  if (bootstrap_resamples < 100) throw ValidationError("bootstrap resamples must be >= 100");
  if (rcce_bins < 2) throw ValidationError("rcce bins must be >= 2");
  for (const auto& r : rarity) {
    if (!(r.prevalence > 0.0 && r.prevalence <= 1.0)) {
      throw ValidationError("rarity prevalence must lie in (0, 1]");
    }
    if (!(r.clinical_utility_score > 0.0)) {
      throw ValidationError("rarity utility must be positive");
    }
  }
}

AuditReport audit_predictions(const PredictionSet& preds, const AuditOptions& options) {
  options.validate();
  preds.validate();

  AuditReport report;
  report.metric = options.metric;
  report.performance = group_performance(preds, options.metric);
  report.rcpg_value = rcpg(report.performance);
  report.rcpg_ci =
      bootstrap_ci(preds, rcpg_closure(options.metric), options.bootstrap_resamples, options.seed);
  report.calibration = rcce(preds, options.rcce_bins, options.rcce_min_bin_count);
  for (const auto& r : options.rarity) {
    report.rarity_records.push_back(
        rarity_index(r.condition_id, r.prevalence, r.clinical_utility_score));
  }
  report.seed = options.seed;

  std::map<std::string, std::string> kv;
  kv["metric.kind"] =
      options.metric.kind == MetricKind::Kind::auroc ? "auroc" : "sensitivity_at_specificity";
  kv["metric.specificity"] = format_double(options.metric.specificity);
  kv["metrics.bootstrap_resamples"] = std::to_string(options.bootstrap_resamples);
  kv["metrics.rcce_bins"] = std::to_string(options.rcce_bins);
  kv["metrics.rcce_min_bin_count"] = std::to_string(options.rcce_min_bin_count);
  kv["seed"] = std::to_string(options.seed);
  std::vector<RaritySpec> rs = options.rarity;
  kv["rarity.records"] = rarity_text(rs);
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  report.config_hash = sha256_hex(text);
  return report;
}

AuditReport audit_predictions_file(const std::string& preds_path, const AuditOptions& options) {
  return audit_predictions(read_predictions_csv(preds_path), options);
}

std::string audit_to_json(const AuditReport& report) {
  nlohmann::json j;
  j["metric_kind"] = report.metric.name();
  if (report.performance.p_common) j["p_common"] = *report.performance.p_common;
  if (report.performance.p_rare) j["p_rare"] = *report.performance.p_rare;
  j["n_common"] = report.performance.n_common;
  j["n_rare"] = report.performance.n_rare;
  j["rcpg"] = report.rcpg_value;
  j["rcpg_ci"] = interval_json(report.rcpg_ci);
  j["rcce"] = report.calibration.rcce;
  j["calibration_bins"] = calibration_json(report.calibration)["bins"];
  j["excluded_mass"] = report.calibration.excluded_mass;
  j["rarity_records"] = rarity_json(report.rarity_records);
  j["rarity_note"] = kRarityNote;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

int default_jobs() {
  const char* env = std::getenv("TAILAUDIT_JOBS");
  if (!env) return 1;
  int v = std::atoi(env);
  return v >= 1 ? v : 1;
}

}  // namespace tailaudit
