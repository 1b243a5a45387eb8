#include "tailaudit/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "compensated.hpp"

namespace tailaudit {

std::string_view architecture_name(Architecture a) {
  return a == Architecture::linear ? "linear" : "mlp1";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "linear") return Architecture::linear;
  if (s == "mlp1") return Architecture::mlp1;
  throw ValidationError("unknown architecture '" + std::string(s) + "'");
}

ModelParams ModelParams::linear_zeros(int input_dim) {
  if (input_dim <= 0) throw ValidationError("input_dim must be positive");
  ModelParams p;
  p.arch = Architecture::linear;
  p.input_dim = input_dim;
  p.hidden_width = 0;
  p.values = Eigen::VectorXd::Zero(input_dim + 1);
  return p;
}

ModelParams ModelParams::mlp1_init(int input_dim, int hidden_width, std::uint64_t seed) {
  if (input_dim <= 0) throw ValidationError("input_dim must be positive");
  if (hidden_width <= 0) throw ValidationError("hidden_width must be positive");
  ModelParams p;
  p.arch = Architecture::mlp1;
  p.input_dim = input_dim;
  p.hidden_width = hidden_width;
  p.values.resize(hidden_width * input_dim + 2 * hidden_width + 1);
  RngStream rng = RngStream::child(seed, "init");
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    p.values[i] = rng.uniform(-0.1, 0.1);
  }
  return p;
}

void ModelParams::validate() const {
  if (input_dim <= 0) throw ValidationError("model input_dim must be positive");
  Eigen::Index expected = arch == Architecture::linear
                              ? input_dim + 1
                              : static_cast<Eigen::Index>(hidden_width) * input_dim +
                                    2 * hidden_width + 1;
  if (arch == Architecture::mlp1 && hidden_width <= 0) {
    throw ValidationError("mlp1 hidden_width must be positive");
  }
  if (values.size() != expected) {
    throw ValidationError("parameter vector length does not match architecture");
  }
  if (!values.allFinite()) throw ValidationError("model parameters must be finite");
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Hidden activations for mlp1; returns z.
double mlp1_forward(const ModelParams& m, const Eigen::VectorXd& x, Eigen::VectorXd& hidden) {
  const int d = m.input_dim;
  const int h = m.hidden_width;
  hidden.resize(h);
  const double* v = m.values.data();
  for (int j = 0; j < h; ++j) {
    double a = v[h * d + j];  // b1[j]
    const double* row = v + j * d;
    for (int i = 0; i < d; ++i) a += row[i] * x[i];
    hidden[j] = std::tanh(a);
  }
  double z = v[h * d + 2 * h];  // b2
  for (int j = 0; j < h; ++j) z += v[h * d + h + j] * hidden[j];
  return z;
}

}  // namespace

double score(const ModelParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.input_dim) {
    throw ValidationError("input length does not match model input_dim");
  }
  if (params.arch == Architecture::linear) {
    return params.values.head(params.input_dim).dot(x) + params.values[params.input_dim];
  }
  Eigen::VectorXd hidden;
  return mlp1_forward(params, x, hidden);
}

Prediction predict(const ModelParams& params, const Eigen::VectorXd& x) {
  double z = score(params, x);
  double p = sigmoid(z);
  Prediction out;
  out.raw_score = z;
  if (p < kProbClamp) {
    out.p = kProbClamp;
    out.clamped = true;
  } else if (p > 1.0 - kProbClamp) {
    out.p = 1.0 - kProbClamp;
    out.clamped = true;
  } else {
    out.p = p;
  }
  return out;
}

double predict_proba(const ModelParams& params, const Eigen::VectorXd& x) {
  return predict(params, x).p;
}

BatchGradient batch_gradient(const ModelParams& params, const Dataset& ds,
                             std::span<const std::size_t> indices, const LossSpec& loss,
                             const std::optional<WeightParams>& weight_ctx) {
  if (indices.empty()) throw ValidationError("batch_gradient requires a nonempty batch");
  params.validate();
  loss.validate();
  if (weight_ctx) weight_ctx->validate();

  const Eigen::Index n_params = params.param_count();
  CompensatedVector grad_common(n_params), grad_rare(n_params);
  CompensatedSum loss_common, loss_rare;
  std::size_t n_common = 0, n_rare = 0;

  const int d = params.input_dim;
  const int h = params.hidden_width;
  Eigen::VectorXd hidden;
  for (std::size_t idx : indices) {
    const DataRecord& r = ds.records[idx];
    if (r.features.size() != d) {
      throw ValidationError("record " + std::to_string(idx) + " feature length mismatch");
    }

    double z;
    if (params.arch == Architecture::linear) {
      z = params.values.head(d).dot(r.features) + params.values[d];
    } else {
      z = mlp1_forward(params, r.features, hidden);
    }
    if (!std::isfinite(z)) {
      throw NumericalError("non-finite score at record " + std::to_string(idx));
    }
    double p_raw = sigmoid(z);
    bool clamped = p_raw < kProbClamp || p_raw > 1.0 - kProbClamp;
    double p = std::min(std::max(p_raw, kProbClamp), 1.0 - kProbClamp);

    double l = per_sample_loss(loss, p, r.label, r.covariates);
    double gz = per_sample_dloss_dz(loss, p, clamped, r.label, r.covariates);
    if (weight_ctx) {
      double w = clinical_weight(r.covariates, *weight_ctx);
      l *= w;
      gz *= w;
    }
    if (!std::isfinite(l) || !std::isfinite(gz)) {
      throw NumericalError("non-finite loss or gradient at record " + std::to_string(idx));
    }

    CompensatedVector& acc = r.group == Group::rare ? grad_rare : grad_common;
    if (params.arch == Architecture::linear) {
      for (int i = 0; i < d; ++i) acc.add(i, gz * r.features[i]);
      acc.add(d, gz);
    } else {
      const double* v = params.values.data();
      for (int j = 0; j < h; ++j) {
        double dh = gz * v[h * d + h + j] * (1.0 - hidden[j] * hidden[j]);
        for (int i = 0; i < d; ++i) acc.add(j * d + i, dh * r.features[i]);  // W1
        acc.add(h * d + j, dh);                                              // b1
        acc.add(h * d + h + j, gz * hidden[j]);                              // w2
      }
      acc.add(h * d + 2 * h, gz);  // b2
    }
    if (r.group == Group::rare) {
      loss_rare.add(l);
      ++n_rare;
    } else {
      loss_common.add(l);
      ++n_common;
    }
  }

  BatchGradient out;
  out.n_common = n_common;
  out.n_rare = n_rare;
  Eigen::VectorXd sum_common = grad_common.value();
  Eigen::VectorXd sum_rare = grad_rare.value();
  double n = static_cast<double>(indices.size());
  out.total = (sum_common + sum_rare) / n;
  double lsum = loss_common.value() + loss_rare.value();
  out.mean_loss = lsum / n;
  if (n_common > 0) {
    out.common = sum_common / static_cast<double>(n_common);
    out.loss_common = loss_common.value() / static_cast<double>(n_common);
  }
  if (n_rare > 0) {
    out.rare = sum_rare / static_cast<double>(n_rare);
    out.loss_rare = loss_rare.value() / static_cast<double>(n_rare);
  }
  return out;
}

BatchGradient batch_gradient(const ModelParams& params, const Dataset& ds,
                             const LossSpec& loss,
                             const std::optional<WeightParams>& weight_ctx) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch_gradient(params, ds, idx, loss, weight_ctx);
}

std::string model_to_json(const ModelParams& params) {
  params.validate();
  nlohmann::json j;
  j["architecture"] = std::string(architecture_name(params.arch));
  j["input_dim"] = params.input_dim;
  j["hidden_width"] = params.hidden_width;
  j["params"] = std::vector<double>(params.values.data(),
                                    params.values.data() + params.values.size());
  return j.dump(2) + "\n";
}

ModelParams model_from_json(std::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ModelParams p;
  p.arch = parse_architecture(j.at("architecture").get<std::string>());
  p.input_dim = j.at("input_dim").get<int>();
  p.hidden_width = j.at("hidden_width").get<int>();
  auto vals = j.at("params").get<std::vector<double>>();
  p.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  p.validate();
  return p;
}

void write_model_json(const ModelParams& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << model_to_json(params);
}

ModelParams read_model_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace tailaudit
