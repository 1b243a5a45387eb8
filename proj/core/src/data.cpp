#include "tailaudit/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace tailaudit {

std::string_view group_name(Group g) {
  return g == Group::common ? "common" : "rare";
}

Group parse_group(std::string_view s) {
  if (s == "common") return Group::common;
  if (s == "rare") return Group::rare;
  throw ValidationError("unknown group tag '" + std::string(s) + "'");
}

void SampleCovariates::validate() const {
  auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
  if (!in_unit(mortality_risk) || !in_unit(discovery_value) || !in_unit(equity_adjustment)) {
    throw ValidationError("covariates must lie in [0, 1]");
  }
}

void GaussianComponent::validate() const {
  if (mean.size() == 0) throw ValidationError("component mean is empty");
  if (covariance.rows() != covariance.cols()) {
    throw ValidationError("covariance is not square");
  }
  if (covariance.rows() != mean.size()) {
    throw ValidationError("mean length does not match covariance dimension");
  }
  if (!mean.allFinite() || !covariance.allFinite()) {
    throw ValidationError("component contains non-finite entries");
  }
  for (Eigen::Index i = 0; i < covariance.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (covariance(i, j) != covariance(j, i)) {
        throw ValidationError("covariance is not symmetric as stored");
      }
    }
  }
  cholesky_factor();
}

Eigen::MatrixXd GaussianComponent::cholesky_factor() const {
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw ValidationError("covariance is not positive definite");
  }
  return llt.matrixL();
}

void MixtureSpec::validate() const {
  if (!(rare_weight >= 0.0 && rare_weight < 1.0)) {
    throw ValidationError("rare_weight must lie in [0, 1)");
  }
  if (dim <= 0) throw ValidationError("dim must be positive");
  common.validate();
  rare.validate();
  if (common.dim() != dim || rare.dim() != dim) {
    throw ValidationError("component dimensions do not match dim");
  }
}

void TeacherSpec::validate(int dim) const {
  if (common.weights.size() != dim || rare.weights.size() != dim) {
    throw ValidationError("teacher weight length does not match dim");
  }
  if (!common.weights.allFinite() || !rare.weights.allFinite() ||
      !std::isfinite(common.bias) || !std::isfinite(rare.bias)) {
    throw ValidationError("teacher contains non-finite entries");
  }
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw ValidationError("label_noise must lie in [0, 0.5)");
  }
}

std::size_t Dataset::count(Group g) const {
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.group == g) ++n;
  }
  return n;
}

std::vector<std::size_t> Dataset::indices_of(Group g) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].group == g) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.features.size() != dim) {
      throw ValidationError("record " + std::to_string(i) + " has wrong feature length");
    }
    if (!r.features.allFinite()) {
      throw ValidationError("record " + std::to_string(i) + " has non-finite features");
    }
    if (r.label != 0 && r.label != 1) {
      throw ValidationError("record " + std::to_string(i) + " has non-binary label");
    }
    r.covariates.validate();
  }
}

double CovariateDistribution::sample(RngStream& rng) const {
  if (kind == Kind::constant) return value;
  return rng.beta(a, b);
}

void CovariateDistribution::validate(std::string_view what) const {
  if (kind == Kind::constant) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw ValidationError(std::string(what) + ": constant covariate must lie in [0, 1]");
    }
    return;
  }
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ValidationError(std::string(what) + ": Beta parameters must be positive");
  }
}

CovariateModel CovariateModel::defaults() {
  CovariateModel m;
  m.mortality[static_cast<int>(Group::common)] = CovariateDistribution::beta_dist(2.0, 5.0);
  m.mortality[static_cast<int>(Group::rare)] = CovariateDistribution::beta_dist(5.0, 2.0);
  for (int g = 0; g < 2; ++g) {
    m.discovery[g] = CovariateDistribution::beta_dist(1.0, 1.0);
    m.equity[g] = CovariateDistribution::beta_dist(1.0, 1.0);
  }
  return m;
}

SampleCovariates CovariateModel::sample(Group g, RngStream& rng) const {
  int i = static_cast<int>(g);
  SampleCovariates c;
  c.mortality_risk = mortality[i].sample(rng);
  c.discovery_value = discovery[i].sample(rng);
  c.equity_adjustment = equity[i].sample(rng);
  return c;
}

void CovariateModel::validate() const {
  for (int g = 0; g < 2; ++g) {
    mortality[g].validate("mortality");
    discovery[g].validate("discovery");
    equity[g].validate("equity");
  }
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double_field(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw SchemaError("malformed numeric field '" + std::string(s) + "'", line);
  }
  return v;
}

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string expected_header(int dim) {
  std::string h;
  for (int i = 0; i < dim; ++i) {
    h += "x_" + std::to_string(i) + ",";
  }
  h += "y,group,mortality_risk,discovery_value,equity_adjustment";
  return h;
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds) {
  std::string out = expected_header(ds.dim);
  out += '\n';
  for (const auto& r : ds.records) {
    for (int i = 0; i < ds.dim; ++i) {
      out += format_double(r.features[i]);
      out += ',';
    }
    out += std::to_string(r.label);
    out += ',';
    out += group_name(r.group);
    out += ',';
    out += format_double(r.covariates.mortality_risk);
    out += ',';
    out += format_double(r.covariates.discovery_value);
    out += ',';
    out += format_double(r.covariates.equity_adjustment);
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  auto next_line = [&](std::string_view& line) -> bool {
    if (start >= text.size()) return false;
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    line = text.substr(start, pos - start);
    start = pos + 1;
    ++line_no;
    return true;
  };

  std::string_view header;
  if (!next_line(header) || header.empty()) {
    throw SchemaError("missing dataset header", 1);
  }
  auto cols = split_line(header);
  if (cols.size() < 6) throw SchemaError("dataset header has too few columns", 1);
  int dim = static_cast<int>(cols.size()) - 5;
  if (header != expected_header(dim)) {
    throw SchemaError("dataset header does not match the documented schema", 1);
  }

  Dataset ds;
  ds.dim = dim;
  std::string_view line;
  while (next_line(line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != static_cast<std::size_t>(dim) + 5) {
      throw SchemaError("row has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(dim + 5),
                        line_no);
    }
    DataRecord r;
    r.features.resize(dim);
    for (int i = 0; i < dim; ++i) {
      r.features[i] = parse_double_field(fields[i], line_no);
    }
    double y = parse_double_field(fields[dim], line_no);
    if (y != 0.0 && y != 1.0) throw SchemaError("label must be 0 or 1", line_no);
    r.label = static_cast<int>(y);
    try {
      r.group = parse_group(fields[dim + 1]);
    } catch (const ValidationError& e) {
      throw SchemaError(e.what(), line_no);
    }
    r.covariates.mortality_risk = parse_double_field(fields[dim + 2], line_no);
    r.covariates.discovery_value = parse_double_field(fields[dim + 3], line_no);
    r.covariates.equity_adjustment = parse_double_field(fields[dim + 4], line_no);
    ds.records.push_back(std::move(r));
  }
  if (ds.records.empty()) {
    throw SchemaError("dataset contains a header but no rows", line_no);
  }
  ds.validate();
  return ds;
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << dataset_to_csv(ds);
  if (!f) throw Error("failed writing '" + path + "'");
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SchemaError("cannot open dataset file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return dataset_from_csv(ss.str());
}

}  // namespace tailaudit
