#include "amofa/io.hpp"

#include <Eigen/Cholesky>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "amofa/rng.hpp"

namespace amofa {

namespace {

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

double parse_double(const std::string& cell, std::size_t line, std::size_t column) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-numeric cell '" << cell << "' at line " << line << ", column " << column;
    throw InvalidInput(msg.str());
  }
  return value;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string::npos) {
      cells.push_back(text.substr(start));
      break;
    }
    cells.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

// Reader for the line-oriented model format that tracks its byte offset so
// truncation errors can say where the file ended.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : stream_(path, std::ios::binary) {
    if (!stream_) throw InvalidInput("cannot open '" + path + "'");
  }

  std::string next() {
    std::string line;
    if (!std::getline(stream_, line)) {
      std::ostringstream msg;
      msg << "unexpected end of file at byte offset " << offset_;
      throw InvalidInput(msg.str());
    }
    offset_ += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  /// Next line split on spaces, checked against an expected keyword.
  std::vector<std::string> expect(const std::string& keyword, std::size_t fields) {
    const std::string line = next();
    std::vector<std::string> parts = split(line, ' ');
    if (parts.empty() || parts[0] != keyword || parts.size() != fields + 1) {
      std::ostringstream msg;
      msg << "malformed line '" << line << "', expected '" << keyword << "' with "
          << fields << " field(s) (byte offset " << offset_ << ")";
      throw InvalidInput(msg.str());
    }
    parts.erase(parts.begin());
    return parts;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::ifstream stream_;
  std::size_t offset_ = 0;
};

double parse_value(const std::string& token, const LineReader& reader) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    std::ostringstream msg;
    msg << "bad numeric token '" << token << "' near byte offset " << reader.offset();
    throw InvalidInput(msg.str());
  }
  return value;
}

long parse_int(const std::string& token, const LineReader& reader) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const long value = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') {
    std::ostringstream msg;
    msg << "bad integer token '" << token << "' near byte offset " << reader.offset();
    throw InvalidInput(msg.str());
  }
  return value;
}

void write_vector(std::ostream& out, const char* keyword, const Eigen::VectorXd& values) {
  out << keyword;
  for (Eigen::Index i = 0; i < values.size(); ++i) out << ' ' << format_double(values(i));
  out << '\n';
}

Eigen::VectorXd read_vector(LineReader& reader, const std::string& keyword,
                            Eigen::Index size) {
  const auto parts = reader.expect(keyword, static_cast<std::size_t>(size));
  Eigen::VectorXd values(size);
  for (Eigen::Index i = 0; i < size; ++i) values(i) = parse_value(parts[i], reader);
  return values;
}

void write_component(std::ostream& out, const FactorComponent& comp) {
  out << "weight " << format_double(comp.weight) << '\n';
  out << "factors " << comp.factors() << '\n';
  write_vector(out, "mean", comp.mean);
  // Column-major so each line is one factor direction.
  for (int c = 0; c < comp.factors(); ++c) {
    write_vector(out, "loading", comp.loadings.col(c));
  }
  write_vector(out, "noise_diag", comp.noise_diag);
}

FactorComponent read_component(LineReader& reader, int dim) {
  FactorComponent comp;
  comp.weight = parse_value(reader.expect("weight", 1)[0], reader);
  const long factors = parse_int(reader.expect("factors", 1)[0], reader);
  if (factors < 1 || factors >= dim) {
    throw InvalidInput("factor count out of range in model file");
  }
  comp.mean = read_vector(reader, "mean", dim);
  comp.loadings.resize(dim, factors);
  for (long c = 0; c < factors; ++c) {
    comp.loadings.col(c) = read_vector(reader, "loading", dim);
  }
  comp.noise_diag = read_vector(reader, "noise_diag", dim);
  return comp;
}

void write_trace_summary(std::ostream& out, const FitTrace& trace) {
  out << "trace_steps " << trace.steps.size() << '\n';
  for (const FitStep& step : trace.steps) {
    out << "step " << to_string(step.action) << ' ' << step.components;
    out << ' ';
    for (std::size_t i = 0; i < step.factor_counts.size(); ++i) {
      if (i) out << ';';
      out << step.factor_counts[i];
    }
    out << ' ' << format_double(step.message_length) << ' '
        << format_double(step.log_likelihood) << '\n';
  }
  out << "selected " << trace.selected_index << '\n';
}

FitAction action_from_string(const std::string& name, const LineReader& reader) {
  if (name == "init") return FitAction::init;
  if (name == "split") return FitAction::split;
  if (name == "add_factor") return FitAction::add_factor;
  if (name == "annihilate") return FitAction::annihilate;
  std::ostringstream msg;
  msg << "unknown trace action '" << name << "' near byte offset " << reader.offset();
  throw InvalidInput(msg.str());
}

FitTrace read_trace_summary(LineReader& reader) {
  FitTrace trace;
  const long steps = parse_int(reader.expect("trace_steps", 1)[0], reader);
  for (long i = 0; i < steps; ++i) {
    const auto parts = reader.expect("step", 5);
    FitStep step;
    step.action = action_from_string(parts[0], reader);
    step.components = static_cast<int>(parse_int(parts[1], reader));
    for (const std::string& token : split(parts[2], ';')) {
      step.factor_counts.push_back(static_cast<int>(parse_int(token, reader)));
    }
    step.message_length = parse_value(parts[3], reader);
    step.log_likelihood = parse_value(parts[4], reader);
    trace.steps.push_back(std::move(step));
  }
  trace.selected_index = static_cast<std::size_t>(parse_int(reader.expect("selected", 1)[0], reader));
  return trace;
}

}  // namespace

Dataset load_csv(const std::string& path, bool has_labels, bool skip_header) {
  std::ifstream stream(path, std::ios::binary);
  if (!stream) throw InvalidInput("cannot open '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_number = 0;
  std::size_t columns = 0;
  while (std::getline(stream, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_header && line_number == 1) continue;
    if (line.empty()) continue;

    const std::vector<std::string> cells = split(line, ',');
    if (columns == 0) {
      columns = cells.size();
      if (has_labels && columns < 2) {
        throw InvalidInput("labeled CSV needs at least 2 columns");
      }
    } else if (cells.size() != columns) {
      std::ostringstream msg;
      msg << "ragged row at line " << line_number << ": expected " << columns
          << " columns, found " << cells.size();
      throw InvalidInput(msg.str());
    }

    std::vector<double> row;
    const std::size_t feature_count = has_labels ? columns - 1 : columns;
    row.reserve(feature_count);
    for (std::size_t c = 0; c < feature_count; ++c) {
      row.push_back(parse_double(cells[c], line_number, c + 1));
    }
    if (has_labels) {
      const double raw = parse_double(cells[columns - 1], line_number, columns);
      if (raw != std::floor(raw)) {
        std::ostringstream msg;
        msg << "non-integer label at line " << line_number;
        throw InvalidInput(msg.str());
      }
      labels.push_back(static_cast<int>(raw));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("empty CSV '" + path + "'");

  Dataset data;
  data.points.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      data.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  if (has_labels) {
    Eigen::VectorXi label_vec(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      label_vec(static_cast<Eigen::Index>(i)) = labels[i];
    }
    data.labels = label_vec;
  }
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.points.cols(); ++j) {
      if (j) out << ',';
      out << format_double(data.points(i, j));
    }
    if (data.labels) out << ',' << (*data.labels)(i);
    out << '\n';
  }
}

void save_model(const MixtureModel& model, const std::string& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << "amofa-model v1\n";
  out << "dim " << model.dim << '\n';
  out << "components " << model.component_count() << '\n';
  for (const FactorComponent& comp : model.components) write_component(out, comp);
  write_trace_summary(out, model.trace);
}

MixtureModel load_model(const std::string& path) {
  LineReader reader(path);
  const std::string header = reader.next();
  if (header != "amofa-model v1") {
    throw InvalidInput("unsupported model schema: '" + header + "' (expected amofa-model v1)");
  }
  MixtureModel model;
  model.dim = static_cast<int>(parse_int(reader.expect("dim", 1)[0], reader));
  const long count = parse_int(reader.expect("components", 1)[0], reader);
  if (model.dim < 2 || count < 1) throw InvalidInput("bad model header");
  for (long k = 0; k < count; ++k) {
    model.components.push_back(read_component(reader, model.dim));
  }
  model.trace = read_trace_summary(reader);
  model.validate();
  return model;
}

void save_bundle(const ClassifierBundle& bundle, const std::string& path) {
  if (bundle.models.empty()) throw InvalidInput("empty classifier bundle");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << "amofa-bundle v1\n";
  out << "classes " << bundle.models.size() << '\n';
  for (const auto& [label, model] : bundle.models) {
    out << "class " << label << '\n';
    out << "dim " << model.dim << '\n';
    out << "components " << model.component_count() << '\n';
    for (const FactorComponent& comp : model.components) write_component(out, comp);
  }
}

ClassifierBundle load_bundle(const std::string& path) {
  LineReader reader(path);
  const std::string header = reader.next();
  if (header != "amofa-bundle v1") {
    throw InvalidInput("unsupported bundle schema: '" + header + "' (expected amofa-bundle v1)");
  }
  const long classes = parse_int(reader.expect("classes", 1)[0], reader);
  if (classes < 1) throw InvalidInput("bundle has no classes");
  ClassifierBundle bundle;
  for (long c = 0; c < classes; ++c) {
    const int label = static_cast<int>(parse_int(reader.expect("class", 1)[0], reader));
    MixtureModel model;
    model.dim = static_cast<int>(parse_int(reader.expect("dim", 1)[0], reader));
    const long count = parse_int(reader.expect("components", 1)[0], reader);
    if (model.dim < 2 || count < 1) throw InvalidInput("bad bundle model header");
    for (long k = 0; k < count; ++k) {
      model.components.push_back(read_component(reader, model.dim));
    }
    model.validate();
    bundle.models.emplace(label, std::move(model));
  }
  return bundle;
}

void write_trace_csv(const FitTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << "step,action,K,p_list,message_length,log_likelihood\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const FitStep& step = trace.steps[i];
    out << i << ',' << to_string(step.action) << ',' << step.components << ',';
    for (std::size_t j = 0; j < step.factor_counts.size(); ++j) {
      if (j) out << ';';
      out << step.factor_counts[j];
    }
    out << ',' << format_double(step.message_length) << ','
        << format_double(step.log_likelihood) << '\n';
  }
}

void GeneratorSpec::validate() const {
  if (weights.empty() || weights.size() != means.size() ||
      weights.size() != covariances.size()) {
    throw InvalidInput("generator spec component lists disagree");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidInput("negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("generator weights must sum to 1");
  const Eigen::Index d = means.front().size();
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != d) throw InvalidInput("generator means disagree on dim");
    if (covariances[k].rows() != d || covariances[k].cols() != d) {
      throw InvalidInput("generator covariance shape mismatch");
    }
    if (!covariances[k].isApprox(covariances[k].transpose(), 1e-9)) {
      throw InvalidInput("generator covariance not symmetric");
    }
  }
  if (sample_count < 1) throw InvalidInput("generator needs n >= 1");
}

GeneratorSpec example1_spec(int sample_count, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.0, 0.0, 0.2;
  for (double y : {-2.0, 0.0, 2.0}) {
    spec.means.push_back(Eigen::Vector2d(0.0, y));
    spec.covariances.push_back(cov);
  }
  spec.sample_count = sample_count;
  spec.seed = seed;
  return spec;
}

GeneratorSpec example2_spec(int sample_count, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.weights = {0.3, 0.3, 0.3, 0.1};
  spec.means = {Eigen::Vector2d(-4.0, -4.0), Eigen::Vector2d(-4.0, -4.0),
                Eigen::Vector2d(2.0, 2.0), Eigen::Vector2d(-1.0, -6.0)};
  Eigen::MatrixXd cov(2, 2);
  cov << 0.8, 0.5, 0.5, 0.8;
  spec.covariances.push_back(cov);
  cov << 5.0, -2.0, -2.0, 5.0;
  spec.covariances.push_back(cov);
  cov << 2.0, -1.0, -1.0, 2.0;
  spec.covariances.push_back(cov);
  cov << 0.125, 0.0, 0.0, 0.125;
  spec.covariances.push_back(cov);
  spec.sample_count = sample_count;
  spec.seed = seed;
  return spec;
}

GeneratorSpec load_generator_spec(const std::string& path) {
  std::ifstream stream(path);
  if (!stream) throw InvalidInput("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    stream >> doc;
  } catch (const nlohmann::json::exception& err) {
    throw InvalidInput(std::string("bad JSON spec: ") + err.what());
  }
  GeneratorSpec spec;
  try {
    spec.weights = doc.at("weights").get<std::vector<double>>();
    for (const auto& mean : doc.at("means")) {
      const auto values = mean.get<std::vector<double>>();
      spec.means.push_back(Eigen::Map<const Eigen::VectorXd>(
          values.data(), static_cast<Eigen::Index>(values.size())));
    }
    for (const auto& cov : doc.at("covariances")) {
      const auto rows = cov.get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != static_cast<std::size_t>(matrix.cols())) {
          throw InvalidInput("ragged covariance in spec");
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) matrix(i, j) = rows[i][j];
      }
      spec.covariances.push_back(std::move(matrix));
    }
    spec.sample_count = doc.value("n", 0);
    spec.seed = doc.value("seed", 0ULL);
  } catch (const nlohmann::json::exception& err) {
    throw InvalidInput(std::string("bad JSON spec: ") + err.what());
  }
  spec.validate();
  return spec;
}

Dataset sample_mixture(const GeneratorSpec& spec) {
  spec.validate();
  const Eigen::Index d = spec.means.front().size();
  const std::size_t k_count = spec.weights.size();

  std::vector<Eigen::MatrixXd> roots;
  for (std::size_t k = 0; k < k_count; ++k) {
    const Eigen::LLT<Eigen::MatrixXd> llt(spec.covariances[k]);
    if (llt.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "covariance " << k << " is not positive definite";
      throw NumericError(msg.str());
    }
    roots.push_back(llt.matrixL());
  }

  Rng rng(spec.seed);
  Dataset data;
  data.points.resize(spec.sample_count, d);
  Eigen::VectorXi labels(spec.sample_count);
  Eigen::VectorXd noise(d);
  for (int i = 0; i < spec.sample_count; ++i) {
    const double pick = rng.uniform();
    std::size_t k = 0;
    double cumulative = 0.0;
    for (; k + 1 < k_count; ++k) {
      cumulative += spec.weights[k];
      if (pick < cumulative) break;
    }
    for (Eigen::Index j = 0; j < d; ++j) noise(j) = rng.normal();
    data.points.row(i) = (spec.means[k] + roots[k] * noise).transpose();
    labels(i) = static_cast<int>(k);
  }
  data.labels = labels;
  return data;
}

Dataset sample_waveform(int sample_count, std::uint64_t seed) {
  if (sample_count < 1) throw InvalidInput("waveform generator needs n >= 1");
  constexpr int kAttributes = 21;
  // Triangular base waves peaking at positions 11, 15, and 7 (1-indexed).
  auto wave = [](int peak, int j) {
    return std::max(6.0 - std::abs(static_cast<double>(j + 1 - peak)), 0.0);
  };
  const int peaks[3] = {11, 15, 7};
  const int combos[3][2] = {{0, 1}, {0, 2}, {1, 2}};

  Rng rng(seed);
  Dataset data;
  data.points.resize(sample_count, kAttributes);
  Eigen::VectorXi labels(sample_count);
  for (int i = 0; i < sample_count; ++i) {
    const int label = static_cast<int>(rng.below(3));
    const double mix = rng.uniform();
    for (int j = 0; j < kAttributes; ++j) {
      data.points(i, j) = mix * wave(peaks[combos[label][0]], j) +
                          (1.0 - mix) * wave(peaks[combos[label][1]], j) + rng.normal();
    }
    labels(i) = label;
  }
  data.labels = labels;
  return data;
}

}  // namespace amofa
