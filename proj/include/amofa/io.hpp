#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "amofa/evaluation.hpp"
#include "amofa/types.hpp"

namespace amofa {

/// Reads a numeric CSV (no header by default; `skip_header` drops line 1).
/// With `has_labels` the last column is parsed as an integer label. Ragged
/// rows, empty files, and non-numeric cells are reported with line/column.
Dataset load_csv(const std::string& path, bool has_labels, bool skip_header = false);

/// Writes points (and labels, when present) back out; %.17g so values
/// round-trip exactly.
void write_csv(const Dataset& data, const std::string& path);

/// Line-oriented text model format, schema v1. Values are printed with 17
/// significant digits, so load(save(m)) reproduces every finite parameter
/// bit-exactly. Unknown schema versions and truncated files are errors (the
/// latter with the byte offset reached).
void save_model(const MixtureModel& model, const std::string& path);
MixtureModel load_model(const std::string& path);

/// Per-class model bundle, same conventions as the model format.
void save_bundle(const ClassifierBundle& bundle, const std::string& path);
ClassifierBundle load_bundle(const std::string& path);

/// Outer fit trace as CSV: step,action,K,p_list,message_length,log_likelihood
/// with p_list semicolon-joined.
void write_trace_csv(const FitTrace& trace, const std::string& path);

/// Finite Gaussian mixture sampling spec.
struct GeneratorSpec {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  int sample_count = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Three aligned Gaussians: weights 1/3, covariance diag{2, 0.2}, means
/// (0,-2), (0,0), (0,2).
GeneratorSpec example1_spec(int sample_count, std::uint64_t seed);

/// Four overlapping Gaussians: weights 0.3/0.3/0.3/0.1, means (-4,-4),
/// (-4,-4), (2,2), (-1,-6), covariances [[.8,.5],[.5,.8]], [[5,-2],[-2,5]],
/// [[2,-1],[-1,2]], 0.125*I.
GeneratorSpec example2_spec(int sample_count, std::uint64_t seed);

/// JSON spec file: {"weights": [...], "means": [[...]], "covariances":
/// [[[...]]], "n": int, "seed": int}.
GeneratorSpec load_generator_spec(const std::string& path);

/// Seeded draw from the mixture; labels record the source component.
Dataset sample_mixture(const GeneratorSpec& spec);

/// Classic 21-attribute, 3-class waveform generator: each sample is a random
/// convex combination of two of three triangular base waves plus unit
/// Gaussian noise per attribute.
Dataset sample_waveform(int sample_count, std::uint64_t seed);

}  // namespace amofa
