#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace amofa {

/// Bad user input: malformed files, dimension mismatches, invalid flags.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: singular systems, degenerate models, non-PD covariances.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One local factor analyzer: x = loadings * z + noise, z ~ N(0, I_p),
/// giving covariance loadings*loadings' + diag(noise_diag).
struct FactorComponent {
  Eigen::VectorXd mean;        // d
  Eigen::MatrixXd loadings;    // d x p, 1 <= p <= d-1
  Eigen::VectorXd noise_diag;  // d, strictly positive
  double weight = 1.0;         // mixing proportion in [0,1]

  int dim() const { return static_cast<int>(mean.size()); }
  int factors() const { return static_cast<int>(loadings.cols()); }
  void validate() const;
};

enum class FitAction { init, split, add_factor, annihilate };

const char* to_string(FitAction action);

/// One record in a fit trace: what was done and where the model stood after.
struct FitStep {
  FitAction action = FitAction::init;
  int components = 0;               // K after the step
  std::vector<int> factor_counts;   // p_k per component, same order as model
  double message_length = 0.0;      // nats
  double log_likelihood = 0.0;
};

struct MixtureModel;

/// History of a fit. `stored_models` holds one snapshot per step; the final
/// selection points at the entry with minimum message length.
struct FitTrace {
  std::vector<FitStep> steps;
  std::vector<MixtureModel> stored_models;
  std::vector<double> em_lengths;       // inner-EM per-iteration message lengths
  std::vector<std::string> warnings;
  std::size_t selected_index = 0;

  void clear();
};

struct Dataset;

struct MixtureModel {
  std::vector<FactorComponent> components;
  int dim = 0;
  FitTrace trace;

  int component_count() const { return static_cast<int>(components.size()); }
  std::vector<int> factor_counts() const;
  /// Copy of the model without its trace (used for trace snapshots).
  MixtureModel snapshot() const;
  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd points;  // N x d
  std::optional<Eigen::VectorXi> labels;

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
  void validate() const;
};

/// Posterior component memberships h_ik; rows sum to one.
struct Responsibilities {
  Eigen::MatrixXd values;  // N x K
};

struct EmConfig {
  double epsilon = 1e-5;             // relative message-length tolerance
  int max_iters = 1000;
  double variance_floor_scale = 1e-6;
};

}  // namespace amofa
