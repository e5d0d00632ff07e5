#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "amofa/types.hpp"

namespace amofa {

/// Density and posterior algebra for one component, built once and reused
/// across a batch of points. Every solve goes through the p x p inner matrix
/// M = I + L' Psi^-1 L (matrix inversion lemma), never through the d x d
/// covariance:
///   Sigma^-1 = Psi^-1 - Psi^-1 L M^-1 L' Psi^-1
///   log|Sigma| = log|M| + sum_j log psi_j
///   Omega = L' Sigma^-1 = M^-1 L' Psi^-1        (posterior projection, p x d)
///   Cov[z|x] = M^-1
class LowRankGaussian {
 public:
  explicit LowRankGaussian(const FactorComponent& comp);

  double log_density(const Eigen::VectorXd& x) const;

  /// Rows of `centered` are x_i - mu. Returns squared Mahalanobis distances.
  Eigen::VectorXd mahalanobis(const Eigen::MatrixXd& centered) const;

  /// Rows of `centered` are x_i - mu. Returns rows Omega * (x_i - mu).
  Eigen::MatrixXd project(const Eigen::MatrixXd& centered) const;

  /// Posterior latent covariance M^-1 (p x p).
  Eigen::MatrixXd posterior_cov() const;

  double log_det() const { return log_det_; }
  double condition() const { return condition_; }
  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd inv_noise_;          // Psi^-1 diagonal
  Eigen::MatrixXd noise_sol_loadings_; // Psi^-1 L (d x p)
  Eigen::LLT<Eigen::MatrixXd> inner_;  // Cholesky of M
  double log_det_ = 0.0;               // log|Sigma|
  double condition_ = 1.0;             // condition estimate of M
};

/// Dense covariance loadings*loadings' + diag(noise_diag).
Eigen::MatrixXd component_covariance(const FactorComponent& comp);

/// log N(x; mean, covariance) through the low-rank identities.
double component_log_density(const FactorComponent& comp, const Eigen::VectorXd& x);

/// N x K matrix with entries log(pi_k) + log N(x_i; comp k).
Eigen::MatrixXd log_joint_matrix(const MixtureModel& model, const Dataset& data);

/// Row-wise max-shifted log-sum-exp of the log-joint matrix.
Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& log_values);

double mixture_log_likelihood(const MixtureModel& model, const Dataset& data);

Responsibilities responsibilities(const MixtureModel& model, const Dataset& data);

}  // namespace amofa
