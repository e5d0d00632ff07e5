#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "amofa/types.hpp"

namespace amofa {

/// E-step sufficient statistics. The per-point latent moments carry the h_ik
/// weighting already applied, so the M-step sums consume them directly:
///   ez[k]  row i  =  h_ik * Omega_k (x_i - mu_k)
///   ezz[k]        =  sum_i h_ik (Cov[z|x_i] + Omega_k d_i d_i' Omega_k')
struct EStepMoments {
  Responsibilities resp;
  std::vector<Eigen::MatrixXd> ez;   // per component, N x p_k
  std::vector<Eigen::MatrixXd> ezz;  // per component, p_k x p_k
  Eigen::VectorXd soft_counts;       // N_k = sum_i h_ik
  double log_likelihood = 0.0;       // of the model the moments came from
};

/// Per-feature noise floor: variance_floor_scale times the feature's sample
/// variance (features with zero variance fall back to the mean variance).
Eigen::VectorXd variance_floor(const Dataset& data, double scale);

EStepMoments e_step(const MixtureModel& model, const Dataset& data);

/// One M-step. With mml_mode the mixing weights follow the Dirichlet-prior
/// update max{0, N_k - C_k/2} (normalized); components driven to zero weight
/// are marked for annihilation and keep their stale parameters.
MixtureModel m_step(const MixtureModel& model, const Dataset& data,
                    const EStepMoments& moments, bool mml_mode,
                    double variance_floor_scale = 1e-6);

/// MML-EM inner loop: parallel E/M updates, one-weakest-at-a-time in-loop
/// annihilation (never the last component), until the message length moves
/// less than epsilon (relative) or max_iters is hit. The trace records every
/// iteration's message length and every annihilation. Deterministic.
std::pair<MixtureModel, FitTrace> run_em_mml(MixtureModel model, const Dataset& data,
                                             const EmConfig& config, bool mml_mode = true);

/// Copy of the model with one component removed and weights renormalized.
MixtureModel without_component(const MixtureModel& model, int index);

}  // namespace amofa
