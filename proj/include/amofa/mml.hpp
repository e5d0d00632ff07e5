#pragma once

#include <Eigen/Core>

#include "amofa/types.hpp"

namespace amofa {

/// Normalizer of Rissanen's universal prior for integers, sum_k 2^(-log* k).
inline constexpr double kRissanenC = 2.865064;

/// Breakdown of the message-length objective, all in nats:
///   total = param_cost + integer_cost + neg_log_likelihood.
struct CodeLengthReport {
  double total = 0.0;
  double param_cost = 0.0;           // real-parameter code length
  double integer_cost = 0.0;         // L*(K_nz) + sum_k L*(p_k)
  double neg_log_likelihood = 0.0;
  Eigen::VectorXd per_component_C;   // C_k for each retained component
};

/// Ideal code length of a positive integer under the universal prior:
/// L*(k) = log*(k) + log c, with log*(k) = log k + log log k + ... keeping
/// only positive terms.
double universal_code_length(long k);

/// Per-component parameter count C_k = d*(p_k + 2) + L*(p_k).
double component_param_count(int d, int p_k);

/// Soft-count threshold below which a component is annihilated: C_k / 2.
double annihilation_threshold(int d, int p_k);

CodeLengthReport message_length(const MixtureModel& model, const Dataset& data);

/// Same criterion with the log-likelihood already in hand (EM inner loop).
CodeLengthReport message_length_given(const MixtureModel& model, Eigen::Index n,
                                      double log_likelihood);

}  // namespace amofa
