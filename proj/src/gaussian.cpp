#include "amofa/gaussian.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

namespace amofa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kMaxCondition = 1e12;

}  // namespace

void FactorComponent::validate() const {
  const int d = dim();
  if (d < 1) throw InvalidInput("component has empty mean");
  if (loadings.rows() != d) throw InvalidInput("loadings row count != dim");
  const int p = factors();
  if (p < 1 || p > d - 1) {
    std::ostringstream msg;
    msg << "factor count " << p << " outside [1, " << d - 1 << "]";
    throw InvalidInput(msg.str());
  }
  if (noise_diag.size() != d) throw InvalidInput("noise_diag size != dim");
  if ((noise_diag.array() <= 0.0).any()) {
    throw InvalidInput("noise_diag entries must be strictly positive");
  }
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw InvalidInput("component weight outside [0,1]");
  }
  if (!mean.allFinite() || !loadings.allFinite() || !noise_diag.allFinite()) {
    throw InvalidInput("component has non-finite parameters");
  }
}

std::vector<int> MixtureModel::factor_counts() const {
  std::vector<int> counts;
  counts.reserve(components.size());
  for (const auto& comp : components) counts.push_back(comp.factors());
  return counts;
}

MixtureModel MixtureModel::snapshot() const {
  MixtureModel copy;
  copy.components = components;
  copy.dim = dim;
  return copy;
}

void MixtureModel::validate() const {
  if (components.empty()) throw InvalidInput("mixture has no components");
  double weight_sum = 0.0;
  for (const auto& comp : components) {
    comp.validate();
    if (comp.dim() != dim) throw InvalidInput("component dim != mixture dim");
    weight_sum += comp.weight;
  }
  if (std::abs(weight_sum - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << "mixture weights sum to " << weight_sum << ", not 1";
    throw InvalidInput(msg.str());
  }
}

void Dataset::validate() const {
  if (points.rows() < 1) throw InvalidInput("dataset is empty");
  if (!points.allFinite()) throw InvalidInput("dataset has non-finite entries");
  if (labels && labels->size() != points.rows()) {
    throw InvalidInput("label count != sample count");
  }
}

void FitTrace::clear() {
  steps.clear();
  stored_models.clear();
  em_lengths.clear();
  warnings.clear();
  selected_index = 0;
}

const char* to_string(FitAction action) {
  switch (action) {
    case FitAction::init: return "init";
    case FitAction::split: return "split";
    case FitAction::add_factor: return "add_factor";
    case FitAction::annihilate: return "annihilate";
  }
  return "?";
}

LowRankGaussian::LowRankGaussian(const FactorComponent& comp)
    : mean_(comp.mean),
      inv_noise_(comp.noise_diag.cwiseInverse()),
      noise_sol_loadings_(inv_noise_.asDiagonal() * comp.loadings) {
  const int p = comp.factors();
  Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(p, p);
  inner.noalias() += comp.loadings.transpose() * noise_sol_loadings_;
  inner = 0.5 * (inner + inner.transpose()).eval();

  // Eigenvalues of M are >= 1, so the condition estimate is just lambda_max /
  // lambda_min; the p x p eigensolve is cheap next to the d x p products.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(inner, Eigen::EigenvaluesOnly);
  const double lo = eigen.eigenvalues().minCoeff();
  const double hi = eigen.eigenvalues().maxCoeff();
  condition_ = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(condition_ < kMaxCondition)) {
    std::ostringstream msg;
    msg << "inner p x p system near singular (condition estimate " << condition_ << ")";
    throw NumericError(msg.str());
  }

  inner_.compute(inner);
  if (inner_.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "inner p x p Cholesky failed (condition estimate " << condition_ << ")";
    throw NumericError(msg.str());
  }

  log_det_ = comp.noise_diag.array().log().sum() +
             2.0 * inner_.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd LowRankGaussian::mahalanobis(const Eigen::MatrixXd& centered) const {
  // delta' Sigma^-1 delta = delta' Psi^-1 delta - y' M^-1 y,  y = L' Psi^-1 delta
  const Eigen::MatrixXd y = centered * noise_sol_loadings_;  // N x p
  const Eigen::MatrixXd solved = inner_.solve(y.transpose()).transpose();
  Eigen::VectorXd quad =
      (centered.array().square().matrix() * inv_noise_).rowwise().sum();
  quad.noalias() -= (y.array() * solved.array()).rowwise().sum().matrix();
  return quad;
}

Eigen::MatrixXd LowRankGaussian::project(const Eigen::MatrixXd& centered) const {
  const Eigen::MatrixXd y = centered * noise_sol_loadings_;
  return inner_.solve(y.transpose()).transpose();
}

Eigen::MatrixXd LowRankGaussian::posterior_cov() const {
  const Eigen::Index p = noise_sol_loadings_.cols();
  return inner_.solve(Eigen::MatrixXd::Identity(p, p));
}

double LowRankGaussian::log_density(const Eigen::VectorXd& x) const {
  if (!x.allFinite()) throw InvalidInput("non-finite input point");
  if (x.size() != mean_.size()) throw InvalidInput("point dim != component dim");
  const Eigen::MatrixXd centered = (x - mean_).transpose();
  const double quad = mahalanobis(centered)(0);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det_ + quad);
}

Eigen::MatrixXd component_covariance(const FactorComponent& comp) {
  comp.validate();
  Eigen::MatrixXd cov = comp.noise_diag.asDiagonal();
  cov.noalias() += comp.loadings * comp.loadings.transpose();
  return 0.5 * (cov + cov.transpose()).eval();
}

double component_log_density(const FactorComponent& comp, const Eigen::VectorXd& x) {
  return LowRankGaussian(comp).log_density(x);
}

Eigen::MatrixXd log_joint_matrix(const MixtureModel& model, const Dataset& data) {
  data.validate();
  if (data.dim() != model.dim) throw InvalidInput("data dim != model dim");
  const Eigen::Index n = data.size();
  const int k_count = model.component_count();
  const double d = static_cast<double>(model.dim);
  Eigen::MatrixXd joint(n, k_count);
  for (int k = 0; k < k_count; ++k) {
    const FactorComponent& comp = model.components[k];
    const LowRankGaussian gaussian(comp);
    const Eigen::MatrixXd centered = data.points.rowwise() - comp.mean.transpose();
    const double log_weight =
        comp.weight > 0.0 ? std::log(comp.weight) : -std::numeric_limits<double>::infinity();
    joint.col(k) = (-0.5 * (d * kLog2Pi + gaussian.log_det()) + log_weight) -
                   0.5 * gaussian.mahalanobis(centered).array();
  }
  return joint;
}

Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& log_values) {
  const Eigen::VectorXd shift = log_values.rowwise().maxCoeff();
  Eigen::VectorXd out(log_values.rows());
  for (Eigen::Index i = 0; i < log_values.rows(); ++i) {
    if (!std::isfinite(shift(i))) {
      out(i) = shift(i);
      continue;
    }
    out(i) = shift(i) + std::log((log_values.row(i).array() - shift(i)).exp().sum());
  }
  return out;
}

double mixture_log_likelihood(const MixtureModel& model, const Dataset& data) {
  if (data.points.rows() == 0) throw InvalidInput("empty dataset");
  const Eigen::MatrixXd joint = log_joint_matrix(model, data);
  return log_sum_exp_rows(joint).sum();
}

Responsibilities responsibilities(const MixtureModel& model, const Dataset& data) {
  const Eigen::MatrixXd joint = log_joint_matrix(model, data);
  const Eigen::VectorXd row_lse = log_sum_exp_rows(joint);
  for (Eigen::Index i = 0; i < row_lse.size(); ++i) {
    if (!std::isfinite(row_lse(i))) {
      std::ostringstream msg;
      msg << "all components underflow at sample " << i << " (degenerate model)";
      throw NumericError(msg.str());
    }
  }
  Eigen::MatrixXd values = (joint.colwise() - row_lse).array().exp();
  // Tighten the row sums to exactly 1 after exponentiation.
  const Eigen::VectorXd row_sums = values.rowwise().sum();
  values.array().colwise() /= row_sums.array();
  return Responsibilities{std::move(values)};
}

}  // namespace amofa
