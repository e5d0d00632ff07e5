#include "amofa/em.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "amofa/gaussian.hpp"
#include "amofa/mml.hpp"

namespace amofa {

MixtureModel without_component(const MixtureModel& model, int index) {
  if (index < 0 || index >= model.component_count()) {
    throw InvalidInput("component index out of range");
  }
  if (model.component_count() < 2) {
    throw InvalidInput("cannot remove the last component");
  }
  MixtureModel out = model;
  out.components.erase(out.components.begin() + index);
  double sum = 0.0;
  for (const auto& comp : out.components) sum += comp.weight;
  if (sum <= 0.0) {
    throw NumericError("weight renormalization after annihilation failed");
  }
  for (auto& comp : out.components) comp.weight /= sum;
  return out;
}

namespace {

struct AnnihilationState {
  Eigen::VectorXd soft_counts;
  Eigen::VectorXd thresholds;

  void remove(int index) {
    const Eigen::Index k = soft_counts.size();
    Eigen::VectorXd counts(k - 1), limits(k - 1);
    Eigen::Index out = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == index) continue;
      counts(out) = soft_counts(j);
      limits(out) = thresholds(j);
      ++out;
    }
    soft_counts = std::move(counts);
    thresholds = std::move(limits);
  }

  // Weakest component failing its threshold, by smallest N_k/T_k; ties go to
  // the one already marked (zero weight) so a surviving positive-weight
  // component is never removed ahead of a marked one. -1 if none fail.
  int weakest_failing(const MixtureModel& model) const {
    int worst = -1;
    double worst_ratio = std::numeric_limits<double>::infinity();
    double worst_weight = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < soft_counts.size(); ++k) {
      const double weight = model.components[k].weight;
      const bool failing = weight <= 0.0 || soft_counts(k) < thresholds(k);
      if (!failing) continue;
      const double ratio = soft_counts(k) / thresholds(k);
      if (ratio < worst_ratio || (ratio == worst_ratio && weight < worst_weight)) {
        worst_ratio = ratio;
        worst_weight = weight;
        worst = static_cast<int>(k);
      }
    }
    return worst;
  }
};

}  // namespace

Eigen::VectorXd variance_floor(const Dataset& data, double scale) {
  const Eigen::Index n = data.size();
  const Eigen::RowVectorXd mean = data.points.colwise().mean();
  Eigen::VectorXd variances =
      (data.points.rowwise() - mean).array().square().colwise().sum().transpose() /
      static_cast<double>(n);
  const double mean_variance = variances.mean();
  if (mean_variance <= 0.0) throw NumericError("zero-variance data");
  for (Eigen::Index j = 0; j < variances.size(); ++j) {
    if (variances(j) <= 0.0) variances(j) = mean_variance;
  }
  return scale * variances;
}

EStepMoments e_step(const MixtureModel& model, const Dataset& data) {
  model.validate();
  const Eigen::MatrixXd joint = log_joint_matrix(model, data);
  const Eigen::VectorXd row_lse = log_sum_exp_rows(joint);
  for (Eigen::Index i = 0; i < row_lse.size(); ++i) {
    if (!std::isfinite(row_lse(i))) {
      std::ostringstream msg;
      msg << "all components underflow at sample " << i << " (degenerate model)";
      throw NumericError(msg.str());
    }
  }

  EStepMoments moments;
  moments.log_likelihood = row_lse.sum();
  Eigen::MatrixXd resp = (joint.colwise() - row_lse).array().exp();
  const Eigen::VectorXd row_sums = resp.rowwise().sum();
  resp.array().colwise() /= row_sums.array();
  moments.resp.values = std::move(resp);

  const int k_count = model.component_count();
  moments.soft_counts = moments.resp.values.colwise().sum();
  moments.ez.reserve(k_count);
  moments.ezz.reserve(k_count);
  for (int k = 0; k < k_count; ++k) {
    const FactorComponent& comp = model.components[k];
    const LowRankGaussian gaussian(comp);
    const Eigen::MatrixXd centered = data.points.rowwise() - comp.mean.transpose();
    const Eigen::MatrixXd projected = gaussian.project(centered);  // N x p
    const Eigen::VectorXd& h = moments.resp.values.col(k);
    moments.ez.emplace_back(h.asDiagonal() * projected);
    Eigen::MatrixXd second = moments.soft_counts(k) * gaussian.posterior_cov();
    second.noalias() += projected.transpose() * (h.asDiagonal() * projected);
    moments.ezz.emplace_back(0.5 * (second + second.transpose()));
  }
  return moments;
}

MixtureModel m_step(const MixtureModel& model, const Dataset& data,
                    const EStepMoments& moments, bool mml_mode,
                    double variance_floor_scale) {
  const Eigen::Index n = data.size();
  const int d = model.dim;
  const int k_count = model.component_count();
  const Eigen::VectorXd floor = variance_floor(data, variance_floor_scale);

  // Mixing weights first: with mml_mode the Dirichlet-prior update zeroes
  // under-supported components, whose other parameters are then left alone.
  Eigen::VectorXd weights(k_count);
  if (mml_mode) {
    Eigen::VectorXd razed(k_count);
    for (int k = 0; k < k_count; ++k) {
      const double threshold =
          annihilation_threshold(d, model.components[k].factors());
      razed(k) = std::max(0.0, moments.soft_counts(k) - threshold);
    }
    const double total = razed.sum();
    if (total > 0.0) {
      weights = razed / total;
    } else {
      // Every component fell below its threshold; keep the strongest alive.
      int best = 0;
      double best_ratio = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < k_count; ++k) {
        const double ratio = moments.soft_counts(k) /
                             annihilation_threshold(d, model.components[k].factors());
        if (ratio > best_ratio) {
          best_ratio = ratio;
          best = k;
        }
      }
      weights.setZero();
      weights(best) = 1.0;
    }
  } else {
    weights = moments.soft_counts / static_cast<double>(n);
  }

  MixtureModel updated;
  updated.dim = d;
  updated.components.resize(k_count);
  for (int k = 0; k < k_count; ++k) {
    FactorComponent& out = updated.components[k];
    out.weight = weights(k);
    if (mml_mode && weights(k) <= 0.0) {
      // Marked for annihilation; parameters are never used again.
      out.mean = model.components[k].mean;
      out.loadings = model.components[k].loadings;
      out.noise_diag = model.components[k].noise_diag;
      continue;
    }

    const int p = model.components[k].factors();
    const double soft_count = moments.soft_counts(k);
    const Eigen::VectorXd& h = moments.resp.values.col(k);

    // Augmented system over z~ = [z 1]': solve [Lambda mu] jointly.
    Eigen::MatrixXd zz(p + 1, p + 1);
    zz.topLeftCorner(p, p) = moments.ezz[k];
    const Eigen::VectorXd ez_sum = moments.ez[k].colwise().sum();
    zz.block(0, p, p, 1) = ez_sum;
    zz.block(p, 0, 1, p) = ez_sum.transpose();
    zz(p, p) = soft_count;

    Eigen::MatrixXd xz(d, p + 1);
    xz.leftCols(p).noalias() = data.points.transpose() * moments.ez[k];
    xz.col(p).noalias() = data.points.transpose() * h;

    const Eigen::LDLT<Eigen::MatrixXd> solver(zz);
    const Eigen::VectorXd pivots = solver.vectorD().cwiseAbs();
    if (solver.info() != Eigen::Success || !(pivots.minCoeff() > 1e-13 * pivots.maxCoeff()) ||
        !(pivots.maxCoeff() > 0.0)) {
      std::ostringstream msg;
      msg << "singular latent moment system for component " << k;
      throw NumericError(msg.str());
    }
    const Eigen::MatrixXd joint = solver.solve(xz.transpose()).transpose();  // d x (p+1)

    out.loadings = joint.leftCols(p);
    out.mean = joint.col(p);

    // Psi update: diag{ sum_i h (x_i - [Lambda mu] E[z~|x_i]) x_i' } / N_k
    Eigen::VectorXd weighted_sq =
        (data.points.array().square().matrix().transpose() * h);
    weighted_sq.noalias() -= (joint.array() * xz.array()).rowwise().sum().matrix();
    out.noise_diag = (weighted_sq / soft_count).cwiseMax(floor);
    if (!out.mean.allFinite() || !out.loadings.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite M-step update for component " << k;
      throw NumericError(msg.str());
    }
  }
  return updated;
}

std::pair<MixtureModel, FitTrace> run_em_mml(MixtureModel model, const Dataset& data,
                                             const EmConfig& config, bool mml_mode) {
  if (config.epsilon <= 0.0) throw InvalidInput("epsilon must be positive");
  if (config.max_iters < 1) throw InvalidInput("max_iters must be >= 1");
  data.validate();
  model.validate();

  FitTrace trace;
  double previous_length = std::numeric_limits<double>::infinity();

  EStepMoments moments = e_step(model, data);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    MixtureModel updated =
        m_step(model, data, moments, mml_mode, config.variance_floor_scale);

    if (mml_mode) {
      AnnihilationState state{moments.soft_counts, Eigen::VectorXd(model.component_count())};
      for (int k = 0; k < model.component_count(); ++k) {
        state.thresholds(k) =
            annihilation_threshold(model.dim, model.components[k].factors());
      }
      int weakest = state.weakest_failing(updated);
      bool clamped = false;
      while (weakest >= 0) {
        if (updated.component_count() <= 1) {
          clamped = true;
          break;
        }
        updated = without_component(updated, weakest);
        state.remove(weakest);

        const double log_likelihood = mixture_log_likelihood(updated, data);
        const CodeLengthReport report =
            message_length_given(updated, data.size(), log_likelihood);
        trace.steps.push_back({FitAction::annihilate, updated.component_count(),
                               updated.factor_counts(), report.total, log_likelihood});
        trace.stored_models.push_back(updated.snapshot());
        weakest = state.weakest_failing(updated);
      }
      if (clamped) {
        // The single survivor keeps weight one even though its support is
        // below threshold; the last component is never annihilated.
        updated.components[0].weight = 1.0;
        trace.warnings.push_back("annihilation clamped at K=1");
      }
    }

    model = std::move(updated);
    moments = e_step(model, data);
    const CodeLengthReport report =
        message_length_given(model, data.size(), moments.log_likelihood);
    trace.em_lengths.push_back(report.total);

    const double scale = std::max(std::abs(report.total), 1.0);
    if (std::abs(previous_length - report.total) < config.epsilon * scale) break;
    previous_length = report.total;
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace amofa
