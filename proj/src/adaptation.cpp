#include "amofa/adaptation.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>

#include "amofa/gaussian.hpp"
#include "amofa/mml.hpp"

namespace amofa {

namespace {

// Fix the eigenvector sign so the entry with the largest magnitude is
// positive; solver output signs are otherwise arbitrary.
Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  Eigen::Index pick = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > best) {
      best = std::abs(v(i));
      pick = i;
    }
  }
  if (v(pick) < 0.0) v = -v;
  return v;
}

int arg_max_row(const Eigen::MatrixXd& values, Eigen::Index row) {
  int best = 0;
  for (int k = 1; k < values.cols(); ++k) {
    if (values(row, k) > values(row, best)) best = k;
  }
  return best;
}

double kurtosis_from_resp(int comp_index, const MixtureModel& model,
                          const Dataset& data, const Eigen::MatrixXd& resp) {
  const double d = static_cast<double>(model.dim);
  const Eigen::VectorXd h = resp.col(comp_index);
  const double soft_count = h.sum();
  if (soft_count < d + 1.0) return std::numeric_limits<double>::quiet_NaN();

  const FactorComponent& comp = model.components[comp_index];
  const LowRankGaussian gaussian(comp);
  const Eigen::MatrixXd centered = data.points.rowwise() - comp.mean.transpose();
  const Eigen::VectorXd quad = gaussian.mahalanobis(centered);
  const double sample_kurtosis = quad.array().square().matrix().dot(h) / soft_count;
  const double reference = d * (d + 2.0);
  return (sample_kurtosis - reference) * std::sqrt(soft_count / (8.0 * reference));
}

std::optional<MixtureModel> split_from_resp(const MixtureModel& model, const Dataset& data,
                                            int comp_index, const Eigen::MatrixXd& resp,
                                            const EmConfig& config) {
  const int d = model.dim;
  const double soft_count = resp.col(comp_index).sum();
  if (soft_count < 2.0 * (d + 1)) return std::nullopt;

  // Points that fall under the component: hard assignment by max
  // responsibility, ties to the lowest index.
  std::vector<Eigen::Index> member_rows;
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    if (arg_max_row(resp, i) == comp_index) member_rows.push_back(i);
  }
  if (member_rows.size() < static_cast<std::size_t>(2 * (d + 1))) return std::nullopt;

  Dataset local;
  local.points.resize(static_cast<Eigen::Index>(member_rows.size()), d);
  for (Eigen::Index r = 0; r < local.points.rows(); ++r) {
    local.points.row(r) = data.points.row(member_rows[r]);
  }

  const FactorComponent& parent = model.components[comp_index];

  // Children start at mu +/- w, w the eigenvalue-weighted sum of all
  // eigenvectors of the modeled covariance.
  const Eigen::MatrixXd covariance = component_covariance(parent);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(covariance);
  if (eigen.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    offset += eigen.eigenvalues()(i) * canonical_sign(eigen.eigenvectors().col(i));
  }

  // Children reuse the parent's covariance but with the factor/noise split
  // rebalanced: top-p eigendirections shrunk by the tail average, residual in
  // the noise. A parent that rode the likelihood ridge down to the noise
  // floor would otherwise hand both children a pinned Psi, where EM crawls.
  const int p = parent.factors();
  const Eigen::VectorXd floor = variance_floor(local, config.variance_floor_scale);
  FactorComponent broad = parent;
  broad.weight = 0.5;
  broad.loadings.resize(d, p);
  for (int c = 0; c < p; ++c) {
    const double lambda = eigen.eigenvalues()(d - 1 - c);
    const double scale = std::sqrt(std::max(lambda - (eigen.eigenvalues().head(d - p).sum() /
                                                      static_cast<double>(d - p)),
                                            0.01 * lambda));
    broad.loadings.col(c) = canonical_sign(eigen.eigenvectors().col(d - 1 - c)) * scale;
  }
  broad.noise_diag =
      (covariance.diagonal() - broad.loadings.rowwise().squaredNorm()).cwiseMax(floor);

  // Second shape variant: moments of each child's own side of the hyperplane
  // w'(x - mu) = 0. Localized children find structure that w missed; broad
  // ones survive an overshooting w. The cheaper polished candidate wins.
  const Eigen::VectorXd side = (local.points.rowwise() - parent.mean.transpose()) * offset;
  auto side_shape = [&](bool positive) {
    FactorComponent child = broad;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < side.size(); ++i) {
      if ((side(i) >= 0.0) == positive) rows.push_back(i);
    }
    if (rows.size() < static_cast<std::size_t>(d + 1)) return child;
    Eigen::MatrixXd half(static_cast<Eigen::Index>(rows.size()), d);
    for (Eigen::Index r = 0; r < half.rows(); ++r) half.row(r) = local.points.row(rows[r]);
    const Eigen::RowVectorXd half_mean = half.colwise().mean();
    const Eigen::MatrixXd centered = half.rowwise() - half_mean;
    Eigen::MatrixXd half_cov =
        centered.transpose() * centered / static_cast<double>(half.rows());
    half_cov = 0.5 * (half_cov + half_cov.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> basis(half_cov);
    if (basis.info() != Eigen::Success) return child;
    for (int c = 0; c < p; ++c) {
      const double lambda = basis.eigenvalues()(d - 1 - c);
      if (!(lambda > 0.0)) return broad;
      child.loadings.col(c) =
          canonical_sign(basis.eigenvectors().col(d - 1 - c)) * std::sqrt(lambda);
    }
    child.noise_diag =
        (half_cov.diagonal() - child.loadings.rowwise().squaredNorm()).cwiseMax(floor);
    return child;
  };

  auto build = [&](const FactorComponent& up, const FactorComponent& down)
      -> std::optional<MixtureModel> {
    MixtureModel pair;
    pair.dim = d;
    pair.components.push_back(up);
    pair.components.back().mean = parent.mean + offset;
    pair.components.push_back(down);
    pair.components.back().mean = parent.mean - offset;
    try {
      pair = run_em_mml(std::move(pair), local, config, /*mml_mode=*/true).first;
      MixtureModel candidate = model;
      candidate.components.erase(candidate.components.begin() + comp_index);
      for (int c = 0; c < pair.component_count(); ++c) {
        FactorComponent piece = pair.components[c];
        piece.weight *= parent.weight;
        candidate.components.insert(candidate.components.begin() + comp_index + c, piece);
      }
      return run_em_mml(std::move(candidate), data, config, /*mml_mode=*/true).first;
    } catch (const NumericError&) {
      return std::nullopt;  // degenerate local fit; variant infeasible
    }
  };

  std::optional<MixtureModel> best;
  double best_length = std::numeric_limits<double>::infinity();
  const std::pair<FactorComponent, FactorComponent> variants[] = {
      {broad, broad}, {side_shape(true), side_shape(false)}};
  for (const auto& [up, down] : variants) {
    auto candidate = build(up, down);
    if (!candidate) continue;
    const double length = message_length(*candidate, data).total;
    if (length < best_length) {
      best_length = length;
      best = std::move(candidate);
    }
  }
  return best;
}

std::optional<std::pair<int, MixtureModel>> factor_add_from_resp(
    const MixtureModel& model, const Dataset& data, const Eigen::MatrixXd& resp,
    const EmConfig& config) {
  const int d = model.dim;

  // Component with the largest Frobenius gap between the responsibility-
  // weighted sample covariance and the modeled covariance, below the cap.
  int pick = -1;
  double widest_gap = -1.0;
  for (int k = 0; k < model.component_count(); ++k) {
    if (model.components[k].factors() + 1 > d - 1) continue;
    const Eigen::VectorXd h = resp.col(k);
    const double soft_count = h.sum();
    if (soft_count <= 0.0) continue;
    const Eigen::MatrixXd centered =
        data.points.rowwise() - model.components[k].mean.transpose();
    Eigen::MatrixXd weighted_cov =
        centered.transpose() * (h.asDiagonal() * centered) / soft_count;
    const double gap = (weighted_cov - component_covariance(model.components[k])).norm();
    if (gap > widest_gap) {
      widest_gap = gap;
      pick = k;
    }
  }
  if (pick < 0) return std::nullopt;

  const FactorComponent& comp = model.components[pick];
  const LowRankGaussian gaussian(comp);
  const Eigen::MatrixXd centered = data.points.rowwise() - comp.mean.transpose();
  const Eigen::MatrixXd projected = gaussian.project(centered);

  // Residuals of the latent re-estimation x~ = Lambda E[z|x] + mu; the new
  // factor is their principal direction, soft-weighted.
  const Eigen::MatrixXd residuals = projected * comp.loadings.transpose() - centered;
  const Eigen::VectorXd h = resp.col(pick);
  const double soft_count = h.sum();
  const Eigen::RowVectorXd residual_mean = (h.transpose() * residuals) / soft_count;
  const Eigen::MatrixXd centered_residuals = residuals.rowwise() - residual_mean;
  Eigen::MatrixXd residual_cov =
      centered_residuals.transpose() * (h.asDiagonal() * centered_residuals) / soft_count;
  residual_cov = 0.5 * (residual_cov + residual_cov.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(residual_cov);
  if (eigen.info() != Eigen::Success) return std::nullopt;
  const double top = eigen.eigenvalues()(d - 1);
  if (!(top > 0.0)) return std::nullopt;
  const Eigen::VectorXd direction =
      canonical_sign(eigen.eigenvectors().col(d - 1)) * std::sqrt(top);

  MixtureModel candidate = model;
  FactorComponent& grown = candidate.components[pick];
  grown.loadings.conservativeResize(Eigen::NoChange, grown.factors() + 1);
  grown.loadings.rightCols(1) = direction;

  try {
    return std::make_pair(
        pick, run_em_mml(std::move(candidate), data, config, /*mml_mode=*/true).first);
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

struct Scored {
  MixtureModel model;
  double message_length = 0.0;
  double log_likelihood = 0.0;
};

Scored score(MixtureModel model, const Dataset& data) {
  Scored out;
  out.log_likelihood = mixture_log_likelihood(model, data);
  out.message_length =
      message_length_given(model, data.size(), out.log_likelihood).total;
  out.model = std::move(model);
  return out;
}

void record(FitTrace& trace, FitAction action, const Scored& scored) {
  trace.steps.push_back({action, scored.model.component_count(),
                         scored.model.factor_counts(), scored.message_length,
                         scored.log_likelihood});
  trace.stored_models.push_back(scored.model.snapshot());
}

}  // namespace

MixtureModel init_model(const Dataset& data, const EmConfig& config) {
  data.validate();
  const int d = data.dim();
  if (d < 2) throw InvalidInput("need at least 2 features for a factor analyzer");
  const Eigen::Index n = data.size();

  const Eigen::RowVectorXd mean = data.points.colwise().mean();
  const Eigen::MatrixXd centered = data.points.rowwise() - mean;
  Eigen::MatrixXd covariance =
      centered.transpose() * centered / static_cast<double>(n);
  covariance = 0.5 * (covariance + covariance.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(covariance);
  if (eigen.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  const double leading = eigen.eigenvalues()(d - 1);
  if (!(leading > 0.0)) throw NumericError("zero-variance data");

  FactorComponent comp;
  comp.mean = mean.transpose();
  comp.loadings = canonical_sign(eigen.eigenvectors().col(d - 1)) * std::sqrt(leading);
  const Eigen::VectorXd floor = variance_floor(data, config.variance_floor_scale);
  comp.noise_diag = (covariance.diagonal() -
                     comp.loadings.col(0).cwiseProduct(comp.loadings.col(0)))
                        .cwiseMax(floor);
  comp.weight = 1.0;

  MixtureModel model;
  model.dim = d;
  model.components.push_back(std::move(comp));
  if (n < d + 1) {
    model.trace.warnings.push_back("fewer samples than dim+1; fit may be unstable");
  }

  auto [fitted, em_trace] = run_em_mml(std::move(model), data, config, /*mml_mode=*/true);
  fitted.trace.warnings.insert(fitted.trace.warnings.end(), em_trace.warnings.begin(),
                               em_trace.warnings.end());
  return fitted;
}

double kurtosis_score(int comp_index, const MixtureModel& model, const Dataset& data) {
  if (comp_index < 0 || comp_index >= model.component_count()) {
    throw InvalidInput("component index out of range");
  }
  const Responsibilities resp = responsibilities(model, data);
  return kurtosis_from_resp(comp_index, model, data, resp.values);
}

std::optional<MixtureModel> split_component(const MixtureModel& model, const Dataset& data,
                                            int comp_index, const EmConfig& config) {
  if (comp_index < 0 || comp_index >= model.component_count()) {
    throw InvalidInput("component index out of range");
  }
  const Responsibilities resp = responsibilities(model, data);
  return split_from_resp(model, data, comp_index, resp.values, config);
}

std::optional<std::pair<int, MixtureModel>> factor_add_candidate(
    const MixtureModel& model, const Dataset& data, const EmConfig& config) {
  const Responsibilities resp = responsibilities(model, data);
  return factor_add_from_resp(model, data, resp.values, config);
}

std::vector<MixtureModel> downsize_phase(const MixtureModel& model, const Dataset& data,
                                         const EmConfig& config) {
  std::vector<MixtureModel> snapshots;
  MixtureModel current = model;
  while (current.component_count() > 1) {
    const EStepMoments moments = e_step(current, data);
    int weakest = 0;
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (int k = 0; k < current.component_count(); ++k) {
      const double ratio =
          moments.soft_counts(k) /
          annihilation_threshold(current.dim, current.components[k].factors());
      if (ratio < worst_ratio) {
        worst_ratio = ratio;
        weakest = k;
      }
    }
    current = without_component(current, weakest);
    current = run_em_mml(std::move(current), data, config, /*mml_mode=*/true).first;
    snapshots.push_back(current.snapshot());
  }
  return snapshots;
}

std::pair<MixtureModel, FitTrace> amofa_fit(const Dataset& data, const AmofaConfig& config) {
  data.validate();
  FitTrace trace;

  MixtureModel model = init_model(data, config.em);
  trace.warnings = model.trace.warnings;
  model.trace.clear();

  Scored current = score(std::move(model), data);
  record(trace, FitAction::init, current);

  for (int step = 0; step < config.max_outer_steps; ++step) {
    const Responsibilities resp = responsibilities(current.model, data);

    // Split candidate: the component whose soft-weighted kurtosis deviates
    // most from multinormality, among those with enough support.
    int split_pick = -1;
    double worst_deviation = -1.0;
    for (int k = 0; k < current.model.component_count(); ++k) {
      if (resp.values.col(k).sum() < 2.0 * (data.dim() + 1)) continue;
      const double gamma = kurtosis_from_resp(k, current.model, data, resp.values);
      if (std::isnan(gamma)) continue;
      if (std::abs(gamma) > worst_deviation) {
        worst_deviation = std::abs(gamma);
        split_pick = k;
      }
    }
    std::optional<Scored> split_cand;
    if (split_pick >= 0) {
      auto candidate = split_from_resp(current.model, data, split_pick, resp.values, config.em);
      if (candidate) split_cand = score(std::move(*candidate), data);
    }

    std::optional<Scored> factor_cand;
    if (auto candidate = factor_add_from_resp(current.model, data, resp.values, config.em)) {
      factor_cand = score(std::move(candidate->second), data);
    }

    if (!split_cand && !factor_cand) break;

    FitAction action;
    Scored adopted;
    if (split_cand &&
        (!factor_cand || split_cand->message_length <= factor_cand->message_length)) {
      action = FitAction::split;
      adopted = std::move(*split_cand);
    } else {
      action = FitAction::add_factor;
      adopted = std::move(*factor_cand);
    }

    const double decrease = current.message_length - adopted.message_length;
    current = std::move(adopted);
    record(trace, action, current);

    const double scale = std::max(std::abs(current.message_length), 1.0);
    if (decrease < config.outer_epsilon * scale) break;
  }

  for (MixtureModel& snapshot : downsize_phase(current.model, data, config.em)) {
    record(trace, FitAction::annihilate, score(std::move(snapshot), data));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < trace.steps.size(); ++i) {
    if (trace.steps[i].message_length < trace.steps[best].message_length) best = i;
  }
  trace.selected_index = best;

  MixtureModel selected = trace.stored_models[best];
  selected.trace = trace;
  return {std::move(selected), std::move(trace)};
}

}  // namespace amofa
