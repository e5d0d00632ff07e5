#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "amofa/em.hpp"
#include "amofa/types.hpp"

namespace amofa {

struct AmofaConfig {
  EmConfig em;
  double outer_epsilon = 1e-4;  // relative message-length decrease to keep growing
  int max_outer_steps = 1000;   // safety net, far beyond any practical fit
};

/// One-component, one-factor starting model: mean at the sample mean, the
/// factor along the leading principal direction scaled by sqrt(eigenvalue),
/// noise the residual per-feature variance; then fitted to convergence with
/// the inner EM. Deterministic.
MixtureModel init_model(const Dataset& data, const EmConfig& config = {});

/// Soft-weighted multivariate kurtosis deviation of one component, normalized
/// so that values behave like a z-score under local multinormality. Returns
/// NaN when the component's soft count is below d+1 (too little support to
/// judge), which excludes it from split selection.
double kurtosis_score(int comp_index, const MixtureModel& model, const Dataset& data);

/// Split candidate: children at mu +/- w with w the eigenvalue-weighted sum of
/// the eigenvectors of the component's modeled covariance; a local 2-component
/// MML-EM runs on the points hard-assigned to the parent, the pair replaces
/// the parent with weights scaled by the parent's, and the whole mixture is
/// polished. Returns nullopt when the component's soft count is below 2(d+1).
std::optional<MixtureModel> split_component(const MixtureModel& model, const Dataset& data,
                                            int comp_index, const EmConfig& config = {});

/// Factor-addition candidate: picks the component with the largest Frobenius
/// gap between its responsibility-weighted sample covariance and its modeled
/// covariance (among those below the p <= d-1 cap), appends the principal
/// direction of the re-estimation residuals to its loadings, and polishes.
/// Returns nullopt when every component is at the factor cap.
std::optional<std::pair<int, MixtureModel>> factor_add_candidate(
    const MixtureModel& model, const Dataset& data, const EmConfig& config = {});

/// Downsizing sweep: removes the component with the smallest N_k/T_k ratio,
/// renormalizes, polishes with MML-EM, and snapshots, down to K=1.
std::vector<MixtureModel> downsize_phase(const MixtureModel& model, const Dataset& data,
                                         const EmConfig& config = {});

/// Full AMoFA fit: grow by the cheaper of split / factor-add until the
/// message length stops dropping, then downsize to K=1, and return the
/// archived model with the global minimum message length.
std::pair<MixtureModel, FitTrace> amofa_fit(const Dataset& data,
                                            const AmofaConfig& config = {});

}  // namespace amofa
