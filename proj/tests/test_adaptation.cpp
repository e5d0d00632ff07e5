#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "amofa/adaptation.hpp"
#include "amofa/em.hpp"
#include "amofa/gaussian.hpp"
#include "amofa/io.hpp"
#include "amofa/mml.hpp"
#include "amofa/rng.hpp"
#include "oracles.hpp"

using namespace amofa;

namespace {

Dataset isotropic_blob(Eigen::Index n, int d, std::uint64_t seed,
                       const Eigen::VectorXd& center, double sigma = 1.0) {
  Rng rng(seed);
  Dataset data;
  data.points.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.points(i, j) = center(j) + sigma * rng.normal();
  }
  return data;
}

bool models_identical(const MixtureModel& a, const MixtureModel& b) {
  if (a.component_count() != b.component_count()) return false;
  for (int k = 0; k < a.component_count(); ++k) {
    if (a.components[k].mean != b.components[k].mean) return false;
    if (a.components[k].loadings != b.components[k].loadings) return false;
    if (a.components[k].noise_diag != b.components[k].noise_diag) return false;
    if (a.components[k].weight != b.components[k].weight) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE_BEGIN("adaptation");

TEST_CASE("init aligns the factor with data lying along the x-axis") {
  Rng rng(201);
  Dataset data;
  data.points.resize(400, 2);
  for (Eigen::Index i = 0; i < 400; ++i) {
    data.points(i, 0) = 4.0 * (rng.uniform() - 0.5);
    data.points(i, 1) = 1e-3 * rng.normal();
  }
  const MixtureModel model = init_model(data);
  const Eigen::VectorXd factor = model.components[0].loadings.col(0).normalized();
  CHECK(std::abs(factor(0)) > 0.99);
}

TEST_CASE("init on isotropic data is within 2 percent of the true likelihood") {
  Eigen::VectorXd center(2);
  center << 1.0, -2.0;
  const Dataset data = isotropic_blob(10000, 2, 202, center);
  const MixtureModel model = init_model(data);

  // Closed-form oracle: the generator's own Gaussian.
  FactorComponent truth;
  truth.mean = center;
  truth.loadings = Eigen::MatrixXd::Zero(2, 1);
  truth.loadings(0, 0) = 1e-9;
  truth.noise_diag = Eigen::Vector2d(1.0, 1.0);
  truth.weight = 1.0;
  MixtureModel true_model;
  true_model.dim = 2;
  true_model.components = {truth};

  const double fitted = mixture_log_likelihood(model, data);
  const double reference = mixture_log_likelihood(true_model, data);
  CHECK(std::abs(fitted - reference) < 0.02 * std::abs(reference));
}

TEST_CASE("init is deterministic") {
  const Dataset data = sample_mixture(example2_spec(500, 11));
  CHECK(models_identical(init_model(data), init_model(data)));
}

TEST_CASE("init rejects zero-variance data") {
  Dataset data;
  data.points = Eigen::MatrixXd::Constant(20, 2, 3.25);
  CHECK_THROWS_AS(init_model(data), NumericError);
}

TEST_CASE("init records a warning when samples are scarcer than dim+1") {
  Rng rng(203);
  Dataset data = oracle::random_dataset(rng, 4, 4);
  const MixtureModel model = init_model(data);
  CHECK(!model.trace.warnings.empty());
}

TEST_CASE("kurtosis score is near zero for multinormal data") {
  Eigen::VectorXd center = Eigen::VectorXd::Zero(2);
  for (std::uint64_t seed : {301, 302, 303, 304, 305}) {
    const Dataset data = isotropic_blob(5000, 2, seed, center);
    const MixtureModel model = init_model(data);
    CHECK(std::abs(kurtosis_score(0, model, data)) < 3.0);
  }
}

TEST_CASE("kurtosis score flags bimodal data under one component") {
  // For two far-apart unit Gaussians the statistic approaches
  // (6 - 8) * sqrt(N/64) = -11.2 at N=2000; sampling noise is about +/-1.
  GeneratorSpec spec;
  spec.weights = {0.5, 0.5};
  spec.means = {Eigen::Vector2d(-6.0, 0.0), Eigen::Vector2d(6.0, 0.0)};
  spec.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  spec.sample_count = 2000;
  spec.seed = 33;
  const Dataset data = sample_mixture(spec);
  const MixtureModel model = init_model(data);
  CHECK(std::abs(kurtosis_score(0, model, data)) > 10.0);
}

TEST_CASE("kurtosis score matches a hand evaluation with d(d+2) = 8") {
  // Soft counts are all one for K=1, so gamma reduces to the plain Mardia
  // statistic, reproduced here from dense pieces.
  Rng rng(307);
  const Dataset data = oracle::random_dataset(rng, 40, 2);
  const MixtureModel model = init_model(data);
  const FactorComponent& comp = model.components[0];

  const Eigen::MatrixXd cov = oracle::dense_covariance(comp);
  const Eigen::MatrixXd inverse = cov.inverse();
  double fourth = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const Eigen::VectorXd centered = data.points.row(i).transpose() - comp.mean;
    const double quad = centered.dot(inverse * centered);
    fourth += quad * quad;
  }
  fourth /= static_cast<double>(data.size());
  const double expected = (fourth - 8.0) * std::sqrt(static_cast<double>(data.size()) / 64.0);
  CHECK(kurtosis_score(0, model, data) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("kurtosis score flags components with too little support") {
  Rng rng(311);
  Dataset data = oracle::random_dataset(rng, 40, 2);
  MixtureModel model = init_model(data);
  // Second component far away: soft count ~ 0 < d+1.
  FactorComponent stray = model.components[0];
  stray.mean = Eigen::Vector2d(500.0, 500.0);
  stray.weight = 0.01;
  model.components[0].weight = 0.99;
  model.components.push_back(stray);
  CHECK(std::isnan(kurtosis_score(1, model, data)));
  CHECK_FALSE(std::isnan(kurtosis_score(0, model, data)));
}

TEST_CASE("splitting a two-cluster parent recovers both means") {
  GeneratorSpec spec;
  spec.weights = {0.5, 0.5};
  spec.means = {Eigen::Vector2d(-2.0, 0.0), Eigen::Vector2d(2.0, 0.0)};
  spec.covariances = {Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  spec.sample_count = 1000;
  spec.seed = 41;
  const Dataset data = sample_mixture(spec);
  const MixtureModel parent = init_model(data);
  REQUIRE(parent.component_count() == 1);

  const auto candidate = split_component(parent, data, 0);
  REQUIRE(candidate.has_value());
  REQUIRE(candidate->component_count() == 2);
  for (const Eigen::VectorXd& truth : spec.means) {
    double best = 1e9;
    for (const auto& comp : candidate->components) {
      best = std::min(best, (comp.mean - truth).norm());
    }
    CHECK(best < 0.5);
  }
}

TEST_CASE("splitting sees only the modeled covariance, not loading signs") {
  const Dataset data = sample_mixture(example1_spec(600, 43));
  MixtureModel model = init_model(data);
  MixtureModel flipped = model;
  flipped.components[0].loadings = -flipped.components[0].loadings;

  const auto a = split_component(model, data, 0);
  const auto b = split_component(flipped, data, 0);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(models_identical(*a, *b));
}

TEST_CASE("local split children scale back to the parent weight") {
  // Reproduces the construction rule through public pieces: the local
  // two-component fit has unit total weight, so scaling by the parent weight
  // makes the children sum to it.
  const Dataset data = sample_mixture(example2_spec(800, 47));
  auto [model, trace] = amofa_fit(data);
  REQUIRE(model.component_count() >= 2);

  const Responsibilities resp = responsibilities(model, data);
  const int target = 0;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < resp.values.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < resp.values.cols(); ++k) {
      if (resp.values(i, k) > resp.values(i, best)) best = k;
    }
    if (best == target) rows.push_back(i);
  }
  REQUIRE(rows.size() >= 6u);
  Dataset local;
  local.points.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (Eigen::Index r = 0; r < local.points.rows(); ++r) {
    local.points.row(r) = data.points.row(rows[r]);
  }
  MixtureModel pair = init_model(local);
  auto refit = run_em_mml(pair, local, EmConfig{});
  double local_sum = 0.0;
  for (const auto& comp : refit.first.components) local_sum += comp.weight;
  const double parent_weight = model.components[target].weight;
  CHECK(std::abs(local_sum * parent_weight - parent_weight) < 1e-12);
}

TEST_CASE("split candidates need enough soft support") {
  Rng rng(53);
  const Dataset data = oracle::random_dataset(rng, 5, 2);  // below 2*(d+1)
  const MixtureModel model = init_model(data);
  CHECK_FALSE(split_component(model, data, 0).has_value());
}

TEST_CASE("factor addition targets rank-2 structure under a p=1 component") {
  // Strong planar structure in 3-D: a p=1 fit leaves a wide covariance gap.
  Rng rng(59);
  Dataset data;
  data.points.resize(800, 3);
  for (Eigen::Index i = 0; i < 800; ++i) {
    const double a = 2.0 * rng.normal();
    const double b = 1.4 * rng.normal();
    data.points(i, 0) = a + 0.05 * rng.normal();
    data.points(i, 1) = b + 0.05 * rng.normal();
    data.points(i, 2) = 0.3 * a - 0.2 * b + 0.05 * rng.normal();
  }
  const MixtureModel model = init_model(data);
  REQUIRE(model.components[0].factors() == 1);

  auto gap_of = [&](const MixtureModel& m, int k) {
    const Responsibilities resp = responsibilities(m, data);
    const Eigen::VectorXd h = resp.values.col(k);
    const Eigen::MatrixXd centered =
        data.points.rowwise() - m.components[k].mean.transpose();
    const Eigen::MatrixXd weighted =
        centered.transpose() * (h.asDiagonal() * centered) / h.sum();
    return (weighted - component_covariance(m.components[k])).norm();
  };
  const double gap_before = gap_of(model, 0);
  const double loglik_before = mixture_log_likelihood(model, data);

  const auto candidate = factor_add_candidate(model, data);
  REQUIRE(candidate.has_value());
  CHECK(candidate->first == 0);
  CHECK(candidate->second.components[0].factors() == 2);
  CHECK(mixture_log_likelihood(candidate->second, data) > loglik_before);
  CHECK(gap_of(candidate->second, 0) < gap_before);
}

TEST_CASE("components at the factor cap are excluded from factor addition") {
  const Dataset data = sample_mixture(example2_spec(600, 61));
  const MixtureModel model = init_model(data);  // d=2 means p is capped at 1
  CHECK_FALSE(factor_add_candidate(model, data).has_value());
}

TEST_CASE("residuals of a well-fit component sit at the noise scale") {
  // Strong p=1 signal plus small isotropic noise in 3-D; after the EM fit the
  // re-estimation residual spectrum should be noise-sized, far below the
  // signal variance.
  Rng rng(67);
  Dataset data;
  data.points.resize(1200, 3);
  const Eigen::Vector3d direction(0.8, -0.4, 0.45);
  for (Eigen::Index i = 0; i < 1200; ++i) {
    const double z = 3.0 * rng.normal();
    for (int j = 0; j < 3; ++j) {
      data.points(i, j) = direction(j) * z + 0.1 * rng.normal();
    }
  }
  const MixtureModel model = init_model(data);
  const FactorComponent& comp = model.components[0];

  const LowRankGaussian gaussian(comp);
  const Eigen::MatrixXd centered = data.points.rowwise() - comp.mean.transpose();
  const Eigen::MatrixXd residuals =
      gaussian.project(centered) * comp.loadings.transpose() - centered;
  const Eigen::RowVectorXd mean = residuals.colwise().mean();
  const Eigen::MatrixXd centered_residuals = residuals.rowwise() - mean;
  const Eigen::MatrixXd cov = centered_residuals.transpose() * centered_residuals /
                              static_cast<double>(residuals.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(cov, Eigen::EigenvaluesOnly);
  CHECK(eigen.eigenvalues().maxCoeff() < 0.05);  // noise variance is 0.01
}

TEST_CASE("downsizing a three-component model snapshots K=2 and K=1") {
  const Dataset data = sample_mixture(example1_spec(900, 71));
  auto [model, trace] = amofa_fit(data);
  REQUIRE(model.component_count() == 3);

  const auto snapshots = downsize_phase(model, data);
  REQUIRE(snapshots.size() == 2);
  CHECK(snapshots[0].component_count() == 2);
  CHECK(snapshots[1].component_count() == 1);
  for (const MixtureModel& snapshot : snapshots) {
    double sum = 0.0;
    for (const auto& comp : snapshot.components) sum += comp.weight;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("the full fit finds three components on the aligned-Gaussians data") {
  const Dataset data = sample_mixture(example1_spec(900, 73));
  auto [model, trace] = amofa_fit(data);
  CHECK(model.component_count() == 3);
  CHECK(trace.selected_index < trace.steps.size());
}

TEST_CASE("single-Gaussian data keeps a single component across seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GeneratorSpec spec;
    spec.weights = {1.0};
    spec.means = {Eigen::Vector2d(0.5, -1.0)};
    Eigen::Matrix2d cov;
    cov << 1.5, 0.4, 0.4, 0.8;
    spec.covariances = {cov};
    spec.sample_count = 600;
    spec.seed = seed;
    auto [model, trace] = amofa_fit(sample_mixture(spec));
    CHECK(model.component_count() == 1);
  }
}

TEST_CASE("the fit recovers component count and latent rank in 30 dimensions") {
  // Two separated blobs, each rank-3 signal plus unit noise: the fit should
  // grow each component to three factors and stop.
  Rng rng(9);
  GeneratorSpec spec;
  spec.sample_count = 800;
  spec.seed = 9;
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(30);
    mean(0) = k == 0 ? -6.0 : 6.0;
    spec.means.push_back(mean);
    Eigen::MatrixXd span(30, 3);
    for (int i = 0; i < 30; ++i) {
      for (int j = 0; j < 3; ++j) span(i, j) = rng.normal();
    }
    spec.covariances.push_back(span * span.transpose() +
                               Eigen::MatrixXd::Identity(30, 30));
    spec.weights.push_back(0.5);
  }
  auto [model, trace] = amofa_fit(sample_mixture(spec));
  REQUIRE(model.component_count() == 2);
  for (int p : model.factor_counts()) CHECK(p == 3);
}

TEST_CASE("identical data produce identical fits and traces") {
  const Dataset data = sample_mixture(example2_spec(700, 79));
  auto [first, first_trace] = amofa_fit(data);
  auto [second, second_trace] = amofa_fit(data);
  CHECK(models_identical(first, second));
  REQUIRE(first_trace.steps.size() == second_trace.steps.size());
  for (std::size_t i = 0; i < first_trace.steps.size(); ++i) {
    CHECK(first_trace.steps[i].message_length == second_trace.steps[i].message_length);
    CHECK(first_trace.steps[i].log_likelihood == second_trace.steps[i].log_likelihood);
    CHECK(first_trace.steps[i].action == second_trace.steps[i].action);
  }
}

TEST_CASE("the returned model has the smallest recorded message length") {
  const Dataset data = sample_mixture(example2_spec(900, 83));
  auto [model, trace] = amofa_fit(data);
  const double selected = trace.steps[trace.selected_index].message_length;
  for (const FitStep& step : trace.steps) {
    CHECK(selected <= step.message_length);
  }
  CHECK(trace.steps.size() == trace.stored_models.size());
}

TEST_CASE("recorded step scores match the stored snapshots") {
  const Dataset data = sample_mixture(example1_spec(600, 89));
  auto [model, trace] = amofa_fit(data);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const CodeLengthReport report = message_length(trace.stored_models[i], data);
    CHECK(trace.steps[i].message_length == doctest::Approx(report.total).epsilon(1e-12));
    CHECK(trace.steps[i].components == trace.stored_models[i].component_count());
  }
}

TEST_CASE("candidate construction leaves the input model untouched") {
  const Dataset data = sample_mixture(example1_spec(600, 97));
  const MixtureModel model = init_model(data);
  const MixtureModel before = model;
  const auto split = split_component(model, data, 0);
  const auto fadd = factor_add_candidate(model, data);
  CHECK(models_identical(model, before));
}

TEST_SUITE_END();
