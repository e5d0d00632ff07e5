#include <doctest.h>

#include <cmath>

#include "amofa/adaptation.hpp"
#include "amofa/gaussian.hpp"
#include "amofa/io.hpp"
#include "amofa/mml.hpp"
#include "amofa/rng.hpp"
#include "oracles.hpp"

using namespace amofa;

TEST_SUITE_BEGIN("mml");

TEST_CASE("universal code length of 1 is log c") {
  CHECK(universal_code_length(1) == doctest::Approx(std::log(kRissanenC)).epsilon(1e-14));
  CHECK(universal_code_length(1) == doctest::Approx(1.05267).epsilon(1e-4));
}

TEST_CASE("universal code length of 2 stops after the first positive term") {
  // log log 2 < 0 is excluded by the stop rule.
  CHECK(universal_code_length(2) ==
        doctest::Approx(std::log(2.0) + std::log(kRissanenC)).epsilon(1e-14));
  CHECK(universal_code_length(2) == doctest::Approx(1.74582).epsilon(1e-4));
}

TEST_CASE("universal code length is monotone over 1..10000") {
  double previous = universal_code_length(1);
  for (long k = 2; k <= 10000; ++k) {
    const double value = universal_code_length(k);
    CHECK(value >= previous);
    previous = value;
  }
}

TEST_CASE("universal code length rejects k below 1") {
  CHECK_THROWS_AS(universal_code_length(0), InvalidInput);
  CHECK_THROWS_AS(universal_code_length(-3), InvalidInput);
}

TEST_CASE("component parameter count matches the derived values") {
  CHECK(component_param_count(2, 1) == doctest::Approx(7.05267).epsilon(1e-4));
  CHECK(component_param_count(100, 1) ==
        doctest::Approx(300.0 + 1.05267).epsilon(1e-4));
}

TEST_CASE("component parameter count grows strictly with the factor count") {
  for (int p = 1; p < 8; ++p) {
    CHECK(component_param_count(10, p + 1) > component_param_count(10, p));
  }
}

TEST_CASE("component parameter count rejects out-of-range factor counts") {
  CHECK_THROWS_AS(component_param_count(4, 0), InvalidInput);
  CHECK_THROWS_AS(component_param_count(4, 4), InvalidInput);
}

TEST_CASE("annihilation threshold is half the parameter count") {
  CHECK(annihilation_threshold(2, 1) == doctest::Approx(3.5263).epsilon(1e-4));
  CHECK(annihilation_threshold(100, 1) == doctest::Approx(150.53).epsilon(1e-4));
  CHECK(annihilation_threshold(6, 3) > annihilation_threshold(6, 2));
}

TEST_CASE("single-component message length reduces to the closed form") {
  Rng rng(81);
  MixtureModel model = oracle::random_model(rng, 4, 1);
  const Dataset data = oracle::random_dataset(rng, 60, 4);
  const double log_likelihood = mixture_log_likelihood(model, data);
  const CodeLengthReport report = message_length(model, data);

  const double n = 60.0;
  const double cost = component_param_count(4, model.components[0].factors());
  const double expected = 0.5 * cost * std::log(n / 12.0) + 0.5 * std::log(n / 12.0) +
                          0.5 * (cost + 1.0) - log_likelihood +
                          universal_code_length(1) +
                          universal_code_length(model.components[0].factors());
  CHECK(report.total == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("identical candidate models get identical totals") {
  Rng rng(83);
  const MixtureModel model = oracle::random_model(rng, 3, 2);
  const Dataset data = oracle::random_dataset(rng, 50, 3);
  CHECK(message_length(model, data).total == message_length(model, data).total);
}

TEST_CASE("report components add up to the total") {
  Rng rng(87);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 2 + static_cast<int>(rng.below(4));
    const MixtureModel model = oracle::random_model(rng, d, 1 + static_cast<int>(rng.below(3)));
    const Dataset data = oracle::random_dataset(rng, 40, d);
    const CodeLengthReport report = message_length(model, data);
    CHECK(report.total ==
          doctest::Approx(report.param_cost + report.integer_cost +
                          report.neg_log_likelihood)
              .epsilon(1e-9));
    CHECK(report.per_component_C.minCoeff() > 0.0);
    CHECK(std::isfinite(report.total));
  }
}

TEST_CASE("higher log-likelihood strictly lowers the message length") {
  Rng rng(89);
  const MixtureModel model = oracle::random_model(rng, 3, 2);
  const CodeLengthReport low = message_length_given(model, 100, -500.0);
  const CodeLengthReport high = message_length_given(model, 100, -400.0);
  CHECK(high.total < low.total);
  CHECK(low.total - high.total == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("zero-weight components contribute nothing") {
  Rng rng(91);
  MixtureModel model = oracle::random_model(rng, 3, 3);
  MixtureModel reduced = model;
  reduced.components[2].weight = 0.0;
  const double moved = model.components[2].weight;
  reduced.components[0].weight += moved;

  MixtureModel two_only = reduced;
  two_only.components.pop_back();
  CHECK(message_length_given(reduced, 200, -700.0).total ==
        doctest::Approx(message_length_given(two_only, 200, -700.0).total)
            .epsilon(1e-12));
}

TEST_CASE("non-positive component support is an error") {
  Rng rng(93);
  const MixtureModel model = oracle::random_model(rng, 3, 2);
  CHECK_THROWS_AS(message_length_given(model, 0, -10.0), NumericError);
}

TEST_CASE("the three-component fit of the aligned-Gaussians data wins on DL") {
  const Dataset data = sample_mixture(example1_spec(900, 5));
  auto [model, trace] = amofa_fit(data);
  REQUIRE(!trace.steps.empty());

  const FitStep& best = trace.steps[trace.selected_index];
  CHECK(best.components == 3);
  for (const FitStep& step : trace.steps) {
    if (step.components == 2 || step.components == 4 || step.components == 1) {
      CHECK(best.message_length < step.message_length);
    }
  }
}

TEST_SUITE_END();
