#include "amofa/mml.hpp"

#include <cmath>
#include <sstream>

#include "amofa/gaussian.hpp"

namespace amofa {

double universal_code_length(long k) {
  if (k < 1) throw InvalidInput("universal_code_length needs k >= 1");
  double sum = 0.0;
  double term = std::log(static_cast<double>(k));
  while (term > 0.0) {
    sum += term;
    term = std::log(term);
  }
  return sum + std::log(kRissanenC);
}

double component_param_count(int d, int p_k) {
  if (p_k < 1 || p_k > d - 1) {
    std::ostringstream msg;
    msg << "factor count " << p_k << " outside [1, " << d - 1 << "]";
    throw InvalidInput(msg.str());
  }
  return static_cast<double>(d) * (p_k + 2) + universal_code_length(p_k);
}

double annihilation_threshold(int d, int p_k) {
  return component_param_count(d, p_k) / 2.0;
}

CodeLengthReport message_length_given(const MixtureModel& model, Eigen::Index n,
                                      double log_likelihood) {
  const double n_real = static_cast<double>(n);
  int retained = 0;
  for (const auto& comp : model.components) {
    if (comp.weight > 0.0) ++retained;
  }
  if (retained == 0) throw InvalidInput("no retained components");

  CodeLengthReport report;
  report.per_component_C.resize(retained);
  double param_cost = 0.0;
  double integer_cost = universal_code_length(retained);
  int slot = 0;
  for (const auto& comp : model.components) {
    if (comp.weight <= 0.0) continue;  // annihilated components cost nothing
    const double support = n_real * comp.weight;
    if (!(support > 0.0)) {
      throw NumericError("retained component has non-positive N*pi");
    }
    const double cost = component_param_count(model.dim, comp.factors());
    report.per_component_C(slot++) = cost;
    param_cost += 0.5 * cost * std::log(support / 12.0) + 0.5 * (cost + 1.0);
    integer_cost += universal_code_length(comp.factors());
  }
  param_cost += 0.5 * retained * std::log(n_real / 12.0);

  report.param_cost = param_cost;
  report.integer_cost = integer_cost;
  report.neg_log_likelihood = -log_likelihood;
  report.total = param_cost + integer_cost + report.neg_log_likelihood;
  return report;
}

CodeLengthReport message_length(const MixtureModel& model, const Dataset& data) {
  MixtureModel retained;
  retained.dim = model.dim;
  for (const auto& comp : model.components) {
    if (comp.weight > 0.0) retained.components.push_back(comp);
  }
  if (retained.components.empty()) throw InvalidInput("no retained components");
  const double log_likelihood = mixture_log_likelihood(retained, data);
  return message_length_given(model, data.size(), log_likelihood);
}

}  // namespace amofa
