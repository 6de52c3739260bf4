#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vrcrm/network.hpp"

namespace vrcrm {

struct AdamState {
  std::int64_t step = 0;
  std::vector<double> first_moments;
  std::vector<double> second_moments;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam(std::size_t param_count, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moments.assign(param_count, 0.0);
  s.second_moments.assign(param_count, 0.0);
  return s;
}

// One bias-corrected Adam update in place.
inline void adam_step(AdamState& state, Network& net, const std::vector<double>& gradients) {
  if (gradients.size() != net.parameters.size() ||
      state.first_moments.size() != net.parameters.size())
    throw std::invalid_argument("adam_step: gradient/moment length mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    const double g = gradients[i];
    state.first_moments[i] = state.beta1 * state.first_moments[i] + (1.0 - state.beta1) * g;
    state.second_moments[i] =
        state.beta2 * state.second_moments[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.first_moments[i] / bc1;
    const double vhat = state.second_moments[i] / bc2;
    net.parameters[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace vrcrm
