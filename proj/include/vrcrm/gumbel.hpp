#pragma once

#include <cmath>
#include <stdexcept>

#include "vrcrm/rng.hpp"
#include "vrcrm/tensor.hpp"

namespace vrcrm {

struct GumbelConfig {
  double temperature = 1.0;
  bool hard = false;  // straight-through one-hot instead of relaxed sample
};

// One Gumbel-softmax draw per row, with everything backward needs retained.
// `value` is what downstream consumers see (one-hot in hard mode); `soft`
// is the relaxed sample the gradient flows through.
struct GumbelSample {
  Tensor2 value;
  Tensor2 soft;
};

inline GumbelSample gumbel_softmax(const Tensor2& log_probs, const GumbelConfig& cfg,
                                   Rng& rng) {
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  GumbelSample s;
  s.soft = Tensor2(log_probs.rows, log_probs.cols);
  for (std::size_t r = 0; r < log_probs.rows; ++r) {
    const double* lp = log_probs.row(r);
    double* y = s.soft.row(r);
    double mx = -1e300;
    for (std::size_t c = 0; c < log_probs.cols; ++c) {
      y[c] = (lp[c] + rng.gumbel()) / cfg.temperature;
      mx = std::max(mx, y[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < log_probs.cols; ++c) {
      y[c] = std::exp(y[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < log_probs.cols; ++c) y[c] /= sum;
  }
  if (cfg.hard) {
    s.value = Tensor2(log_probs.rows, log_probs.cols);
    for (std::size_t r = 0; r < log_probs.rows; ++r) {
      const double* y = s.soft.row(r);
      std::size_t best = 0;
      for (std::size_t c = 1; c < log_probs.cols; ++c)
        if (y[c] > y[best]) best = c;
      s.value.at(r, best) = 1.0;
    }
  } else {
    s.value = s.soft;
  }
  return s;
}

inline Tensor2 gumbel_softmax_sample(const Tensor2& log_probs, const GumbelConfig& cfg,
                                     Rng& rng) {
  return gumbel_softmax(log_probs, cfg, rng).value;
}

// dLoss/dlog_probs given dLoss/dsample. Hard mode is straight-through:
// the upstream gradient is routed through the relaxed sample unchanged.
inline Tensor2 gumbel_softmax_backward(const GumbelSample& s, const Tensor2& upstream,
                                       const GumbelConfig& cfg) {
  Tensor2 out(s.soft.rows, s.soft.cols);
  for (std::size_t r = 0; r < s.soft.rows; ++r) {
    const double* y = s.soft.row(r);
    const double* g = upstream.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < s.soft.cols; ++c) dot += g[c] * y[c];
    for (std::size_t c = 0; c < s.soft.cols; ++c)
      out.at(r, c) = y[c] * (g[c] - dot) / cfg.temperature;
  }
  return out;
}

}  // namespace vrcrm
