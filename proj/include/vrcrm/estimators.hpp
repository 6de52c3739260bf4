#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrcrm/bandit_env.hpp"
#include "vrcrm/policy.hpp"
#include "vrcrm/tensor.hpp"

namespace vrcrm {

enum class Regularizer { none, direct, fgan, poem_variance };

inline double compute_lambda(double loss_bound, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("compute_lambda: confidence must lie in (0,1)");
  if (!(loss_bound > 0.0))
    throw std::invalid_argument("compute_lambda: loss bound must be positive");
  return std::sqrt(2.0 * loss_bound * std::log(1.0 / confidence));
}

struct ObjectiveConfig {
  double loss_bound = 1.0;       // L: |delta| <= 1 for binary rewards
  double confidence = 0.5;       // phi
  double lambda = -1.0;          // < 0 means derive from L and phi
  double divergence_threshold = 0.0;  // t: 0 disables the VRCRM inner stop
  std::optional<double> divergence_bound;  // M: assumption bookkeeping only
  Regularizer regularizer = Regularizer::none;

  double effective_lambda() const {
    return lambda >= 0.0 ? lambda : compute_lambda(loss_bound, confidence);
  }
};

struct PolicyEvaluation {
  double ips_value = 0.0;
  double divergence_estimate = 0.0;
  double variance_estimate = 0.0;
  double objective_value = 0.0;
  std::size_t batch_size = 0;
};

inline nlohmann::json policy_evaluation_to_json(const PolicyEvaluation& e) {
  return {{"ips", e.ips_value},
          {"divergence", e.divergence_estimate},
          {"variance", e.variance_estimate},
          {"objective", e.objective_value},
          {"n", e.batch_size}};
}

namespace detail {

// A differentiable scalar head: its value plus the gradient with respect
// to the policy's action probabilities. Chaining dprobs through
// backward(policy.net, ...) yields parameter gradients.
struct Head {
  double value = 0.0;
  Tensor2 dprobs;
};

// Loss convention: delta = -reward, so minimizing maximizes reward.
inline Head ips_head(const Tensor2& probs, const LoggedDataset& data) {
  const std::size_t n = data.size();
  require(probs.rows == n, "ips_head: probs/data size mismatch");
  Head h;
  h.dprobs = Tensor2(probs.rows, probs.cols);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p0 = data.propensities[i];
    if (!(p0 > 0.0)) throw std::runtime_error("ips: zero logging propensity");
    const double delta = -data.rewards[i];
    const int a = data.actions[i];
    const double w = probs.at(i, a) / p0;
    if (!std::isfinite(w)) throw std::runtime_error("ips: non-finite importance weight");
    h.value += w * delta * inv_n;
    h.dprobs.at(i, a) = delta / p0 * inv_n;
  }
  return h;
}

// Eq-5-style sample divergence: (1/N) sum_i sum_a probs^2 / pi0.
inline Head direct_divergence_head(const Tensor2& probs, const Tensor2& logging_probs) {
  require(probs.same_shape(logging_probs), "direct_divergence_head: shape mismatch");
  Head h;
  h.dprobs = Tensor2(probs.rows, probs.cols);
  const double inv_n = 1.0 / static_cast<double>(probs.rows);
  for (std::size_t k = 0; k < probs.values.size(); ++k) {
    const double p0 = logging_probs.values[k];
    if (!(p0 > 0.0)) throw std::runtime_error("divergence: zero logging probability");
    h.value += probs.values[k] * probs.values[k] / p0 * inv_n;
    h.dprobs.values[k] = 2.0 * probs.values[k] / p0 * inv_n;
  }
  return h;
}

// Unbiased sample variance of the weighted losses w_i * delta_i.
inline Head poem_variance_head(const Tensor2& probs, const LoggedDataset& data) {
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("poem variance: need at least 2 samples");
  std::vector<double> v(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = probs.at(i, data.actions[i]) / data.propensities[i] * (-data.rewards[i]);
    mean += v[i];
  }
  mean /= static_cast<double>(n);
  Head h;
  h.dprobs = Tensor2(probs.rows, probs.cols);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - mean;
    h.value += d * d;
    h.dprobs.at(i, data.actions[i]) =
        2.0 * d / static_cast<double>(n - 1) * (-data.rewards[i]) / data.propensities[i];
  }
  h.value /= static_cast<double>(n - 1);
  return h;
}

}  // namespace detail

// Chain a dprobs head gradient through the policy network. Assumes the
// matching forward pass is still cached in the network.
inline std::vector<double> policy_parameter_gradient(SoftmaxPolicy& policy,
                                                     const Tensor2& dprobs) {
  return backward(policy.net, dprobs);
}

// Eq. 1, with delta = -reward.
inline double estimate_ips(SoftmaxPolicy& policy, const LoggedDataset& data) {
  const Tensor2 probs = policy_probs(policy, data.contexts);
  return detail::ips_head(probs, data).value;
}

// Closed-form divergence over an explicit context set:
// mean_x sum_a pi_theta(a|x)^2 / pi_0(a|x). Always >= 1.
inline double exact_divergence(SoftmaxPolicy& policy, const SyntheticEnvironment& env,
                               const Tensor2& contexts) {
  require(contexts.rows >= 1, "exact_divergence: empty context set");
  const Tensor2 probs = policy_probs(policy, contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, contexts);
  return detail::direct_divergence_head(probs, pi0).value;
}

// Eq. 5: same summand averaged over the dataset's logged contexts. The
// synthetic logging policy is known, so the full pi_0 row comes from env.
inline double estimate_divergence_direct(SoftmaxPolicy& policy, const LoggedDataset& data,
                                         const SyntheticEnvironment& env) {
  const Tensor2 probs = policy_probs(policy, data.contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, data.contexts);
  return detail::direct_divergence_head(probs, pi0).value;
}

// Eq. 3 assembled from precomputed pieces.
inline double vrcrm_objective(double ips, double divergence, std::size_t n,
                              const ObjectiveConfig& cfg) {
  if (divergence < -1e-9) throw std::runtime_error("vrcrm_objective: negative divergence");
  require(n >= 1, "vrcrm_objective: need n >= 1");
  const double d = std::max(divergence, 0.0);
  return ips + cfg.effective_lambda() * std::sqrt(d / static_cast<double>(n));
}

// Eq. 6 as one differentiable scalar over the batch.
inline detail::Head direct_objective_head(const Tensor2& probs, const LoggedDataset& data,
                                          const Tensor2& logging_probs,
                                          const ObjectiveConfig& cfg) {
  detail::Head h = detail::ips_head(probs, data);
  const double lambda = cfg.effective_lambda();
  if (lambda == 0.0) return h;
  const detail::Head div = detail::direct_divergence_head(probs, logging_probs);
  const double n = static_cast<double>(data.size());
  const double d = std::max(div.value, 0.0);
  h.value += lambda * std::sqrt(d / n);
  // d/dd of lambda*sqrt(d/n) = lambda / (2 sqrt(d n)); d >= 1 per row by
  // Cauchy-Schwarz so the denominator is safe
  const double scale = lambda / (2.0 * std::sqrt(std::max(d * n, 1e-300)));
  for (std::size_t k = 0; k < h.dprobs.values.size(); ++k)
    h.dprobs.values[k] += scale * div.dprobs.values[k];
  return h;
}

inline double direct_objective(SoftmaxPolicy& policy, const LoggedDataset& data,
                               const SyntheticEnvironment& env, const ObjectiveConfig& cfg) {
  const Tensor2 probs = policy_probs(policy, data.contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, data.contexts);
  return direct_objective_head(probs, data, pi0, cfg).value;
}

inline double poem_variance_penalty(SoftmaxPolicy& policy, const LoggedDataset& data) {
  const Tensor2 probs = policy_probs(policy, data.contexts);
  return detail::poem_variance_head(probs, data).value;
}

// POEM objective: ips + lambda_poem * sqrt(variance / n).
inline detail::Head poem_objective_head(const Tensor2& probs, const LoggedDataset& data,
                                        double poem_lambda) {
  detail::Head h = detail::ips_head(probs, data);
  if (poem_lambda == 0.0) return h;
  const detail::Head var = detail::poem_variance_head(probs, data);
  const double n = static_cast<double>(data.size());
  const double v = std::max(var.value, 0.0);
  h.value += poem_lambda * std::sqrt(v / n);
  const double scale = poem_lambda / (2.0 * std::sqrt(std::max(v * n, 1e-12)));
  for (std::size_t k = 0; k < h.dprobs.values.size(); ++k)
    h.dprobs.values[k] += scale * var.dprobs.values[k];
  return h;
}

inline PolicyEvaluation evaluate_objectives(SoftmaxPolicy& policy, const LoggedDataset& data,
                                            const SyntheticEnvironment& env,
                                            const ObjectiveConfig& cfg) {
  const Tensor2 probs = policy_probs(policy, data.contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, data.contexts);
  PolicyEvaluation e;
  e.batch_size = data.size();
  e.ips_value = detail::ips_head(probs, data).value;
  e.divergence_estimate = detail::direct_divergence_head(probs, pi0).value;
  e.variance_estimate =
      data.size() >= 2 ? detail::poem_variance_head(probs, data).value : 0.0;
  e.objective_value = vrcrm_objective(e.ips_value, e.divergence_estimate, e.batch_size, cfg);
  return e;
}

}  // namespace vrcrm
