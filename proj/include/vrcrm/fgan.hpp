#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vrcrm/adam.hpp"
#include "vrcrm/bandit_env.hpp"
#include "vrcrm/estimators.hpp"
#include "vrcrm/gumbel.hpp"
#include "vrcrm/policy.hpp"

namespace vrcrm {

// f(u) = u^2 with conjugate f*(s) = s^2/4. The variational supremum under
// this pair equals the chi-square-style divergence E[sum pi^2/pi0] with no
// offset, matching the exact divergence's equality case d(pi||pi) = 1.
struct FDivergenceSpec {
  static constexpr const char* generator_name = "pearson_like";
  static double f(double u) { return u * u; }
  static double conjugate(double s) { return s * s / 4.0; }
  static double conjugate_derivative(double s) { return s / 2.0; }
};

// Witness network T(x, y): context concatenated with an action vector,
// one ReLU hidden layer of floor((d + 2K)/2) nodes, unconstrained scalar
// output (the conjugate domain is all reals).
struct Discriminator {
  Network net;
  int context_dim = 0;
  int n_actions = 0;
};

inline Discriminator make_discriminator(int context_dim, int n_actions, std::uint64_t seed) {
  const int in = context_dim + n_actions;
  const int hidden = (context_dim + 2 * n_actions) / 2;
  Discriminator d;
  d.net = make_network({{LayerKind::dense, in, hidden},
                        {LayerKind::relu, hidden, hidden},
                        {LayerKind::dense, hidden, 1}});
  d.context_dim = context_dim;
  d.n_actions = n_actions;
  Rng rng(seed);
  init_parameters(d.net, rng);
  return d;
}

struct FganState {
  Discriminator discriminator;
  AdamState disc_optimizer;
  AdamState gen_optimizer;
  GumbelConfig gumbel;
  bool leak_bug_mode = false;  // reuse the IPS optimizer for policy updates
};

inline FganState make_fgan_state(int context_dim, int n_actions, double disc_lr,
                                 double gen_lr, std::uint64_t seed,
                                 GumbelConfig gumbel = {}, bool leak_bug_mode = false) {
  FganState s;
  s.discriminator = make_discriminator(context_dim, n_actions, seed);
  s.disc_optimizer = make_adam(s.discriminator.net.param_count(), disc_lr);
  s.gen_optimizer = make_adam(0, gen_lr);  // sized lazily to the policy
  s.gumbel = gumbel;
  s.leak_bug_mode = leak_bug_mode;
  return s;
}

namespace detail {

inline Tensor2 concat_columns(const Tensor2& a, const Tensor2& b) {
  require(a.rows == b.rows, "concat_columns: row mismatch");
  Tensor2 out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* o = out.row(r);
    const double* pa = a.row(r);
    const double* pb = b.row(r);
    for (std::size_t c = 0; c < a.cols; ++c) o[c] = pa[c];
    for (std::size_t c = 0; c < b.cols; ++c) o[a.cols + c] = pb[c];
  }
  return out;
}

inline Tensor2 one_hot_actions(const std::vector<int>& actions, int n_actions) {
  Tensor2 out(actions.size(), static_cast<std::size_t>(n_actions));
  for (std::size_t i = 0; i < actions.size(); ++i) out.at(i, actions[i]) = 1.0;
  return out;
}

inline Tensor2 log_of(const Tensor2& probs) {
  Tensor2 out(probs.rows, probs.cols);
  for (std::size_t k = 0; k < probs.values.size(); ++k)
    out.values[k] = std::log(std::max(probs.values[k], 1e-300));
  return out;
}

}  // namespace detail

// Sample estimate of the variational bound
//   E_{x,y ~ h}[T(x,y)] - E_{x,y ~ h0}[f*(T(x,y))],
// with the first expectation over Gumbel-softmax samples from the policy
// on the batch's contexts and the second over the logged (x, a) pairs.
inline double lower_bound(SoftmaxPolicy& policy, Discriminator& discriminator,
                          const LoggedDataset& data, const GumbelConfig& gumbel, Rng& rng) {
  require(data.size() >= 1, "lower_bound: empty batch");
  const Tensor2 probs = policy_probs(policy, data.contexts);
  const GumbelSample sample = gumbel_softmax(detail::log_of(probs), gumbel, rng);
  const Tensor2 batch1 = detail::concat_columns(data.contexts, sample.value);
  const Tensor2 batch0 = detail::concat_columns(
      data.contexts, detail::one_hot_actions(data.actions, policy.n_actions));
  const Tensor2 t1 = forward(discriminator.net, batch1);
  const Tensor2 t0 = forward(discriminator.net, batch0);
  double bound = 0.0;
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(t1.at(i, 0)) || !std::isfinite(t0.at(i, 0)))
      throw std::runtime_error("lower_bound: non-finite discriminator output");
    bound += (t1.at(i, 0) - FDivergenceSpec::conjugate(t0.at(i, 0))) * inv_n;
  }
  return bound;
}

// Exactly-enumerated bound on a finite context set with one-hot actions:
//   (1/|X|) sum_x sum_a [pi_theta(a|x) T(x,e_a) - pi_0(a|x) f*(T(x,e_a))].
// Test oracle for the lower-bound property against exact_divergence.
inline double enumerated_lower_bound(SoftmaxPolicy& policy, Discriminator& discriminator,
                                     const SyntheticEnvironment& env,
                                     const Tensor2& contexts) {
  require(contexts.rows >= 1, "enumerated_lower_bound: empty context set");
  const Tensor2 probs = policy_probs(policy, contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, contexts);
  double total = 0.0;
  for (std::size_t r = 0; r < contexts.rows; ++r) {
    for (int a = 0; a < env.n_actions; ++a) {
      Tensor2 input(1, contexts.cols + env.n_actions);
      for (std::size_t c = 0; c < contexts.cols; ++c) input.at(0, c) = contexts.at(r, c);
      input.at(0, contexts.cols + a) = 1.0;
      const double t = forward(discriminator.net, input).at(0, 0);
      total += probs.at(r, a) * t - pi0.at(r, a) * FDivergenceSpec::conjugate(t);
    }
  }
  return total / static_cast<double>(contexts.rows);
}

// Plugs the analytic optimal witness T(x,a) = 2 pi_theta(a|x) / pi_0(a|x)
// into the exact bound; equals exact_divergence by construction.
inline double optimal_witness_value(SoftmaxPolicy& policy, const SyntheticEnvironment& env,
                                    const Tensor2& contexts) {
  require(contexts.rows >= 1, "optimal_witness_value: empty context set");
  const Tensor2 probs = policy_probs(policy, contexts);
  const Tensor2 pi0 = logging_prob_matrix(env, contexts);
  double total = 0.0;
  for (std::size_t r = 0; r < contexts.rows; ++r)
    for (int a = 0; a < env.n_actions; ++a) {
      const double p0 = pi0.at(r, a);
      if (!(p0 > 0.0)) throw std::runtime_error("optimal_witness_value: zero logging prob");
      const double t = 2.0 * probs.at(r, a) / p0;
      total += probs.at(r, a) * t - p0 * FDivergenceSpec::conjugate(t);
    }
  return total / static_cast<double>(contexts.rows);
}

// One adversarial round: ascend the discriminator on the bound, then
// descend the policy through the Gumbel-softmax path. Returns the bound
// estimated after both updates. When leak_bug_mode is set and an IPS
// optimizer is supplied, the policy half-step reuses that optimizer,
// replicating the published implementation's leak.
inline double fgan_step(FganState& state, SoftmaxPolicy& policy, const LoggedDataset& data,
                        Rng& rng, AdamState* ips_optimizer = nullptr) {
  require(data.size() >= 1, "fgan_step: empty batch");
  const std::size_t n = data.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  Network& dnet = state.discriminator.net;

  if (state.gen_optimizer.first_moments.size() != policy.net.param_count()) {
    const double lr = state.gen_optimizer.learning_rate;
    state.gen_optimizer = make_adam(policy.net.param_count(), lr);
  }

  // policy sample path
  const Tensor2 probs = forward(policy.net, data.contexts);
  const GumbelSample sample = gumbel_softmax(detail::log_of(probs), state.gumbel, rng);
  const Tensor2 batch1 = detail::concat_columns(data.contexts, sample.value);
  const Tensor2 batch0 = detail::concat_columns(
      data.contexts, detail::one_hot_actions(data.actions, policy.n_actions));

  // discriminator ascent
  const Tensor2 t1 = forward(dnet, batch1);
  Tensor2 up1(n, 1);
  for (std::size_t i = 0; i < n; ++i) up1.at(i, 0) = inv_n;
  std::vector<double> disc_grads = backward(dnet, up1);

  const Tensor2 t0 = forward(dnet, batch0);
  Tensor2 up0(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    up0.at(i, 0) = -FDivergenceSpec::conjugate_derivative(t0.at(i, 0)) * inv_n;
  const std::vector<double> g0 = backward(dnet, up0);
  for (std::size_t k = 0; k < disc_grads.size(); ++k) {
    disc_grads[k] += g0[k];
    disc_grads[k] = -disc_grads[k];  // Adam minimizes; the witness maximizes
  }
  adam_step(state.disc_optimizer, dnet, disc_grads);

  // policy descent on the first term under the updated discriminator
  forward(dnet, batch1);
  Tensor2 input_grad;
  backward(dnet, up1, &input_grad);
  Tensor2 dsample(n, static_cast<std::size_t>(policy.n_actions));
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < policy.n_actions; ++a)
      dsample.at(i, a) = input_grad.at(i, data.contexts.cols + a);
  const Tensor2 dlogp = gumbel_softmax_backward(sample, dsample, state.gumbel);
  Tensor2 dprobs(n, static_cast<std::size_t>(policy.n_actions));
  for (std::size_t k = 0; k < dprobs.values.size(); ++k)
    dprobs.values[k] = dlogp.values[k] / std::max(probs.values[k], 1e-300);
  const std::vector<double> policy_grads = backward(policy.net, dprobs);
  AdamState& policy_opt = (state.leak_bug_mode && ips_optimizer != nullptr)
                              ? *ips_optimizer
                              : state.gen_optimizer;
  adam_step(policy_opt, policy.net, policy_grads);

  return lower_bound(policy, state.discriminator, data, state.gumbel, rng);
}

}  // namespace vrcrm
