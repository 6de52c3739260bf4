#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrcrm/adam.hpp"
#include "vrcrm/bandit_env.hpp"
#include "vrcrm/estimators.hpp"
#include "vrcrm/fgan.hpp"
#include "vrcrm/policy.hpp"

namespace vrcrm {

enum class Method {
  ips,
  direct,
  poem,
  vrcrm,
  divergence_only_fgan,
  divergence_only_direct,
  untrained
};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ips: return "ips";
    case Method::direct: return "direct";
    case Method::poem: return "poem";
    case Method::vrcrm: return "vrcrm";
    case Method::divergence_only_fgan: return "divergence_only_fgan";
    case Method::divergence_only_direct: return "divergence_only_direct";
    case Method::untrained: return "untrained";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "ips") return Method::ips;
  if (s == "direct") return Method::direct;
  if (s == "poem") return Method::poem;
  if (s == "vrcrm") return Method::vrcrm;
  if (s == "divergence_only_fgan") return Method::divergence_only_fgan;
  if (s == "divergence_only_direct") return Method::divergence_only_direct;
  if (s == "untrained") return Method::untrained;
  throw std::invalid_argument("unknown method: " + s);
}

struct TrainConfig {
  Method method = Method::ips;
  int epochs = 100;
  int fgan_epochs = 10;       // inner f-GAN iteration budget per batch
  std::size_t batch_size = 10000;
  double lr_ips = -1.0;       // < 0: 0.001 for vrcrm, 0.01 otherwise
  double lr_fgan = 0.01;
  ObjectiveConfig objective;
  double poem_lambda = 1e-3;
  GumbelConfig gumbel;
  bool leak_bug_mode = false;
  std::uint64_t seed = 0;
  std::string architecture = "synthetic_1x15";

  double resolved_lr_ips() const {
    if (lr_ips >= 0.0) return lr_ips;
    return method == Method::vrcrm ? 0.001 : 0.01;
  }
};

struct EpochRecord {
  double ips = 0.0;
  double divergence = 0.0;
  double objective = 0.0;
  double fgan_bound = std::numeric_limits<double>::quiet_NaN();
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  SoftmaxPolicy policy;
  TrainTrace trace;
};

inline void save_trace_csv(const TrainTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,ips,divergence,objective,fgan_bound\n";
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    const EpochRecord& r = trace.epochs[e];
    out << e << "," << format_real(r.ips) << "," << format_real(r.divergence) << ","
        << format_real(r.objective) << ","
        << (std::isnan(r.fgan_bound) ? std::string() : format_real(r.fgan_bound)) << "\n";
  }
}

namespace detail {

inline LoggedDataset gather_batch(const LoggedDataset& data, const std::vector<std::size_t>& idx,
                                  std::size_t begin, std::size_t end) {
  LoggedDataset b;
  const std::size_t n = end - begin;
  b.contexts = Tensor2(n, data.contexts.cols);
  b.actions.resize(n);
  b.propensities.resize(n);
  b.rewards.resize(n);
  b.environment_tag = data.environment_tag;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = idx[begin + k];
    for (std::size_t c = 0; c < data.contexts.cols; ++c)
      b.contexts.at(k, c) = data.contexts.at(i, c);
    b.actions[k] = data.actions[i];
    b.propensities[k] = data.propensities[i];
    b.rewards[k] = data.rewards[i];
  }
  return b;
}

inline Tensor2 gather_rows(const Tensor2& m, const std::vector<std::size_t>& idx,
                           std::size_t begin, std::size_t end) {
  Tensor2 out(end - begin, m.cols);
  for (std::size_t k = 0; k < end - begin; ++k)
    for (std::size_t c = 0; c < m.cols; ++c) out.at(k, c) = m.at(idx[begin + k], c);
  return out;
}

// Divergence-only head: lambda * sqrt(d_hat / n), no IPS term.
inline Head divergence_penalty_head(const Tensor2& probs, const Tensor2& logging_probs,
                                    double lambda) {
  Head div = direct_divergence_head(probs, logging_probs);
  const double n = static_cast<double>(probs.rows);
  const double d = std::max(div.value, 0.0);
  Head h;
  h.value = lambda * std::sqrt(d / n);
  const double scale = lambda / (2.0 * std::sqrt(std::max(d * n, 1e-300)));
  h.dprobs = Tensor2(probs.rows, probs.cols);
  for (std::size_t k = 0; k < h.dprobs.values.size(); ++k)
    h.dprobs.values[k] = scale * div.dprobs.values[k];
  return h;
}

}  // namespace detail

// Trains `policy` on the split's training data. One generic minibatch loop
// hosts every method so that degenerate configurations (lambda 0, f-GAN
// disabled) coincide bit-exactly with plain IPS training. Epoch metrics are
// computed in eval mode on a fixed prefix of the training split (at most
// 10k rows) so tracing never perturbs the parameter trajectory.
inline TrainResult train(SoftmaxPolicy policy, const SyntheticEnvironment& env,
                         const DatasetSplit& data, const TrainConfig& cfg) {
  require(cfg.epochs >= 0 && cfg.fgan_epochs >= 0, "train: negative epoch counts");
  require(cfg.batch_size >= 1, "train: batch_size must be positive");

  TrainResult result{std::move(policy), {}};
  if (cfg.method == Method::untrained || cfg.epochs == 0) return result;

  const LoggedDataset& tr = data.train;
  const std::size_t n = tr.size();
  require(n >= 1, "train: empty training split");

  const Tensor2 pi0_full = logging_prob_matrix(env, tr.contexts);
  const std::size_t n_metric = std::min<std::size_t>(n, 10000);
  std::vector<std::size_t> metric_idx(n_metric);
  for (std::size_t i = 0; i < n_metric; ++i) metric_idx[i] = i;
  const LoggedDataset metric_batch = detail::gather_batch(tr, metric_idx, 0, n_metric);
  const Tensor2 metric_pi0 = detail::gather_rows(pi0_full, metric_idx, 0, n_metric);

  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  Rng noise_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);

  AdamState ips_opt = make_adam(result.policy.net.param_count(), cfg.resolved_lr_ips());
  FganState fgan;
  const bool needs_fgan =
      cfg.method == Method::vrcrm || cfg.method == Method::divergence_only_fgan;
  if (needs_fgan) {
    fgan = make_fgan_state(env.context_dim, env.n_actions, cfg.lr_fgan, cfg.lr_fgan,
                           cfg.seed ^ 0xa0761d6478bd642full, cfg.gumbel, cfg.leak_bug_mode);
    fgan.gen_optimizer = make_adam(result.policy.net.param_count(), cfg.lr_fgan);
  }
  const double lambda = cfg.objective.effective_lambda();

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(perm);
    result.policy.net.train_mode = true;
    double last_bound = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const LoggedDataset batch = detail::gather_batch(tr, perm, begin, end);

      switch (cfg.method) {
        case Method::ips: {
          const Tensor2 probs = forward(result.policy.net, batch.contexts);
          const detail::Head h = detail::ips_head(probs, batch);
          adam_step(ips_opt, result.policy.net, backward(result.policy.net, h.dprobs));
          break;
        }
        case Method::direct: {
          const Tensor2 pi0 = detail::gather_rows(pi0_full, perm, begin, end);
          const Tensor2 probs = forward(result.policy.net, batch.contexts);
          const detail::Head h = direct_objective_head(probs, batch, pi0, cfg.objective);
          adam_step(ips_opt, result.policy.net, backward(result.policy.net, h.dprobs));
          break;
        }
        case Method::poem: {
          const Tensor2 probs = forward(result.policy.net, batch.contexts);
          const detail::Head h = poem_objective_head(probs, batch, cfg.poem_lambda);
          adam_step(ips_opt, result.policy.net, backward(result.policy.net, h.dprobs));
          break;
        }
        case Method::divergence_only_direct: {
          const Tensor2 pi0 = detail::gather_rows(pi0_full, perm, begin, end);
          const Tensor2 probs = forward(result.policy.net, batch.contexts);
          const detail::Head h = detail::divergence_penalty_head(probs, pi0, lambda);
          adam_step(ips_opt, result.policy.net, backward(result.policy.net, h.dprobs));
          break;
        }
        case Method::divergence_only_fgan: {
          last_bound = fgan_step(fgan, result.policy, batch, noise_rng);
          break;
        }
        case Method::vrcrm: {
          const Tensor2 probs = forward(result.policy.net, batch.contexts);
          const detail::Head h = detail::ips_head(probs, batch);
          adam_step(ips_opt, result.policy.net, backward(result.policy.net, h.dprobs));
          const Tensor2 pi0 = detail::gather_rows(pi0_full, perm, begin, end);
          const double t = cfg.objective.divergence_threshold;
          for (int k = 0; k < cfg.fgan_epochs; ++k) {
            if (t > 0.0) {
              const Tensor2 p = forward(result.policy.net, batch.contexts);
              const double d = detail::direct_divergence_head(p, pi0).value;
              if (d < t / static_cast<double>(batch.size())) break;
            }
            last_bound = fgan_step(fgan, result.policy, batch, noise_rng,
                                   cfg.leak_bug_mode ? &ips_opt : nullptr);
          }
          break;
        }
        case Method::untrained:
          break;
      }
    }

    // epoch metrics, eval mode, fixed subsample
    result.policy.net.train_mode = false;
    const Tensor2 probs = forward(result.policy.net, metric_batch.contexts);
    EpochRecord rec;
    rec.ips = detail::ips_head(probs, metric_batch).value;
    rec.divergence = detail::direct_divergence_head(probs, metric_pi0).value;
    switch (cfg.method) {
      case Method::ips:
        rec.objective = rec.ips;
        break;
      case Method::poem:
        rec.objective =
            rec.ips + cfg.poem_lambda *
                          std::sqrt(std::max(detail::poem_variance_head(probs, metric_batch).value,
                                             0.0) /
                                    static_cast<double>(n_metric));
        break;
      case Method::divergence_only_direct:
      case Method::divergence_only_fgan:
        rec.objective = lambda * std::sqrt(rec.divergence / static_cast<double>(n_metric));
        break;
      default:
        rec.objective = vrcrm_objective(rec.ips, rec.divergence, n_metric, cfg.objective);
        break;
    }
    rec.fgan_bound = last_bound;
    result.trace.epochs.push_back(rec);
  }

  result.policy.net.train_mode = false;
  return result;
}

// §2 two-step procedure with the stated preconditions spelled out.
inline TrainResult train_vrcrm(SoftmaxPolicy policy, const SyntheticEnvironment& env,
                               const DatasetSplit& data, TrainConfig cfg) {
  cfg.method = Method::vrcrm;
  return train(std::move(policy), env, data, cfg);
}

inline TrainResult train_divergence_only(SoftmaxPolicy policy, const SyntheticEnvironment& env,
                                         const DatasetSplit& data, const TrainConfig& cfg) {
  require(cfg.method == Method::divergence_only_fgan ||
              cfg.method == Method::divergence_only_direct,
          "train_divergence_only: wrong method");
  return train(std::move(policy), env, data, cfg);
}

// POEM's penalty weight is selected on the validation split: each
// candidate trains from the same initialization and the lambda with the
// lowest validation IPS risk wins.
inline TrainResult train_poem_tuned(const SoftmaxPolicy& init, const SyntheticEnvironment& env,
                                    const DatasetSplit& data, TrainConfig cfg,
                                    double* chosen_lambda = nullptr) {
  static const double grid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  cfg.method = Method::poem;
  TrainResult best;
  double best_score = std::numeric_limits<double>::infinity();
  double best_lambda = grid[0];
  for (double lam : grid) {
    TrainConfig c = cfg;
    c.poem_lambda = lam;
    TrainResult r = train(init, env, data, c);
    const double score = estimate_ips(r.policy, data.validation);
    if (score < best_score) {
      best_score = score;
      best = std::move(r);
      best_lambda = lam;
    }
  }
  if (chosen_lambda) *chosen_lambda = best_lambda;
  return best;
}

}  // namespace vrcrm
