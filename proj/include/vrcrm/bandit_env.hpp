#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrcrm/rng.hpp"
#include "vrcrm/tensor.hpp"

namespace vrcrm {

// Synthetic contextual-bandit world: logistic ground-truth rewards and a
// temperature-beta softmax logging policy over them. Everything is
// regenerated bit-exactly from the seed.
struct SyntheticEnvironment {
  int n_actions = 0;
  int context_dim = 0;
  double beta = 5.0;
  std::uint64_t seed = 0;
  std::vector<double> reward_weights;  // n_actions x context_dim, row-major
  std::vector<double> reward_biases;   // n_actions
  std::string tag;
};

struct LoggedDataset {
  Tensor2 contexts;                  // N x d
  std::vector<int> actions;          // in [0, K)
  std::vector<double> propensities;  // pi_0(a_i | x_i), in (0, 1]
  std::vector<double> rewards;       // {0, 1}
  std::string environment_tag;

  std::size_t size() const { return actions.size(); }
};

struct DatasetSplit {
  LoggedDataset train;
  LoggedDataset validation;
  LoggedDataset test;
};

inline SyntheticEnvironment make_environment(int n_actions, int context_dim, double beta,
                                             std::uint64_t seed) {
  if (n_actions < 2) throw std::invalid_argument("make_environment: need n_actions >= 2");
  if (context_dim < 1) throw std::invalid_argument("make_environment: need context_dim >= 1");
  SyntheticEnvironment env;
  env.n_actions = n_actions;
  env.context_dim = context_dim;
  env.beta = beta;
  env.seed = seed;
  Rng rng(seed);
  env.reward_weights.resize(static_cast<std::size_t>(n_actions) * context_dim);
  for (double& w : env.reward_weights) w = rng.normal();
  env.reward_biases.resize(n_actions);
  for (double& b : env.reward_biases) b = rng.normal();
  env.tag = "synt-" + std::to_string(n_actions) + "-" + std::to_string(context_dim);
  return env;
}

// q(x, a) = sigmoid(<x, w_a> + b_a) for every action.
inline std::vector<double> true_reward(const SyntheticEnvironment& env, const double* x,
                                       std::size_t dim) {
  if (static_cast<int>(dim) != env.context_dim)
    throw std::invalid_argument("true_reward: context dimension mismatch");
  std::vector<double> q(env.n_actions);
  for (int a = 0; a < env.n_actions; ++a) {
    double z = env.reward_biases[a];
    const double* w = env.reward_weights.data() + static_cast<std::size_t>(a) * env.context_dim;
    for (int j = 0; j < env.context_dim; ++j) z += w[j] * x[j];
    q[a] = 1.0 / (1.0 + std::exp(-z));
  }
  return q;
}

inline std::vector<double> true_reward(const SyntheticEnvironment& env,
                                       const std::vector<double>& x) {
  return true_reward(env, x.data(), x.size());
}

// pi_0(a | x) = softmax over actions of beta * q(x, a).
inline std::vector<double> logging_policy(const SyntheticEnvironment& env, const double* x,
                                          std::size_t dim) {
  std::vector<double> p = true_reward(env, x, dim);
  double mx = -1e300;
  for (int a = 0; a < env.n_actions; ++a) {
    p[a] *= env.beta;
    mx = std::max(mx, p[a]);
  }
  double sum = 0.0;
  for (int a = 0; a < env.n_actions; ++a) {
    p[a] = std::exp(p[a] - mx);
    sum += p[a];
  }
  for (int a = 0; a < env.n_actions; ++a) p[a] /= sum;
  return p;
}

inline std::vector<double> logging_policy(const SyntheticEnvironment& env,
                                          const std::vector<double>& x) {
  return logging_policy(env, x.data(), x.size());
}

inline Tensor2 sample_contexts(const SyntheticEnvironment& env, std::size_t n, Rng& rng) {
  Tensor2 xs(n, static_cast<std::size_t>(env.context_dim));
  for (double& v : xs.values) v = rng.normal();
  return xs;
}

// Full logging-policy probability matrix for a batch of contexts; the
// direct divergence estimator and the f-GAN threshold consume this.
inline Tensor2 logging_prob_matrix(const SyntheticEnvironment& env, const Tensor2& contexts) {
  Tensor2 out(contexts.rows, static_cast<std::size_t>(env.n_actions));
  for (std::size_t r = 0; r < contexts.rows; ++r) {
    const std::vector<double> p = logging_policy(env, contexts.row(r), contexts.cols);
    for (int a = 0; a < env.n_actions; ++a) out.at(r, a) = p[a];
  }
  return out;
}

inline LoggedDataset sample_logged_data(const SyntheticEnvironment& env, std::size_t n,
                                        Rng& rng) {
  require(n >= 1, "sample_logged_data: need n >= 1");
  LoggedDataset d;
  d.contexts = sample_contexts(env, n, rng);
  d.actions.resize(n);
  d.propensities.resize(n);
  d.rewards.resize(n);
  d.environment_tag = env.tag;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = d.contexts.row(i);
    const std::vector<double> q = true_reward(env, x, d.contexts.cols);
    const std::vector<double> p = logging_policy(env, x, d.contexts.cols);
    const int a = rng.categorical(p.data(), env.n_actions);
    d.actions[i] = a;
    d.propensities[i] = p[a];
    d.rewards[i] = rng.uniform() < q[a] ? 1.0 : 0.0;
  }
  return d;
}

inline DatasetSplit make_split(const SyntheticEnvironment& env, std::size_t n_per_split,
                               Rng& rng) {
  DatasetSplit s;
  s.train = sample_logged_data(env, n_per_split, rng);
  s.validation = sample_logged_data(env, n_per_split, rng);
  s.test = sample_logged_data(env, n_per_split, rng);
  return s;
}

// --- serialization -------------------------------------------------------

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void save_dataset_csv(const LoggedDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t c = 0; c < d.contexts.cols; ++c) out << "context_" << c << ",";
  out << "action,propensity,reward\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t c = 0; c < d.contexts.cols; ++c)
      out << format_real(d.contexts.at(i, c)) << ",";
    out << d.actions[i] << "," << format_real(d.propensities[i]) << ","
        << static_cast<int>(d.rewards[i]) << "\n";
  }
}

inline LoggedDataset load_dataset_csv(const std::string& path, const std::string& tag = "") {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
  std::size_t cols = 0;
  for (std::size_t pos = 0; (pos = line.find("context_", pos)) != std::string::npos; ++pos)
    ++cols;
  if (cols == 0) throw std::runtime_error("malformed dataset header: " + path);

  LoggedDataset d;
  d.environment_tag = tag;
  std::vector<double> ctx;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    for (std::size_t c = 0; c < cols; ++c) {
      std::getline(ss, field, ',');
      ctx.push_back(std::strtod(field.c_str(), nullptr));
    }
    std::getline(ss, field, ',');
    d.actions.push_back(std::stoi(field));
    std::getline(ss, field, ',');
    d.propensities.push_back(std::strtod(field.c_str(), nullptr));
    std::getline(ss, field, ',');
    d.rewards.push_back(std::strtod(field.c_str(), nullptr));
  }
  d.contexts.rows = d.actions.size();
  d.contexts.cols = cols;
  d.contexts.values = std::move(ctx);
  return d;
}

inline nlohmann::json environment_to_json(const SyntheticEnvironment& env) {
  return {{"n_actions", env.n_actions},
          {"context_dim", env.context_dim},
          {"beta", env.beta},
          {"seed", env.seed}};
}

inline SyntheticEnvironment environment_from_json(const nlohmann::json& j) {
  return make_environment(j.at("n_actions").get<int>(), j.at("context_dim").get<int>(),
                          j.at("beta").get<double>(), j.at("seed").get<std::uint64_t>());
}

}  // namespace vrcrm
