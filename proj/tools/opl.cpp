// Command-line front end: dataset generation, single training runs,
// policy evaluation, full experiment sweeps, and plot regeneration.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vrcrm/bandit_env.hpp"
#include "vrcrm/harness.hpp"
#include "vrcrm/learners.hpp"

namespace {

vrcrm::SyntheticEnvironment env_from_tag(const std::string& tag, double beta,
                                         std::uint64_t base_seed) {
  const auto [k, d] = vrcrm::parse_env_tag(tag);
  return vrcrm::make_environment(k, d, beta, base_seed ^ vrcrm::fnv1a64(tag));
}

vrcrm::ExperimentResults results_from_scores_csv(const std::string& path,
                                                 vrcrm::ExperimentSpec& spec) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::getline(in, line);  // header
  vrcrm::ExperimentResults results;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string env, size, method, seed, exp;
    std::getline(ss, env, ',');
    std::getline(ss, size, ',');
    std::getline(ss, method, ',');
    std::getline(ss, seed, ',');
    std::getline(ss, exp, ',');
    vrcrm::CellResult c;
    c.environment = env;
    c.size = std::stoull(size);
    c.method = method;
    c.seed_index = std::stoi(seed);
    c.exp_score = std::strtod(exp.c_str(), nullptr);
    c.ok = true;
    results.cells.push_back(c);
    if (std::find(spec.environments.begin(), spec.environments.end(), env) ==
        spec.environments.end())
      spec.environments.push_back(env);
    if (std::find(spec.dataset_sizes.begin(), spec.dataset_sizes.end(), c.size) ==
        spec.dataset_sizes.end())
      spec.dataset_sizes.push_back(c.size);
    if (std::find(spec.methods.begin(), spec.methods.end(), method) == spec.methods.end())
      spec.methods.push_back(method);
  }
  std::sort(spec.dataset_sizes.begin(), spec.dataset_sizes.end());
  results.aggregates = vrcrm::aggregate_results(results.cells, spec);
  return results;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy contextual-bandit learning: IPS, POEM, direct "
               "divergence regularization, and VRCRM"};
  app.require_subcommand(1);

  std::string env_tag = "synt-10-5";
  std::size_t size = 10000;
  std::string method = "ips";
  int runs = 10;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_dir = "results";
  double beta = 5.0;
  int epochs = 100;
  std::string figure = "divergence";
  std::string policy_path;
  std::vector<std::string> env_tags;
  std::vector<std::size_t> sizes;
  std::vector<std::string> methods;
  int threads = 1;

  auto* gen = app.add_subcommand("generate", "Sample a logged dataset split to CSV files");
  gen->add_option("--env", env_tag, "environment tag, e.g. synt-10-5");
  gen->add_option("--size", size, "rows per split");
  gen->add_option("--seed", seed, "seed");
  gen->add_option("--beta", beta, "logging softmax temperature");
  gen->add_option("--out", out_dir, "output directory");

  auto* tr = app.add_subcommand("train", "Train one policy and report its EXP score");
  tr->add_option("--env", env_tag, "environment tag");
  tr->add_option("--size", size, "rows per split");
  tr->add_option("--method", method,
                 "ips|direct|poem|vrcrm|divergence_only_fgan|divergence_only_direct|untrained");
  tr->add_option("--seed", seed, "seed");
  tr->add_option("--beta", beta, "logging softmax temperature");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--out", out_dir, "output directory");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a saved policy's EXP score");
  ev->add_option("--policy", policy_path, "policy JSON file")->required();
  ev->add_option("--env", env_tag, "environment tag");
  ev->add_option("--seed", seed, "seed");
  ev->add_option("--beta", beta, "logging softmax temperature");

  auto* ex = app.add_subcommand("experiment", "Run a full multi-seed sweep");
  ex->add_option("--config", config_path, "JSON spec file (overrides other flags)");
  ex->add_option("--env", env_tags, "environment tags");
  ex->add_option("--size", sizes, "dataset sizes");
  ex->add_option("--method", methods, "method names");
  ex->add_option("--runs", runs, "runs per cell");
  ex->add_option("--alpha", alpha, "significance level");
  ex->add_option("--seed", seed, "base seed");
  ex->add_option("--beta", beta, "logging softmax temperature");
  ex->add_option("--epochs", epochs, "training epochs");
  ex->add_option("--figure", figure, "divergence|multiclass (picks the baseline)");
  ex->add_option("--threads", threads, "worker threads");
  ex->add_option("--out", out_dir, "output directory");

  auto* pl = app.add_subcommand("plot", "Regenerate aggregate CSVs and SVG from scores.csv");
  pl->add_option("--figure", figure, "divergence|multiclass");
  pl->add_option("--alpha", alpha, "significance level");
  pl->add_option("--out", out_dir, "directory containing scores.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const vrcrm::SyntheticEnvironment env = env_from_tag(env_tag, beta, seed);
      vrcrm::Rng rng(seed);
      const vrcrm::DatasetSplit split = vrcrm::make_split(env, size, rng);
      std::filesystem::create_directories(out_dir);
      const std::string stem =
          out_dir + "/" + env.tag + "_seed" + std::to_string(seed) + "_" + std::to_string(size);
      vrcrm::save_dataset_csv(split.train, stem + "_train.csv");
      vrcrm::save_dataset_csv(split.validation, stem + "_validation.csv");
      vrcrm::save_dataset_csv(split.test, stem + "_test.csv");
      std::ofstream(stem + "_env.json") << vrcrm::environment_to_json(env).dump(2) << "\n";
      std::cout << "wrote " << stem << "_{train,validation,test}.csv\n";
    } else if (tr->parsed()) {
      const vrcrm::SyntheticEnvironment env = env_from_tag(env_tag, beta, seed);
      vrcrm::Rng rng(seed);
      const vrcrm::DatasetSplit split = vrcrm::make_split(env, size, rng);
      vrcrm::SoftmaxPolicy policy = vrcrm::make_softmax_policy(
          "synthetic_1x15", env.context_dim, env.n_actions, seed ^ 0x6a09e667f3bcc908ull);
      vrcrm::TrainConfig cfg;
      cfg.method = vrcrm::method_from_name(method);
      cfg.epochs = epochs;
      cfg.seed = seed ^ 0xbb67ae8584caa73bull;
      vrcrm::TrainResult result;
      if (cfg.method == vrcrm::Method::poem)
        result = vrcrm::train_poem_tuned(policy, env, split, cfg);
      else
        result = vrcrm::train(std::move(policy), env, split, cfg);
      std::filesystem::create_directories(out_dir);
      const std::string stem = out_dir + "/" + env.tag + "_" + method + "_seed" +
                               std::to_string(seed);
      std::ofstream(stem + "_policy.json")
          << vrcrm::network_to_json(result.policy.net).dump() << "\n";
      vrcrm::save_trace_csv(result.trace, stem + "_trace.csv");
      vrcrm::Rng eval_rng(seed ^ 0x3c6ef372fe94f82bull);
      std::cout << "EXP " << vrcrm::evaluate_policy(result.policy, env, 10000, eval_rng)
                << "\n";
    } else if (ev->parsed()) {
      const vrcrm::SyntheticEnvironment env = env_from_tag(env_tag, beta, seed);
      std::ifstream in(policy_path);
      if (!in) throw std::runtime_error("cannot open: " + policy_path);
      nlohmann::json j;
      in >> j;
      vrcrm::SoftmaxPolicy policy;
      policy.net = vrcrm::network_from_json(j);
      policy.n_actions = policy.net.output_width();
      vrcrm::Rng eval_rng(seed ^ 0x3c6ef372fe94f82bull);
      std::cout << "EXP " << vrcrm::evaluate_policy(policy, env, 10000, eval_rng) << "\n";
    } else if (ex->parsed()) {
      vrcrm::ExperimentSpec spec;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open: " + config_path);
        nlohmann::json j;
        in >> j;
        spec = vrcrm::experiment_spec_from_json(j);
      } else {
        spec.environments = env_tags.empty() ? std::vector<std::string>{env_tag} : env_tags;
        spec.dataset_sizes = sizes.empty() ? std::vector<std::size_t>{size} : sizes;
        spec.methods = methods.empty() ? std::vector<std::string>{method} : methods;
        spec.runs = runs;
        spec.alpha = alpha;
        spec.base_seed = seed;
        spec.output_dir = out_dir;
        spec.figure = figure;
        spec.beta = beta;
        spec.epochs = epochs;
        spec.threads = threads;
      }
      vrcrm::run_experiment(spec);
      std::cout << "wrote " << spec.output_dir << "/scores.csv and aggregate.csv\n";
    } else if (pl->parsed()) {
      vrcrm::ExperimentSpec spec;
      spec.figure = figure;
      spec.alpha = alpha;
      spec.output_dir = out_dir;
      const vrcrm::ExperimentResults results =
          results_from_scores_csv(out_dir + "/scores.csv", spec);
      vrcrm::write_aggregate_csv(results.aggregates, out_dir + "/aggregate.csv");
      for (const std::string& f : vrcrm::emit_plot_data(results, spec, out_dir))
        std::cout << "wrote " << f << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
