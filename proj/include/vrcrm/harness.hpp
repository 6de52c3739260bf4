#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrcrm/bandit_env.hpp"
#include "vrcrm/estimators.hpp"
#include "vrcrm/learners.hpp"
#include "vrcrm/policy.hpp"
#include "vrcrm/stats.hpp"

namespace vrcrm {

// EXP: mean over fresh evaluation contexts of sum_a pi(a|x) q(x,a).
inline double evaluate_policy(SoftmaxPolicy& policy, const SyntheticEnvironment& env,
                              std::size_t n_eval_contexts, Rng& rng) {
  require(n_eval_contexts >= 1, "evaluate_policy: need n >= 1");
  const Tensor2 xs = sample_contexts(env, n_eval_contexts, rng);
  const bool saved_mode = policy.net.train_mode;
  policy.net.train_mode = false;
  const Tensor2 probs = policy_probs(policy, xs);
  policy.net.train_mode = saved_mode;
  double total = 0.0;
  for (std::size_t r = 0; r < xs.rows; ++r) {
    const std::vector<double> q = true_reward(env, xs.row(r), xs.cols);
    for (int a = 0; a < env.n_actions; ++a) total += probs.at(r, a) * q[a];
  }
  return total / static_cast<double>(n_eval_contexts);
}

inline double evaluate_logging_policy(const SyntheticEnvironment& env,
                                      std::size_t n_eval_contexts, Rng& rng) {
  const Tensor2 xs = sample_contexts(env, n_eval_contexts, rng);
  double total = 0.0;
  for (std::size_t r = 0; r < xs.rows; ++r) {
    const std::vector<double> q = true_reward(env, xs.row(r), xs.cols);
    const std::vector<double> p = logging_policy(env, xs.row(r), xs.cols);
    for (int a = 0; a < env.n_actions; ++a) total += p[a] * q[a];
  }
  return total / static_cast<double>(n_eval_contexts);
}

inline std::pair<int, int> parse_env_tag(const std::string& tag) {
  // "synt-K-d"
  if (tag.rfind("synt-", 0) != 0) throw std::invalid_argument("bad environment tag: " + tag);
  const std::size_t dash = tag.find('-', 5);
  if (dash == std::string::npos) throw std::invalid_argument("bad environment tag: " + tag);
  return {std::stoi(tag.substr(5, dash - 5)), std::stoi(tag.substr(dash + 1))};
}

struct ExperimentSpec {
  std::vector<std::string> environments;  // "synt-K-d" tags
  std::vector<std::size_t> dataset_sizes;
  std::vector<std::string> methods;
  int runs = 10;
  double alpha = 0.05;
  std::uint64_t base_seed = 1;
  std::string output_dir = "results";
  std::string figure = "divergence";  // picks the significance baseline
  double beta = 5.0;
  int epochs = 100;
  int threads = 1;
  std::size_t eval_contexts = 10000;

  std::string baseline_method() const { return figure == "multiclass" ? "ips" : "logging"; }
};

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  for (const auto& e : j.at("environments")) {
    if (e.is_string())
      s.environments.push_back(e.get<std::string>());
    else
      s.environments.push_back("synt-" + std::to_string(e.at(0).get<int>()) + "-" +
                               std::to_string(e.at(1).get<int>()));
  }
  s.dataset_sizes = j.at("dataset_sizes").get<std::vector<std::size_t>>();
  s.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("runs")) s.runs = j.at("runs").get<int>();
  if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
  if (j.contains("base_seed")) s.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("figure")) s.figure = j.at("figure").get<std::string>();
  if (j.contains("beta")) s.beta = j.at("beta").get<double>();
  if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
  if (j.contains("threads")) s.threads = j.at("threads").get<int>();
  if (j.contains("eval_contexts"))
    s.eval_contexts = j.at("eval_contexts").get<std::size_t>();
  return s;
}

struct CellResult {
  std::string environment;
  std::size_t size = 0;
  std::string method;
  int seed_index = 0;
  double exp_score = 0.0;
  bool ok = false;
  std::string error;
};

struct AggregateRow {
  std::string environment;
  std::size_t size = 0;
  std::string method;
  double mean = 0.0;
  double stddev = 0.0;
  bool significant = false;
};

struct ExperimentResults {
  std::vector<CellResult> cells;
  std::vector<AggregateRow> aggregates;
};

namespace detail {

// Dataset seeds depend on (environment, size, run) but never on the
// method, so methods at the same cell coordinates share bit-identical
// data and the t-tests are genuinely paired.
inline std::uint64_t cell_data_seed(std::uint64_t base, const std::string& tag,
                                    std::size_t size, int run) {
  return base ^ fnv1a64(tag + "|" + std::to_string(size) + "|" + std::to_string(run));
}

inline std::uint64_t cell_eval_seed(std::uint64_t base, const std::string& tag, int run) {
  return base ^ fnv1a64(tag + "|eval|" + std::to_string(run));
}

inline CellResult run_cell(const ExperimentSpec& spec, const std::string& tag,
                           std::size_t size, const std::string& method, int run) {
  CellResult cell{tag, size, method, run, 0.0, false, ""};
  try {
    const auto [k, d] = parse_env_tag(tag);
    const SyntheticEnvironment env =
        make_environment(k, d, spec.beta, spec.base_seed ^ fnv1a64(tag));
    Rng eval_rng(cell_eval_seed(spec.base_seed, tag, run));
    if (method == "logging") {
      cell.exp_score = evaluate_logging_policy(env, spec.eval_contexts, eval_rng);
      cell.ok = true;
      return cell;
    }

    const std::uint64_t data_seed = cell_data_seed(spec.base_seed, tag, size, run);
    Rng data_rng(data_seed);
    const DatasetSplit split = make_split(env, size, data_rng);

    SoftmaxPolicy policy =
        make_softmax_policy("synthetic_1x15", d, k, data_seed ^ 0x6a09e667f3bcc908ull);
    TrainConfig cfg;
    cfg.method = method_from_name(method);
    cfg.epochs = spec.epochs;
    cfg.seed = data_seed ^ 0xbb67ae8584caa73bull;

    TrainResult trained;
    if (cfg.method == Method::poem)
      trained = train_poem_tuned(policy, env, split, cfg);
    else
      trained = train(std::move(policy), env, split, cfg);

    cell.exp_score = evaluate_policy(trained.policy, env, spec.eval_contexts, eval_rng);
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

}  // namespace detail

inline std::vector<AggregateRow> aggregate_results(const std::vector<CellResult>& cells,
                                                   const ExperimentSpec& spec) {
  // collect per (env, size, method) score vectors ordered by run index
  std::map<std::tuple<std::string, std::size_t, std::string>, std::vector<double>> groups;
  for (const CellResult& c : cells)
    if (c.ok) {
      auto& v = groups[{c.environment, c.size, c.method}];
      if (v.size() <= static_cast<std::size_t>(c.seed_index))
        v.resize(c.seed_index + 1, std::numeric_limits<double>::quiet_NaN());
      v[c.seed_index] = c.exp_score;
    }

  const std::string baseline = spec.baseline_method();
  std::vector<AggregateRow> rows;
  for (const std::string& tag : spec.environments)
    for (std::size_t size : spec.dataset_sizes)
      for (const std::string& method : spec.methods) {
        auto it = groups.find({tag, size, method});
        if (it == groups.end()) continue;
        const std::vector<double>& scores = it->second;
        AggregateRow row{tag, size, method, 0.0, 0.0, false};
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= static_cast<double>(scores.size());
        double ss = 0.0;
        for (double s : scores) ss += (s - mean) * (s - mean);
        row.mean = mean;
        row.stddev = scores.size() > 1
                         ? std::sqrt(ss / static_cast<double>(scores.size() - 1))
                         : 0.0;
        if (method != baseline && scores.size() >= 2) {
          auto bit = groups.find({tag, size, baseline});
          if (bit != groups.end() && bit->second.size() == scores.size())
            row.significant = paired_t_test(scores, bit->second, spec.alpha).significant;
        }
        rows.push_back(row);
      }
  return rows;
}

inline void write_scores_csv(const std::vector<CellResult>& cells, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "environment,size,method,seed,exp\n";
  for (const CellResult& c : cells) {
    if (!c.ok) continue;
    out << c.environment << "," << c.size << "," << c.method << "," << c.seed_index << ","
        << format_real(c.exp_score) << "\n";
  }
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& rows,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "environment,size,method,mean,std,significant\n";
  for (const AggregateRow& r : rows)
    out << r.environment << "," << r.size << "," << r.method << "," << format_real(r.mean)
        << "," << format_real(r.stddev) << "," << (r.significant ? 1 : 0) << "\n";
}

// --- plot-data emission ---------------------------------------------------

namespace detail {

inline const char* method_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[i % 8];
}

}  // namespace detail

// One CSV per environment panel plus a hand-written SVG line chart with
// +-1 std bands; filled markers flag significance vs the figure baseline.
inline std::vector<std::string> emit_plot_data(const ExperimentResults& results,
                                               const ExperimentSpec& spec,
                                               const std::string& out_dir) {
  if (results.aggregates.empty())
    throw std::invalid_argument("emit_plot_data: no results to plot");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  // report gaps
  for (const std::string& tag : spec.environments)
    for (std::size_t size : spec.dataset_sizes)
      for (const std::string& method : spec.methods) {
        const bool found =
            std::any_of(results.aggregates.begin(), results.aggregates.end(),
                        [&](const AggregateRow& r) {
                          return r.environment == tag && r.size == size && r.method == method;
                        });
        if (!found)
          std::cerr << "warning: missing cell " << tag << "/" << size << "/" << method
                    << "\n";
      }

  for (const std::string& tag : spec.environments) {
    const std::string path = out_dir + "/panel_" + tag + "_" + spec.figure + ".csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "size,method,mean,std,significant\n";
    for (const AggregateRow& r : results.aggregates)
      if (r.environment == tag)
        out << r.size << "," << r.method << "," << format_real(r.mean) << ","
            << format_real(r.stddev) << "," << (r.significant ? 1 : 0) << "\n";
    written.push_back(path);
  }

  // SVG: one panel per environment, methods as colored series
  const double pw = 320, ph = 240, ml = 52, mr = 12, mt = 28, mb = 40;
  const double width = spec.environments.size() * pw;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << ph + 40 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";

  for (std::size_t pi = 0; pi < spec.environments.size(); ++pi) {
    const std::string& tag = spec.environments[pi];
    std::vector<const AggregateRow*> rows;
    for (const AggregateRow& r : results.aggregates)
      if (r.environment == tag) rows.push_back(&r);
    if (rows.empty()) continue;

    double ymin = 1e300, ymax = -1e300;
    for (const AggregateRow* r : rows) {
      ymin = std::min(ymin, r->mean - r->stddev);
      ymax = std::max(ymax, r->mean + r->stddev);
    }
    const double pad = std::max((ymax - ymin) * 0.1, 1e-6);
    ymin -= pad;
    ymax += pad;
    const double x0 = pi * pw + ml, x1 = (pi + 1) * pw - mr;
    const double y0 = ph - mb, y1 = mt;
    const double smin = static_cast<double>(spec.dataset_sizes.front());
    const double smax = static_cast<double>(spec.dataset_sizes.back());
    auto sx = [&](double s) {
      return smax > smin ? x0 + (s - smin) / (smax - smin) * (x1 - x0) : (x0 + x1) / 2;
    };
    auto sy = [&](double v) { return y0 - (v - ymin) / (ymax - ymin) * (y0 - y1); };

    svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << mt - 10
        << "\" text-anchor=\"middle\">" << tag << "</text>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
        << "\" stroke=\"black\"/>\n";
    for (std::size_t size : spec.dataset_sizes) {
      svg << "<text x=\"" << sx(static_cast<double>(size)) << "\" y=\"" << y0 + 14
          << "\" text-anchor=\"middle\">" << size / 1000 << "k</text>\n";
    }
    for (int k = 0; k <= 4; ++k) {
      const double v = ymin + (ymax - ymin) * k / 4.0;
      svg << "<text x=\"" << x0 - 4 << "\" y=\"" << sy(v) + 3
          << "\" text-anchor=\"end\">";
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.3f", v);
      svg << buf << "</text>\n";
    }

    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      const std::string& method = spec.methods[mi];
      std::vector<const AggregateRow*> series;
      for (std::size_t size : spec.dataset_sizes)
        for (const AggregateRow* r : rows)
          if (r->size == size && r->method == method) series.push_back(r);
      if (series.empty()) continue;
      const char* color = detail::method_color(mi);

      // +-1 std band
      svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (const AggregateRow* r : series)
        svg << sx(static_cast<double>(r->size)) << "," << sy(r->mean + r->stddev) << " ";
      for (auto it = series.rbegin(); it != series.rend(); ++it)
        svg << sx(static_cast<double>((*it)->size)) << "," << sy((*it)->mean - (*it)->stddev)
            << " ";
      svg << "\"/>\n";

      svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (const AggregateRow* r : series)
        svg << sx(static_cast<double>(r->size)) << "," << sy(r->mean) << " ";
      svg << "\"/>\n";

      for (const AggregateRow* r : series)
        svg << "<circle cx=\"" << sx(static_cast<double>(r->size)) << "\" cy=\"" << sy(r->mean)
            << "\" r=\"3.5\" stroke=\"" << color << "\" fill=\""
            << (r->significant ? color : "white") << "\"/>\n";

      if (pi == 0)
        svg << "<text x=\"" << x0 + 8 << "\" y=\"" << y1 + 14 * (mi + 1) << "\" fill=\""
            << color << "\">" << method << "</text>\n";
    }
  }
  svg << "</svg>\n";

  const std::string svg_path = out_dir + "/figure_" + spec.figure + ".svg";
  std::ofstream out(svg_path);
  if (!out) throw std::runtime_error("cannot open for writing: " + svg_path);
  out << svg.str();
  written.push_back(svg_path);
  return written;
}

// Full sweep: every (environment, size, method, run) cell trains and
// evaluates independently; the baseline method is added when missing so
// significance is always computable. Failures are recorded per cell
// without aborting the sweep.
inline ExperimentResults run_experiment(ExperimentSpec spec) {
  require(spec.runs >= 2, "run_experiment: need runs >= 2");
  require(spec.alpha > 0.0 && spec.alpha < 1.0, "run_experiment: alpha in (0,1)");
  if (std::find(spec.methods.begin(), spec.methods.end(), spec.baseline_method()) ==
      spec.methods.end())
    spec.methods.insert(spec.methods.begin(), spec.baseline_method());

  std::filesystem::create_directories(spec.output_dir);

  struct Coord {
    std::string tag;
    std::size_t size;
    std::string method;
    int run;
  };
  std::vector<Coord> coords;
  for (const std::string& tag : spec.environments)
    for (std::size_t size : spec.dataset_sizes)
      for (const std::string& method : spec.methods)
        for (int run = 0; run < spec.runs; ++run) coords.push_back({tag, size, method, run});

  ExperimentResults results;
  results.cells.resize(coords.size());

  const int n_threads = std::max(1, spec.threads);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= coords.size()) break;
      const Coord& c = coords[i];
      results.cells[i] = detail::run_cell(spec, c.tag, c.size, c.method, c.run);
      const CellResult& cell = results.cells[i];
      std::cerr << "[" << (i + 1) << "/" << coords.size() << "] " << c.tag << " n=" << c.size
                << " " << c.method << " run=" << c.run << " -> "
                << (cell.ok ? std::to_string(cell.exp_score) : "ERROR: " + cell.error)
                << "\n";
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  results.aggregates = aggregate_results(results.cells, spec);
  write_scores_csv(results.cells, spec.output_dir + "/scores.csv");
  write_aggregate_csv(results.aggregates, spec.output_dir + "/aggregate.csv");
  emit_plot_data(results, spec, spec.output_dir);
  return results;
}

}  // namespace vrcrm
