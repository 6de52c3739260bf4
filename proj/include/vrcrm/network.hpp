#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrcrm/rng.hpp"
#include "vrcrm/tensor.hpp"

namespace vrcrm {

enum class LayerKind { dense, relu, batchnorm, softmax, log_softmax };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::softmax: return "softmax";
    case LayerKind::log_softmax: return "log_softmax";
  }
  return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "relu") return LayerKind::relu;
  if (s == "batchnorm") return LayerKind::batchnorm;
  if (s == "softmax") return LayerKind::softmax;
  if (s == "log_softmax") return LayerKind::log_softmax;
  throw std::invalid_argument("unknown layer kind: " + s);
}

struct LayerSpec {
  LayerKind kind;
  int input_width;
  int output_width;
};

// Parameter layout per layer, inside one flat vector:
//   dense:     input_width*output_width weights (row-major in x out), then
//              output_width biases
//   batchnorm: width gammas, width betas, width running means, width
//              running variances (running stats carry zero gradient)
//   others:    no parameters
inline std::size_t layer_param_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::dense:
      return static_cast<std::size_t>(l.input_width) * l.output_width + l.output_width;
    case LayerKind::batchnorm:
      return 4u * static_cast<std::size_t>(l.output_width);
    default:
      return 0;
  }
}

// Sequential feed-forward network with reverse-mode gradients. Forward
// retains per-layer intermediates so backward can run afterwards.
struct Network {
  std::vector<LayerSpec> layers;
  std::vector<double> parameters;
  bool train_mode = true;

  struct LayerCache {
    Tensor2 input;
    Tensor2 output;
    // batchnorm only
    std::vector<double> mean, inv_std, xhat;
  };
  std::vector<LayerCache> cache;
  bool has_cache = false;

  std::vector<std::size_t> offsets;  // parameter offset per layer

  int input_width() const { return layers.empty() ? 0 : layers.front().input_width; }
  int output_width() const { return layers.empty() ? 0 : layers.back().output_width; }
  std::size_t param_count() const { return parameters.size(); }
};

inline void validate_layers(const std::vector<LayerSpec>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::dense) {
      require(l.output_width >= 1, "dense layer needs output_width >= 1");
      require(l.input_width >= 1, "dense layer needs input_width >= 1");
    } else {
      require(l.input_width == l.output_width,
              "activation layers require input_width == output_width");
    }
    if (i + 1 < layers.size())
      require(layers[i + 1].input_width == l.output_width,
              "adjacent layer widths must chain");
  }
}

inline Network make_network(std::vector<LayerSpec> layers) {
  validate_layers(layers);
  Network net;
  net.layers = std::move(layers);
  net.offsets.resize(net.layers.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    net.offsets[i] = total;
    total += layer_param_count(net.layers[i]);
  }
  net.parameters.assign(total, 0.0);
  net.cache.resize(net.layers.size());
  // batchnorm defaults: gamma 1, beta 0, running mean 0, running var 1
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == LayerKind::batchnorm) {
      const int w = net.layers[i].output_width;
      double* p = net.parameters.data() + net.offsets[i];
      for (int j = 0; j < w; ++j) p[j] = 1.0;               // gamma
      for (int j = 0; j < w; ++j) p[3 * w + j] = 1.0;       // running var
    }
  }
  return net;
}

// Glorot-uniform dense weights, zero biases.
inline void init_parameters(Network& net, Rng& rng) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (l.kind != LayerKind::dense) continue;
    double* p = net.parameters.data() + net.offsets[i];
    const double bound = std::sqrt(6.0 / (l.input_width + l.output_width));
    const std::size_t nw = static_cast<std::size_t>(l.input_width) * l.output_width;
    for (std::size_t k = 0; k < nw; ++k) p[k] = (2.0 * rng.uniform() - 1.0) * bound;
    for (int k = 0; k < l.output_width; ++k) p[nw + k] = 0.0;
  }
}

namespace detail {

constexpr double kBatchnormEps = 1e-5;
constexpr double kBatchnormMomentum = 0.1;

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using ConstMapMat = Eigen::Map<const EMat>;

inline void dense_forward(const LayerSpec& l, const double* p, const Tensor2& in,
                          Tensor2& out) {
  ConstMapMat X(in.values.data(), in.rows, in.cols);
  ConstMapMat W(p, l.input_width, l.output_width);
  MapMat Y(out.values.data(), out.rows, out.cols);
  Y.noalias() = X * W;
  const double* b = p + static_cast<std::size_t>(l.input_width) * l.output_width;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (int c = 0; c < l.output_width; ++c) out.at(r, c) += b[c];
}

inline void softmax_rows(const Tensor2& in, Tensor2& out) {
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* x = in.row(r);
    double* y = out.row(r);
    double mx = x[0];
    for (std::size_t c = 1; c < in.cols; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < in.cols; ++c) y[c] /= sum;
  }
}

inline void log_softmax_rows(const Tensor2& in, Tensor2& out) {
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* x = in.row(r);
    double* y = out.row(r);
    double mx = x[0];
    for (std::size_t c = 1; c < in.cols; ++c) mx = std::max(mx, x[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.cols; ++c) sum += std::exp(x[c] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < in.cols; ++c) y[c] = x[c] - lse;
  }
}

}  // namespace detail

inline Tensor2 forward(Network& net, const Tensor2& batch) {
  require(!net.layers.empty(), "network has no layers");
  if (static_cast<int>(batch.cols) != net.input_width())
    throw std::invalid_argument("forward: batch width does not match first layer");
  require(batch.rows >= 1, "forward: empty batch");

  Tensor2 cur = batch;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    Network::LayerCache& lc = net.cache[i];
    lc.input = cur;
    Tensor2 out(cur.rows, static_cast<std::size_t>(l.output_width));
    const double* p = net.parameters.data() + net.offsets[i];
    switch (l.kind) {
      case LayerKind::dense:
        detail::dense_forward(l, p, cur, out);
        break;
      case LayerKind::relu:
        for (std::size_t k = 0; k < cur.values.size(); ++k)
          out.values[k] = cur.values[k] > 0.0 ? cur.values[k] : 0.0;
        break;
      case LayerKind::softmax:
        detail::softmax_rows(cur, out);
        break;
      case LayerKind::log_softmax:
        detail::log_softmax_rows(cur, out);
        break;
      case LayerKind::batchnorm: {
        const int w = l.output_width;
        const double* gamma = p;
        const double* beta = p + w;
        double* running_mean = net.parameters.data() + net.offsets[i] + 2 * w;
        double* running_var = net.parameters.data() + net.offsets[i] + 3 * w;
        lc.mean.assign(w, 0.0);
        lc.inv_std.assign(w, 0.0);
        lc.xhat.assign(cur.values.size(), 0.0);
        const double n = static_cast<double>(cur.rows);
        if (net.train_mode) {
          for (int c = 0; c < w; ++c) {
            double m = 0.0;
            for (std::size_t r = 0; r < cur.rows; ++r) m += cur.at(r, c);
            m /= n;
            double v = 0.0;
            for (std::size_t r = 0; r < cur.rows; ++r) {
              const double d = cur.at(r, c) - m;
              v += d * d;
            }
            v /= n;
            lc.mean[c] = m;
            lc.inv_std[c] = 1.0 / std::sqrt(v + detail::kBatchnormEps);
            running_mean[c] = (1.0 - detail::kBatchnormMomentum) * running_mean[c] +
                              detail::kBatchnormMomentum * m;
            running_var[c] = (1.0 - detail::kBatchnormMomentum) * running_var[c] +
                             detail::kBatchnormMomentum * v;
          }
        } else {
          for (int c = 0; c < w; ++c) {
            lc.mean[c] = running_mean[c];
            lc.inv_std[c] = 1.0 / std::sqrt(running_var[c] + detail::kBatchnormEps);
          }
        }
        for (std::size_t r = 0; r < cur.rows; ++r)
          for (int c = 0; c < w; ++c) {
            const double xh = (cur.at(r, c) - lc.mean[c]) * lc.inv_std[c];
            lc.xhat[r * w + c] = xh;
            out.at(r, c) = gamma[c] * xh + beta[c];
          }
        break;
      }
    }
    lc.output = out;
    cur = std::move(out);
  }
  if (!cur.all_finite()) throw std::runtime_error("forward: non-finite output");
  net.has_cache = true;
  return cur;
}

// Reverse pass. Returns one gradient per parameter; if input_gradient is
// non-null it receives dLoss/dBatch.
inline std::vector<double> backward(Network& net, const Tensor2& upstream_gradient,
                                    Tensor2* input_gradient = nullptr) {
  if (!net.has_cache) throw std::logic_error("backward called before forward");
  require(upstream_gradient.rows == net.cache.back().output.rows &&
              static_cast<int>(upstream_gradient.cols) == net.output_width(),
          "backward: upstream gradient shape mismatch");

  std::vector<double> grads(net.parameters.size(), 0.0);
  Tensor2 g = upstream_gradient;

  for (std::size_t ii = net.layers.size(); ii-- > 0;) {
    const LayerSpec& l = net.layers[ii];
    const Network::LayerCache& lc = net.cache[ii];
    const double* p = net.parameters.data() + net.offsets[ii];
    double* gp = grads.data() + net.offsets[ii];
    Tensor2 gin(lc.input.rows, lc.input.cols);

    switch (l.kind) {
      case LayerKind::dense: {
        using namespace detail;
        ConstMapMat X(lc.input.values.data(), lc.input.rows, lc.input.cols);
        ConstMapMat G(g.values.data(), g.rows, g.cols);
        ConstMapMat W(p, l.input_width, l.output_width);
        MapMat dW(gp, l.input_width, l.output_width);
        dW.noalias() = X.transpose() * G;
        double* db = gp + static_cast<std::size_t>(l.input_width) * l.output_width;
        for (std::size_t r = 0; r < g.rows; ++r)
          for (std::size_t c = 0; c < g.cols; ++c) db[c] += g.at(r, c);
        MapMat Gin(gin.values.data(), gin.rows, gin.cols);
        Gin.noalias() = G * W.transpose();
        break;
      }
      case LayerKind::relu:
        for (std::size_t k = 0; k < g.values.size(); ++k)
          gin.values[k] = lc.input.values[k] > 0.0 ? g.values[k] : 0.0;
        break;
      case LayerKind::softmax:
        for (std::size_t r = 0; r < g.rows; ++r) {
          const double* y = lc.output.row(r);
          const double* gr = g.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < g.cols; ++c) dot += gr[c] * y[c];
          for (std::size_t c = 0; c < g.cols; ++c)
            gin.at(r, c) = y[c] * (gr[c] - dot);
        }
        break;
      case LayerKind::log_softmax:
        for (std::size_t r = 0; r < g.rows; ++r) {
          const double* ls = lc.output.row(r);
          const double* gr = g.row(r);
          double sum = 0.0;
          for (std::size_t c = 0; c < g.cols; ++c) sum += gr[c];
          for (std::size_t c = 0; c < g.cols; ++c)
            gin.at(r, c) = gr[c] - std::exp(ls[c]) * sum;
        }
        break;
      case LayerKind::batchnorm: {
        const int w = l.output_width;
        const double* gamma = p;
        const double n = static_cast<double>(g.rows);
        for (int c = 0; c < w; ++c) {
          double dgamma = 0.0, dbeta = 0.0;
          for (std::size_t r = 0; r < g.rows; ++r) {
            dgamma += g.at(r, c) * lc.xhat[r * w + c];
            dbeta += g.at(r, c);
          }
          gp[c] = dgamma;
          gp[w + c] = dbeta;
          // running stats are state, not trained parameters
          gp[2 * w + c] = 0.0;
          gp[3 * w + c] = 0.0;
          if (net.train_mode) {
            const double mean_g = dbeta / n;
            const double mean_gx = dgamma / n;
            for (std::size_t r = 0; r < g.rows; ++r)
              gin.at(r, c) = gamma[c] * lc.inv_std[c] *
                             (g.at(r, c) - mean_g - lc.xhat[r * w + c] * mean_gx);
          } else {
            for (std::size_t r = 0; r < g.rows; ++r)
              gin.at(r, c) = gamma[c] * lc.inv_std[c] * g.at(r, c);
          }
        }
        break;
      }
    }
    g = std::move(gin);
  }
  if (input_gradient) *input_gradient = std::move(g);
  return grads;
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : net.layers)
    layers.push_back({{"kind", layer_kind_name(l.kind)},
                      {"input_width", l.input_width},
                      {"output_width", l.output_width}});
  return {{"layers", layers},
          {"parameters", net.parameters},
          {"mode", net.train_mode ? "train" : "eval"}};
}

inline Network network_from_json(const nlohmann::json& j) {
  std::vector<LayerSpec> layers;
  for (const auto& lj : j.at("layers"))
    layers.push_back({layer_kind_from_name(lj.at("kind").get<std::string>()),
                      lj.at("input_width").get<int>(),
                      lj.at("output_width").get<int>()});
  Network net = make_network(std::move(layers));
  std::vector<double> params = j.at("parameters").get<std::vector<double>>();
  require(params.size() == net.parameters.size(),
          "network_from_json: parameter count mismatch");
  net.parameters = std::move(params);
  net.train_mode = j.at("mode").get<std::string>() == "train";
  return net;
}

}  // namespace vrcrm
