#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "vrcrm/network.hpp"
#include "vrcrm/rng.hpp"
#include "vrcrm/tensor.hpp"

namespace vrcrm {

// Differentiable policy: a network ending in softmax over the actions.
struct SoftmaxPolicy {
  Network net;
  int n_actions = 0;
  std::string architecture;  // "synthetic_1x15" or "vrcrm_32_8"
};

// synthetic_1x15: dense(d,15) relu dense(15,K) softmax
// vrcrm_32_8:     dense(d,32) batchnorm relu dense(32,8) batchnorm relu
//                 dense(8,K) softmax
inline SoftmaxPolicy make_softmax_policy(const std::string& architecture, int context_dim,
                                         int n_actions, std::uint64_t seed) {
  std::vector<LayerSpec> layers;
  if (architecture == "synthetic_1x15") {
    layers = {{LayerKind::dense, context_dim, 15},
              {LayerKind::relu, 15, 15},
              {LayerKind::dense, 15, n_actions},
              {LayerKind::softmax, n_actions, n_actions}};
  } else if (architecture == "vrcrm_32_8") {
    layers = {{LayerKind::dense, context_dim, 32},
              {LayerKind::batchnorm, 32, 32},
              {LayerKind::relu, 32, 32},
              {LayerKind::dense, 32, 8},
              {LayerKind::batchnorm, 8, 8},
              {LayerKind::relu, 8, 8},
              {LayerKind::dense, 8, n_actions},
              {LayerKind::softmax, n_actions, n_actions}};
  } else {
    throw std::invalid_argument("unknown policy architecture: " + architecture);
  }
  SoftmaxPolicy p;
  p.net = make_network(std::move(layers));
  p.n_actions = n_actions;
  p.architecture = architecture;
  Rng rng(seed);
  init_parameters(p.net, rng);
  return p;
}

// Action distribution per context row.
inline Tensor2 policy_probs(SoftmaxPolicy& policy, const Tensor2& contexts) {
  return forward(policy.net, contexts);
}

}  // namespace vrcrm
