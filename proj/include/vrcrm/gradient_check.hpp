#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vrcrm/network.hpp"

namespace vrcrm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool pass = false;
};

// Compares an analytic parameter gradient against central finite
// differences of the loss. Parameters (including batchnorm running stats)
// are snapshotted and restored around every evaluation, so forward-pass
// side effects do not leak between probes.
inline GradCheckReport gradient_check(Network& net,
                                      const std::function<double(Network&)>& loss,
                                      const std::function<std::vector<double>(Network&)>& analytic,
                                      double tolerance, double h = 1e-5) {
  const std::vector<double> saved = net.parameters;
  const double base = loss(net);
  net.parameters = saved;
  if (!std::isfinite(base)) throw std::runtime_error("gradient_check: non-finite loss");

  std::vector<double> grad = analytic(net);
  net.parameters = saved;
  if (grad.size() != net.parameters.size())
    throw std::invalid_argument("gradient_check: gradient size mismatch");

  GradCheckReport report;
  for (std::size_t i = 0; i < saved.size(); ++i) {
    net.parameters = saved;
    net.parameters[i] = saved[i] + h;
    const double up = loss(net);
    net.parameters = saved;
    net.parameters[i] = saved[i] - h;
    const double dn = loss(net);
    net.parameters = saved;
    const double fd = (up - dn) / (2.0 * h);
    // floor keeps finite-difference round-off on near-zero entries from
    // registering as large relative error
    const double denom = std::max({1e-5, std::fabs(fd), std::fabs(grad[i])});
    const double rel = std::fabs(fd - grad[i]) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace vrcrm
