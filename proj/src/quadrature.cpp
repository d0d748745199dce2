#include "jmsurv/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "jmsurv/error.hpp"

namespace jmsurv {

GaussLegendre::GaussLegendre(std::size_t n) : nodes(n), weights(n) {
  if (n == 0) throw InputError("Gauss-Legendre rule needs at least one node");
  const auto nd = static_cast<double>(n);
  // Newton iteration on P_n from the Chebyshev-like initial guess; roots are
  // symmetric so only half are computed.
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const auto kd = static_cast<double>(k);
        const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      dp = nd * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const auto kd = static_cast<double>(k);
      const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : nd * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1]; i-th root is the i-th largest
    nodes[n - 1 - i] = 0.5 * (1.0 + x);
    nodes[i] = 0.5 * (1.0 - x);
    weights[n - 1 - i] = 0.5 * w;
    weights[i] = 0.5 * w;
  }
  graded_nodes.resize(n);
  graded_weights.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    graded_nodes[j] = nodes[j] * nodes[j];
    graded_weights[j] = 2.0 * nodes[j] * weights[j];
  }
}

}  // namespace jmsurv
