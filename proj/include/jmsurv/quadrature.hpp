#pragma once

#include <cstddef>
#include <vector>

namespace jmsurv {

/// Gauss-Legendre rule mapped to [0, 1]. Nodes ascending; weights sum to 1.
/// The graded variant applies x -> x^2 first, clustering nodes near 0 where
/// hazard integrands with a non-integer shape have a weak singularity.
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> graded_nodes;
  std::vector<double> graded_weights;

  explicit GaussLegendre(std::size_t n);
  std::size_t size() const { return nodes.size(); }
};

}  // namespace jmsurv
