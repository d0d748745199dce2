#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"

namespace jmsurv {

/// Maximum-likelihood Weibull proportional hazards fit with tumour-group
/// indicators: h(t) = shape * exp(phi0 + phi_g) * t^(shape - 1).
struct WeibullFit {
  std::vector<std::string> groups;
  double shape = 1.0;
  std::vector<double> phi;     // phi[0] intercept, phi[k] contrast of group k
  double loglik = 0.0;
  Eigen::MatrixXd covariance;  // on the (log shape, phi) scale
  int iterations = 0;

  double log_scale(std::size_t group) const { return phi[0] + (group == 0 ? 0.0 : phi[group]); }
  /// (log shape, phi...) as one vector.
  Eigen::VectorXd estimate() const;
};

struct WeibullOptions {
  std::optional<double> fixed_shape;  // optimise phi only
  int max_iterations = 200;
  double tolerance = 1e-10;
};

double weibull_loglik(const std::vector<SurvivalRecord>& records,
                      const std::vector<std::string>& groups, const Eigen::VectorXd& theta);

Eigen::VectorXd weibull_gradient(const std::vector<SurvivalRecord>& records,
                                 const std::vector<std::string>& groups,
                                 const Eigen::VectorXd& theta);

WeibullFit fit_weibull_mle(const std::vector<SurvivalRecord>& records,
                           const std::vector<std::string>& groups,
                           const WeibullOptions& options = {});

}  // namespace jmsurv
