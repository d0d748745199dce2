#include "jmsurv/weibull.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jmsurv/error.hpp"

namespace jmsurv {

namespace {

struct Prepared {
  std::vector<double> t;
  std::vector<double> log_t;
  std::vector<double> d;
  std::vector<std::size_t> g;
  std::size_t groups = 0;
};

Prepared prepare(const std::vector<SurvivalRecord>& records,
                 const std::vector<std::string>& groups) {
  if (groups.empty()) throw InputError("weibull fit: empty group list");
  Prepared p;
  p.groups = groups.size();
  for (const auto& r : records) {
    auto it = std::find(groups.begin(), groups.end(), r.tumour_group);
    if (it == groups.end()) {
      throw InputError("weibull fit: unknown tumour group '" + r.tumour_group + "'");
    }
    p.t.push_back(r.os_time);
    p.log_t.push_back(std::log(r.os_time));
    p.d.push_back(r.event ? 1.0 : 0.0);
    p.g.push_back(static_cast<std::size_t>(std::distance(groups.begin(), it)));
  }
  return p;
}

double loglik(const Prepared& p, const Eigen::VectorXd& theta) {
  const double kappa = std::exp(theta[0]);
  double ll = 0.0;
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    const double eta = theta[1] + (p.g[i] == 0 ? 0.0 : theta[1 + p.g[i]]);
    ll += p.d[i] * (theta[0] + (kappa - 1.0) * p.log_t[i] + eta) -
          std::exp(eta + kappa * p.log_t[i]);
  }
  return ll;
}

Eigen::VectorXd gradient(const Prepared& p, const Eigen::VectorXd& theta) {
  const double kappa = std::exp(theta[0]);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    const double eta = theta[1] + (p.g[i] == 0 ? 0.0 : theta[1 + p.g[i]]);
    const double cum = std::exp(eta + kappa * p.log_t[i]);
    grad[0] += p.d[i] * (1.0 + kappa * p.log_t[i]) - cum * kappa * p.log_t[i];
    const double dphi = p.d[i] - cum;
    grad[1] += dphi;
    if (p.g[i] != 0) grad[1 + static_cast<Eigen::Index>(p.g[i])] += dphi;
  }
  return grad;
}

Eigen::MatrixXd hessian(const Prepared& p, const Eigen::VectorXd& theta) {
  const double kappa = std::exp(theta[0]);
  const auto m = theta.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    const double eta = theta[1] + (p.g[i] == 0 ? 0.0 : theta[1 + p.g[i]]);
    const double cum = std::exp(eta + kappa * p.log_t[i]);
    const double kl = kappa * p.log_t[i];
    h(0, 0) += p.d[i] * kl - cum * (kl + kl * kl);
    std::vector<Eigen::Index> idx{1};
    if (p.g[i] != 0) idx.push_back(1 + static_cast<Eigen::Index>(p.g[i]));
    for (auto a : idx) {
      h(0, a) -= cum * kl;
      h(a, 0) -= cum * kl;
      for (auto b : idx) h(a, b) -= cum;
    }
  }
  return h;
}

Eigen::MatrixXd numerical_hessian(const Prepared& p, const Eigen::VectorXd& theta,
                                  const std::vector<bool>& free) {
  const auto m = theta.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
  const double step = 1e-5;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!free[static_cast<std::size_t>(j)]) continue;
    Eigen::VectorXd up = theta;
    Eigen::VectorXd down = theta;
    up[j] += step;
    down[j] -= step;
    h.col(j) = (gradient(p, up) - gradient(p, down)) / (2.0 * step);
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!free[static_cast<std::size_t>(j)]) h.row(j).setZero();
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

Eigen::VectorXd WeibullFit::estimate() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(phi.size() + 1));
  theta[0] = std::log(shape);
  for (std::size_t k = 0; k < phi.size(); ++k) theta[static_cast<Eigen::Index>(k + 1)] = phi[k];
  return theta;
}

double weibull_loglik(const std::vector<SurvivalRecord>& records,
                      const std::vector<std::string>& groups, const Eigen::VectorXd& theta) {
  return loglik(prepare(records, groups), theta);
}

Eigen::VectorXd weibull_gradient(const std::vector<SurvivalRecord>& records,
                                 const std::vector<std::string>& groups,
                                 const Eigen::VectorXd& theta) {
  return gradient(prepare(records, groups), theta);
}

WeibullFit fit_weibull_mle(const std::vector<SurvivalRecord>& records,
                           const std::vector<std::string>& groups,
                           const WeibullOptions& options) {
  const Prepared p = prepare(records, groups);
  const std::size_t k = p.groups;
  std::vector<double> deaths(k, 0.0);
  std::vector<double> exposure(k, 0.0);
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    deaths[p.g[i]] += p.d[i];
    exposure[p.g[i]] += p.t[i];
  }
  const double total_deaths = std::accumulate(deaths.begin(), deaths.end(), 0.0);
  if (total_deaths == 0.0) throw InputError("weibull fit: no events, scale is unidentifiable");
  for (std::size_t g = 0; g < k; ++g) {
    if (deaths[g] == 0.0) {
      throw NumericalError("weibull fit: group '" + groups[g] +
                           "' has no events, its coefficient diverges");
    }
  }
  if (options.fixed_shape && !(*options.fixed_shape > 0.0)) {
    throw InputError("weibull fit: fixed shape must be positive");
  }

  const auto m = static_cast<Eigen::Index>(k + 1);
  std::vector<bool> free(static_cast<std::size_t>(m), true);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
  if (options.fixed_shape) {
    theta[0] = std::log(*options.fixed_shape);
    free[0] = false;
  }
  theta[1] = std::log(deaths[0] / exposure[0]);
  for (std::size_t g = 1; g < k; ++g) {
    theta[static_cast<Eigen::Index>(g + 1)] = std::log(deaths[g] / exposure[g]) - theta[1];
  }

  Eigen::VectorXd mask(m);
  for (Eigen::Index j = 0; j < m; ++j) mask[j] = free[static_cast<std::size_t>(j)] ? 1.0 : 0.0;

  double ll = loglik(p, theta);
  int iter = 0;
  bool converged = false;
  for (; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd grad = gradient(p, theta).cwiseProduct(mask);
    Eigen::MatrixXd h = hessian(p, theta);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!free[static_cast<std::size_t>(j)]) {
        h.row(j).setZero();
        h.col(j).setZero();
        h(j, j) = -1.0;
      }
    }
    Eigen::VectorXd step = (-h).ldlt().solve(grad);
    if (!step.allFinite() || grad.dot(step) <= 0.0) step = grad * 1e-3;  // fall back to ascent
    double scale = 1.0;
    Eigen::VectorXd next = theta + step;
    double next_ll = loglik(p, next);
    while (!(next_ll >= ll - 1e-12) && scale > 1e-12) {
      scale *= 0.5;
      next = theta + scale * step;
      next_ll = loglik(p, next);
    }
    const double change = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    ll = next_ll;
    if (change < options.tolerance || grad.cwiseAbs().maxCoeff() < 1e-9) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (!converged || !std::isfinite(ll)) {
    throw NumericalError("weibull fit did not converge after " +
                         std::to_string(options.max_iterations) + " iterations");
  }

  Eigen::MatrixXd info = -numerical_hessian(p, theta, free);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (free[static_cast<std::size_t>(j)]) idx.push_back(j);
  }
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) {
      sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = info(idx[a], idx[b]);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("weibull fit: observed information is not positive definite");
  }
  Eigen::MatrixXd sub_cov =
      llt.solve(Eigen::MatrixXd::Identity(sub.rows(), sub.cols()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) {
      cov(idx[a], idx[b]) = sub_cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }

  WeibullFit fit;
  fit.groups = groups;
  fit.shape = std::exp(theta[0]);
  fit.phi.assign(theta.data() + 1, theta.data() + m);
  fit.loglik = ll;
  fit.covariance = 0.5 * (cov + cov.transpose());
  fit.iterations = iter;
  return fit;
}

}  // namespace jmsurv
