#include "jmsurv/sampler.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <sstream>

#include "jmsurv/error.hpp"
#include "jmsurv/rng.hpp"

namespace jmsurv {

namespace {

const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double sq(double x) { return x * x; }

// Gaussian log kernel without the normalising constant in x.
double normal_kernel(double x, double mean, double sd) { return -0.5 * sq((x - mean) / sd); }

}  // namespace

// ---------------------------------------------------------------------------
// Adaptive random-walk blocks

double adapt(double log_scale, double accept_prob, double target, std::size_t sweep,
             std::size_t window) {
  const std::size_t w = std::max<std::size_t>(window, 1);
  const std::size_t k = std::max<std::size_t>(1, (sweep + w - 1) / w);
  const double next = log_scale + (accept_prob - target) / static_cast<double>(k);
  return std::clamp(next, -30.0, 10.0);
}

RandomWalkBlock::RandomWalkBlock(std::vector<double> initial_sd, std::size_t window)
    : window_(window) {
  const auto d = static_cast<Eigen::Index>(initial_sd.size());
  if (d == 0) throw InputError("random-walk block needs at least one coordinate");
  chol_ = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) chol_(j, j) = initial_sd[static_cast<std::size_t>(j)];
  mean_ = Eigen::VectorXd::Zero(d);
  scatter_ = Eigen::MatrixXd::Zero(d, d);
}

void RandomWalkBlock::propose(std::span<const double> current, std::span<double> out,
                              ChainRng& rng) const {
  const auto d = chol_.rows();
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(d);
  for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
  const Eigen::VectorXd step = std::exp(log_scale_) * (chol_ * z);
  for (Eigen::Index j = 0; j < d; ++j) {
    out[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(j)] + step[j];
  }
}

void RandomWalkBlock::record(double accept_prob, bool accepted, std::size_t sweep) {
  ++attempts_;
  if (accepted) ++accepted_;
  if (!frozen_) log_scale_ = adapt(log_scale_, accept_prob, target(), sweep, window_);
}

void RandomWalkBlock::observe(std::span<const double> value) {
  const auto d = chol_.rows();
  if (frozen_ || d == 1) return;
  ++seen_;
  Eigen::VectorXd x(d);
  for (Eigen::Index j = 0; j < d; ++j) x[j] = value[static_cast<std::size_t>(j)];
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(seen_);
  scatter_ += delta * (x - mean_).transpose();

  const std::size_t needed = std::max<std::size_t>(200, 20 * static_cast<std::size_t>(d));
  if (seen_ < needed || seen_ % 100 != 0) return;
  Eigen::MatrixXd cov = scatter_ / static_cast<double>(seen_ - 1);
  cov *= sq(2.38) / static_cast<double>(d);
  const double ridge = 1e-10 * std::max(cov.diagonal().maxCoeff(), 1e-300);
  cov.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return;
  chol_ = llt.matrixL();
  if (!learned_) {
    learned_ = true;
    log_scale_ = 0.0;
  }
}

void RandomWalkBlock::freeze() {
  frozen_ = true;
  attempts_ = 0;
  accepted_ = 0;
}

Eigen::MatrixXd RandomWalkBlock::proposal_covariance() const {
  return std::exp(2.0 * log_scale_) * chol_ * chol_.transpose();
}

double mwg_step(std::vector<double>& x, std::vector<std::vector<std::size_t>> const& blocks,
                std::vector<RandomWalkBlock>& proposals,
                const std::function<double(std::span<const double>)>& log_target,
                double current_log_target, ChainRng& rng, bool adapting, std::size_t sweep) {
  std::vector<double> candidate = x;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& coords = blocks[b];
    std::vector<double> cur(coords.size());
    std::vector<double> next(coords.size());
    for (std::size_t j = 0; j < coords.size(); ++j) cur[j] = x[coords[j]];
    proposals[b].propose(cur, next, rng);
    candidate = x;
    for (std::size_t j = 0; j < coords.size(); ++j) candidate[coords[j]] = next[j];
    const double proposed = log_target(candidate);
    const double log_ratio = proposed - current_log_target;
    const double prob = log_ratio >= 0.0 ? 1.0 : (std::isnan(log_ratio) ? 0.0 : std::exp(log_ratio));
    const bool accepted = std::log(uniform_open01(rng)) < log_ratio;
    if (accepted) {
      x = candidate;
      current_log_target = proposed;
    }
    proposals[b].record(prob, accepted, sweep);
    if (adapting) {
      for (std::size_t j = 0; j < coords.size(); ++j) cur[j] = x[coords[j]];
      proposals[b].observe(cur);
    }
  }
  return current_log_target;
}

// ---------------------------------------------------------------------------
// Configuration and containers

std::vector<std::uint64_t> McmcConfig::chain_seeds() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(chains);
  for (std::size_t c = 0; c < chains; ++c) out[c] = derive_seed(base_seed, c);
  return out;
}

void McmcConfig::validate() const {
  if (chains < 1) throw InputError("mcmc: at least one chain is required");
  if (iterations == 0 || burn_in == 0) throw InputError("mcmc: iterations must be > 0");
  if (thin == 0) throw InputError("mcmc: thin must be > 0");
  if (iterations < thin) throw InputError("mcmc: iterations must be >= thin");
  if (!seeds.empty() && seeds.size() != chains) {
    throw InputError("mcmc: one seed per chain is required");
  }
  auto s = chain_seeds();
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw InputError("mcmc: chain seeds must be distinct");
  }
}

McmcConfig McmcConfig::smoke() {
  McmcConfig c;
  c.burn_in = 2000;
  c.iterations = 5000;
  return c;
}

McmcConfig McmcConfig::paper() { return McmcConfig{}; }

std::size_t PosteriorSamples::param_index(std::string_view name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InputError("unknown parameter '" + std::string(name) + "'");
  return static_cast<std::size_t>(std::distance(names.begin(), it));
}

std::vector<std::vector<double>> PosteriorSamples::series(std::string_view name) const {
  const std::size_t j = param_index(name);
  std::vector<std::vector<double>> out;
  out.reserve(chains.size());
  for (const auto& c : chains) {
    std::vector<double> s(c.size());
    for (std::size_t d = 0; d < c.size(); ++d) s[d] = c.value(d, j);
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t PosteriorSamples::total_draws() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<std::string> PosteriorSamples::population_names() const {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (n.rfind("b0[", 0) == 0 || n.rfind("b1[", 0) == 0) continue;
    out.push_back(n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Joint sampler

JointSampler::JointSampler(const JointModelSpec& spec, const CohortDataset& cohort,
                           const ParameterState& initial)
    : spec_(spec),
      cohort_(cohort),
      rule_(spec.quadrature_nodes),
      n_(cohort.size()),
      k_(cohort.group_count()) {
  spec_.validate();
  check_shape(initial, spec_, cohort);
  all_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) all_[i] = i;

  const auto& l = initial.longitudinal;
  intercepts_ = spec_.group_intercepts ? l.group_intercepts : std::vector<double>{l.beta0};
  beta1_ = l.beta1;
  log_sigma_ = std::log(l.sigma);
  log_omega0_ = std::log(l.omega0);
  log_omega1_ = spec_.random_slope ? std::log(l.omega1) : 0.0;
  log_shape_ = std::log(initial.survival.shape);
  phi_ = initial.survival.phi;
  const auto& a = initial.association;
  switch (spec_.structure) {
    case AssociationStructure::common:
      if (!spec_.association_fixed_zero) hazard_alpha_ = {a.alpha};
      break;
    case AssociationStructure::exchangeable:
      hazard_alpha_ = a.alpha_k;
      alpha_ = a.alpha;
      log_tau_ = std::log(a.tau);
      break;
    case AssociationStructure::independent:
      hazard_alpha_ = a.alpha_k;
      break;
  }

  theta0_.resize(n_);
  theta1_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    theta0_[i] = intercept_of(i) + l.b0[i];
    theta1_[i] = beta1_ + (spec_.random_slope ? l.b1[i] : 0.0);
  }

  const std::size_t w = 50;
  for (std::size_t c = 0; c < intercepts_.size(); ++c) {
    intercept_shift_.emplace_back(std::vector<double>{0.5}, w);
    intercept_centred_.emplace_back(std::vector<double>{0.5}, w);
  }
  slope_shift_ = RandomWalkBlock({0.02}, w);
  slope_centred_ = RandomWalkBlock({0.02}, w);
  sigma_block_ = RandomWalkBlock({0.05}, w);
  omega0_block_ = RandomWalkBlock({0.1}, w);
  omega1_block_ = RandomWalkBlock({0.1}, w);
  patient_blocks_.reserve(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    patient_blocks_.emplace_back(spec_.random_slope ? std::vector<double>{2.0, 0.05}
                                                    : std::vector<double>{2.0},
                                 w);
  }
  std::vector<double> surv_sd{0.05};
  for (std::size_t g = 0; g < k_; ++g) surv_sd.push_back(0.1);
  for (std::size_t j = 0; j < hazard_alpha_.size(); ++j) surv_sd.push_back(0.002);
  survival_block_ = RandomWalkBlock(surv_sd, w);
  alpha_block_ = RandomWalkBlock({0.002}, w);
  tau_block_ = RandomWalkBlock({0.3}, w);

  refresh_all();
  if (!std::isfinite(log_posterior())) {
    throw NumericalError("joint sampler: initial state has a non-finite log posterior");
  }
}

double JointSampler::intercept_of(std::size_t patient) const {
  return spec_.group_intercepts ? intercepts_[cohort_.group[patient]] : intercepts_[0];
}

std::vector<double> JointSampler::group_log_scale(std::span<const double> phi) const {
  std::vector<double> out(k_);
  for (std::size_t g = 0; g < k_; ++g) out[g] = phi[0] + (g == 0 ? 0.0 : phi[g]);
  return out;
}

std::vector<double> JointSampler::group_alpha(std::span<const double> hazard_alpha) const {
  if (spec_.structure == AssociationStructure::common) {
    return std::vector<double>(k_, hazard_alpha.empty() ? 0.0 : hazard_alpha[0]);
  }
  return {hazard_alpha.begin(), hazard_alpha.end()};
}

void JointSampler::refresh_all() {
  fill_root_nodes(rule_, std::exp(log_shape_), root_nodes_);
  rss_.assign(n_, 0.0);
  surv_.assign(n_, 0.0);
  caps_.assign(n_, 0);
  rss_terms(all_, theta0_, theta1_);
  commit_rss(all_);
  const auto ls = group_log_scale(phi_);
  const auto al = group_alpha(hazard_alpha_);
  survival_terms(all_, theta0_, theta1_, ls, al, std::exp(log_shape_), root_nodes_);
  commit_survival(all_);
}

void JointSampler::survival_terms(std::span<const std::size_t> patients,
                                  std::span<const double> theta0, std::span<const double> theta1,
                                  std::span<const double> log_scale, std::span<const double> alpha,
                                  double shape, std::span<const double> root_nodes) {
  scratch_surv_.resize(patients.size());
  scratch_caps_.resize(patients.size());
  SurvivalKernelParams params{shape,     std::log(shape), spec_.functional, log_scale,
                              alpha,     root_nodes,      rule_.graded_weights};
  survival_terms_parallel(params, cohort_, patients, theta0, theta1, scratch_surv_,
                          scratch_caps_);
}

void JointSampler::rss_terms(std::span<const std::size_t> patients,
                             std::span<const double> theta0, std::span<const double> theta1) {
  scratch_rss_.resize(patients.size());
  residual_ss_parallel(cohort_, patients, theta0, theta1, scratch_rss_);
}

double JointSampler::survival_delta(std::span<const std::size_t> patients) const {
  double d = 0.0;
  for (std::size_t k = 0; k < patients.size(); ++k) d += scratch_surv_[k] - surv_[patients[k]];
  return d;
}

double JointSampler::rss_delta(std::span<const std::size_t> patients) const {
  double d = 0.0;
  for (std::size_t k = 0; k < patients.size(); ++k) d += scratch_rss_[k] - rss_[patients[k]];
  return d;
}

void JointSampler::commit_survival(std::span<const std::size_t> patients) {
  for (std::size_t k = 0; k < patients.size(); ++k) {
    surv_[patients[k]] = scratch_surv_[k];
    caps_[patients[k]] = scratch_caps_[k];
  }
}

void JointSampler::commit_rss(std::span<const std::size_t> patients) {
  for (std::size_t k = 0; k < patients.size(); ++k) rss_[patients[k]] = scratch_rss_[k];
}

bool JointSampler::accept(double log_ratio, RandomWalkBlock& block, ChainRng& rng,
                          std::size_t sweep) {
  const double prob =
      std::isnan(log_ratio) ? 0.0 : (log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio));
  const bool accepted = std::log(uniform_open01(rng)) < log_ratio;
  block.record(prob, accepted, sweep);
  return accepted;
}

void JointSampler::update_intercepts(ChainRng& rng, std::size_t sweep, bool) {
  const double lo = spec_.priors.intercept_lower;
  const double hi = spec_.priors.intercept_upper;
  const double inv_2var = 0.5 * std::exp(-2.0 * log_sigma_);
  const double omega0 = std::exp(log_omega0_);
  const bool survival_depends = spec_.functional == AssociationFunctional::current_value;
  const auto ls = group_log_scale(phi_);
  const auto al = group_alpha(hazard_alpha_);
  const double shape = std::exp(log_shape_);

  for (std::size_t c = 0; c < intercepts_.size(); ++c) {
    std::span<const std::size_t> members =
        spec_.group_intercepts ? std::span<const std::size_t>(cohort_.group_members[c])
                               : std::span<const std::size_t>(all_);
    double proposed = 0.0;

    // shift: intercept and every member's centred intercept move together
    intercept_shift_[c].propose(std::span<const double>(&intercepts_[c], 1),
                                std::span<double>(&proposed, 1), rng);
    if (proposed > lo && proposed < hi) {
      const double delta = proposed - intercepts_[c];
      scratch_a_ = theta0_;
      for (auto i : members) scratch_a_[i] += delta;
      rss_terms(members, scratch_a_, theta1_);
      double log_ratio = -rss_delta(members) * inv_2var;
      if (survival_depends) {
        survival_terms(members, scratch_a_, theta1_, ls, al, shape, root_nodes_);
        log_ratio += survival_delta(members);
      }
      if (accept(log_ratio, intercept_shift_[c], rng, sweep)) {
        intercepts_[c] = proposed;
        theta0_.swap(scratch_a_);
        commit_rss(members);
        if (survival_depends) commit_survival(members);
      }
    } else {
      intercept_shift_[c].record(0.0, false, sweep);
    }

    // centred: only the random-effect prior changes
    intercept_centred_[c].propose(std::span<const double>(&intercepts_[c], 1),
                                  std::span<double>(&proposed, 1), rng);
    if (proposed > lo && proposed < hi) {
      double log_ratio = 0.0;
      for (auto i : members) {
        log_ratio += normal_kernel(theta0_[i], proposed, omega0) -
                     normal_kernel(theta0_[i], intercepts_[c], omega0);
      }
      if (accept(log_ratio, intercept_centred_[c], rng, sweep)) intercepts_[c] = proposed;
    } else {
      intercept_centred_[c].record(0.0, false, sweep);
    }
  }
}

void JointSampler::update_slope(ChainRng& rng, std::size_t sweep, bool) {
  const double lo = spec_.slope_lower();
  const double hi = spec_.slope_upper();
  const double inv_2var = 0.5 * std::exp(-2.0 * log_sigma_);
  const auto ls = group_log_scale(phi_);
  const auto al = group_alpha(hazard_alpha_);
  const double shape = std::exp(log_shape_);
  double proposed = 0.0;

  slope_shift_.propose(std::span<const double>(&beta1_, 1), std::span<double>(&proposed, 1), rng);
  if (proposed > lo && proposed < hi) {
    const double delta = proposed - beta1_;
    scratch_b_ = theta1_;
    for (auto& v : scratch_b_) v += delta;
    rss_terms(all_, theta0_, scratch_b_);
    survival_terms(all_, theta0_, scratch_b_, ls, al, shape, root_nodes_);
    const double log_ratio = -rss_delta(all_) * inv_2var + survival_delta(all_);
    if (accept(log_ratio, slope_shift_, rng, sweep)) {
      beta1_ = proposed;
      theta1_.swap(scratch_b_);
      commit_rss(all_);
      commit_survival(all_);
    }
  } else {
    slope_shift_.record(0.0, false, sweep);
  }

  if (!spec_.random_slope) return;
  const double omega1 = std::exp(log_omega1_);
  slope_centred_.propose(std::span<const double>(&beta1_, 1), std::span<double>(&proposed, 1),
                         rng);
  if (proposed > lo && proposed < hi) {
    double log_ratio = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      log_ratio += normal_kernel(theta1_[i], proposed, omega1) -
                   normal_kernel(theta1_[i], beta1_, omega1);
    }
    if (accept(log_ratio, slope_centred_, rng, sweep)) beta1_ = proposed;
  } else {
    slope_centred_.record(0.0, false, sweep);
  }
}

void JointSampler::update_sigma(ChainRng& rng, std::size_t sweep, bool) {
  double proposed = 0.0;
  sigma_block_.propose(std::span<const double>(&log_sigma_, 1), std::span<double>(&proposed, 1),
                       rng);
  if (!(std::exp(proposed) < spec_.priors.sigma_upper)) {
    sigma_block_.record(0.0, false, sweep);
    return;
  }
  const double rss = ordered_sum(rss_);
  const auto nobs = static_cast<double>(cohort_.obs_time.size());
  auto loglik = [&](double log_sigma) {
    return -nobs * log_sigma - 0.5 * rss * std::exp(-2.0 * log_sigma);
  };
  // + log_sigma: Jacobian of the log transform
  const double log_ratio = loglik(proposed) + proposed - loglik(log_sigma_) - log_sigma_;
  if (accept(log_ratio, sigma_block_, rng, sweep)) log_sigma_ = proposed;
}

void JointSampler::update_omegas(ChainRng& rng, std::size_t sweep, bool) {
  const double upper = spec_.priors.sd_upper;
  auto re_loglik = [&](const std::vector<double>& theta, double log_omega, bool slope) {
    const double inv_2var = 0.5 * std::exp(-2.0 * log_omega);
    double ss = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double mean = slope ? beta1_ : intercept_of(i);
      ss += sq(theta[i] - mean);
    }
    return -static_cast<double>(n_) * log_omega - ss * inv_2var;
  };
  double proposed = 0.0;
  omega0_block_.propose(std::span<const double>(&log_omega0_, 1),
                        std::span<double>(&proposed, 1), rng);
  if (std::exp(proposed) < upper) {
    const double log_ratio = re_loglik(theta0_, proposed, false) + proposed -
                             re_loglik(theta0_, log_omega0_, false) - log_omega0_;
    if (accept(log_ratio, omega0_block_, rng, sweep)) log_omega0_ = proposed;
  } else {
    omega0_block_.record(0.0, false, sweep);
  }
  if (!spec_.random_slope) return;
  omega1_block_.propose(std::span<const double>(&log_omega1_, 1),
                        std::span<double>(&proposed, 1), rng);
  if (std::exp(proposed) < upper) {
    const double log_ratio = re_loglik(theta1_, proposed, true) + proposed -
                             re_loglik(theta1_, log_omega1_, true) - log_omega1_;
    if (accept(log_ratio, omega1_block_, rng, sweep)) log_omega1_ = proposed;
  } else {
    omega1_block_.record(0.0, false, sweep);
  }
}

void JointSampler::update_patients(ChainRng& rng, std::size_t sweep, bool learn) {
  const double inv_2var = 0.5 * std::exp(-2.0 * log_sigma_);
  const double omega0 = std::exp(log_omega0_);
  const double omega1 = spec_.random_slope ? std::exp(log_omega1_) : 1.0;
  const auto ls = group_log_scale(phi_);
  const auto al = group_alpha(hazard_alpha_);
  const double shape = std::exp(log_shape_);
  SurvivalKernelParams params{shape, log_shape_, spec_.functional, ls, al, root_nodes_,
                              rule_.graded_weights};
  const bool slope = spec_.random_slope;

  double cur[2];
  double next[2];
  for (std::size_t i = 0; i < n_; ++i) {
    auto& block = patient_blocks_[i];
    cur[0] = theta0_[i];
    cur[1] = theta1_[i];
    const std::size_t d = slope ? 2 : 1;
    block.propose(std::span<const double>(cur, d), std::span<double>(next, d), rng);
    if (!slope) next[1] = theta1_[i];

    const double rss = residual_ss(cohort_, i, next[0], next[1]);
    std::uint8_t cap = 0;
    const double surv =
        survival_term(params, cohort_.os_time[i], cohort_.log_os_time[i], cohort_.event[i] != 0,
                      cohort_.group[i], next[0], next[1], cap);
    const double mean0 = intercept_of(i);
    double log_ratio = -(rss - rss_[i]) * inv_2var + (surv - surv_[i]) +
                       normal_kernel(next[0], mean0, omega0) - normal_kernel(cur[0], mean0, omega0);
    if (slope) {
      log_ratio += normal_kernel(next[1], beta1_, omega1) - normal_kernel(cur[1], beta1_, omega1);
    }
    if (accept(log_ratio, block, rng, sweep)) {
      theta0_[i] = next[0];
      theta1_[i] = next[1];
      rss_[i] = rss;
      surv_[i] = surv;
      caps_[i] = cap;
    }
    if (learn) {
      cur[0] = theta0_[i];
      cur[1] = theta1_[i];
      block.observe(std::span<const double>(cur, d));
    }
  }
}

double JointSampler::survival_block_prior(double log_shape, std::span<const double> phi,
                                          std::span<const double> hazard_alpha) const {
  const auto& pr = spec_.priors;
  // Exponential prior on the shape plus the log-transform Jacobian
  double lp = -pr.shape_rate * std::exp(log_shape) + log_shape;
  for (double p : phi) lp += normal_kernel(p, 0.0, pr.coefficient_sd);
  switch (spec_.structure) {
    case AssociationStructure::common:
    case AssociationStructure::independent:
      for (double a : hazard_alpha) lp += normal_kernel(a, 0.0, pr.coefficient_sd);
      break;
    case AssociationStructure::exchangeable: {
      const double tau = std::exp(log_tau_);
      for (double a : hazard_alpha) lp += normal_kernel(a, alpha_, tau);
      break;
    }
  }
  return lp;
}

void JointSampler::update_survival(ChainRng& rng, std::size_t sweep, bool learn) {
  const std::size_t dim = 1 + k_ + hazard_alpha_.size();
  std::vector<double> cur(dim);
  std::vector<double> next(dim);
  cur[0] = log_shape_;
  std::copy(phi_.begin(), phi_.end(), cur.begin() + 1);
  std::copy(hazard_alpha_.begin(), hazard_alpha_.end(),
            cur.begin() + 1 + static_cast<std::ptrdiff_t>(k_));
  survival_block_.propose(cur, next, rng);

  const std::span<const double> next_phi(next.data() + 1, k_);
  const std::span<const double> next_alpha(next.data() + 1 + k_, hazard_alpha_.size());
  const double shape = std::exp(next[0]);
  if (shape > 0.0 && std::isfinite(shape)) {
    fill_root_nodes(rule_, shape, scratch_roots_);
    const auto ls = group_log_scale(next_phi);
    const auto al = group_alpha(next_alpha);
    survival_terms(all_, theta0_, theta1_, ls, al, shape, scratch_roots_);
    const double log_ratio = survival_delta(all_) +
                             survival_block_prior(next[0], next_phi, next_alpha) -
                             survival_block_prior(log_shape_, phi_, hazard_alpha_);
    if (accept(log_ratio, survival_block_, rng, sweep)) {
      log_shape_ = next[0];
      phi_.assign(next_phi.begin(), next_phi.end());
      hazard_alpha_.assign(next_alpha.begin(), next_alpha.end());
      root_nodes_.swap(scratch_roots_);
      commit_survival(all_);
    }
  } else {
    survival_block_.record(0.0, false, sweep);
  }
  if (learn) {
    cur[0] = log_shape_;
    std::copy(phi_.begin(), phi_.end(), cur.begin() + 1);
    std::copy(hazard_alpha_.begin(), hazard_alpha_.end(),
              cur.begin() + 1 + static_cast<std::ptrdiff_t>(k_));
    survival_block_.observe(cur);
  }
}

void JointSampler::update_hyper(ChainRng& rng, std::size_t sweep, bool) {
  if (spec_.structure != AssociationStructure::exchangeable) return;
  const auto& pr = spec_.priors;
  auto group_term = [&](double mean, double log_tau) {
    const double tau = std::exp(log_tau);
    double s = 0.0;
    for (double a : hazard_alpha_) s += normal_kernel(a, mean, tau);
    return s - static_cast<double>(hazard_alpha_.size()) * log_tau;
  };
  double proposed = 0.0;
  alpha_block_.propose(std::span<const double>(&alpha_, 1), std::span<double>(&proposed, 1), rng);
  {
    const double log_ratio = normal_kernel(proposed, 0.0, pr.coefficient_sd) +
                             group_term(proposed, log_tau_) -
                             normal_kernel(alpha_, 0.0, pr.coefficient_sd) -
                             group_term(alpha_, log_tau_);
    if (accept(log_ratio, alpha_block_, rng, sweep)) alpha_ = proposed;
  }
  tau_block_.propose(std::span<const double>(&log_tau_, 1), std::span<double>(&proposed, 1), rng);
  {
    // half-normal prior on tau plus the log-transform Jacobian
    const double log_ratio = normal_kernel(std::exp(proposed), 0.0, pr.tau_sd) + proposed +
                             group_term(alpha_, proposed) -
                             normal_kernel(std::exp(log_tau_), 0.0, pr.tau_sd) - log_tau_ -
                             group_term(alpha_, log_tau_);
    if (accept(log_ratio, tau_block_, rng, sweep)) log_tau_ = proposed;
  }
}

void JointSampler::sweep(ChainRng& rng, std::size_t sweep_index, bool learn_shape) {
  update_intercepts(rng, sweep_index, learn_shape);
  update_slope(rng, sweep_index, learn_shape);
  update_sigma(rng, sweep_index, learn_shape);
  update_omegas(rng, sweep_index, learn_shape);
  update_patients(rng, sweep_index, learn_shape);
  update_survival(rng, sweep_index, learn_shape);
  update_hyper(rng, sweep_index, learn_shape);
  for (auto c : caps_) cap_events_ += c;
}

void JointSampler::freeze() {
  for (auto& b : intercept_shift_) b.freeze();
  for (auto& b : intercept_centred_) b.freeze();
  slope_shift_.freeze();
  slope_centred_.freeze();
  sigma_block_.freeze();
  omega0_block_.freeze();
  omega1_block_.freeze();
  for (auto& b : patient_blocks_) b.freeze();
  survival_block_.freeze();
  alpha_block_.freeze();
  tau_block_.freeze();
}

ParameterState JointSampler::state() const {
  ParameterState s;
  auto& l = s.longitudinal;
  if (spec_.group_intercepts) {
    l.group_intercepts = intercepts_;
    l.beta0 = intercepts_.front();
  } else {
    l.beta0 = intercepts_[0];
  }
  l.beta1 = beta1_;
  l.sigma = std::exp(log_sigma_);
  l.omega0 = std::exp(log_omega0_);
  l.omega1 = spec_.random_slope ? std::exp(log_omega1_) : 0.0;
  l.b0.resize(n_);
  l.b1.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    l.b0[i] = theta0_[i] - intercept_of(i);
    l.b1[i] = spec_.random_slope ? theta1_[i] - beta1_ : 0.0;
  }
  s.survival.shape = std::exp(log_shape_);
  s.survival.phi = phi_;
  auto& a = s.association;
  a.structure = spec_.structure;
  a.functional = spec_.functional;
  switch (spec_.structure) {
    case AssociationStructure::common:
      a.alpha = hazard_alpha_.empty() ? 0.0 : hazard_alpha_[0];
      a.alpha_k.assign(k_, a.alpha);
      break;
    case AssociationStructure::exchangeable:
      a.alpha = alpha_;
      a.alpha_k = hazard_alpha_;
      a.tau = std::exp(log_tau_);
      break;
    case AssociationStructure::independent:
      a.alpha_k = hazard_alpha_;
      break;
  }
  return s;
}

double JointSampler::log_likelihood() const {
  const auto nobs = static_cast<double>(cohort_.obs_time.size());
  const double longitudinal = -nobs * (log_sigma_ + kLogSqrt2Pi) -
                              0.5 * ordered_sum(rss_) * std::exp(-2.0 * log_sigma_);
  return longitudinal + ordered_sum(surv_);
}

double JointSampler::log_posterior() const {
  return log_likelihood() + log_prior(state(), spec_);
}

std::map<std::string, double> JointSampler::acceptance_rates() const {
  std::map<std::string, double> out;
  const bool grouped = spec_.group_intercepts;
  for (std::size_t c = 0; c < intercepts_.size(); ++c) {
    const std::string suffix = grouped ? "[" + std::to_string(c) + "]" : "";
    out["beta0" + suffix + ":shift"] = intercept_shift_[c].acceptance_rate();
    out["beta0" + suffix + ":centred"] = intercept_centred_[c].acceptance_rate();
  }
  out["beta1:shift"] = slope_shift_.acceptance_rate();
  if (spec_.random_slope) {
    out["beta1:centred"] = slope_centred_.acceptance_rate();
    out["omega1"] = omega1_block_.acceptance_rate();
  }
  out["sigma"] = sigma_block_.acceptance_rate();
  out["omega0"] = omega0_block_.acceptance_rate();
  double mean = 0.0;
  for (const auto& b : patient_blocks_) mean += b.acceptance_rate();
  out["random_effects"] = n_ == 0 ? 0.0 : mean / static_cast<double>(n_);
  out["survival"] = survival_block_.acceptance_rate();
  if (spec_.structure == AssociationStructure::exchangeable) {
    out["alpha"] = alpha_block_.acceptance_rate();
    out["tau"] = tau_block_.acceptance_rate();
  }
  return out;
}

std::map<std::string, double> JointSampler::log_scales() const {
  std::map<std::string, double> out;
  for (std::size_t c = 0; c < intercepts_.size(); ++c) {
    out["beta0:shift:" + std::to_string(c)] = intercept_shift_[c].log_scale();
    out["beta0:centred:" + std::to_string(c)] = intercept_centred_[c].log_scale();
  }
  out["beta1:shift"] = slope_shift_.log_scale();
  out["beta1:centred"] = slope_centred_.log_scale();
  out["sigma"] = sigma_block_.log_scale();
  out["omega0"] = omega0_block_.log_scale();
  out["omega1"] = omega1_block_.log_scale();
  double sum = 0.0;
  for (const auto& b : patient_blocks_) sum += b.log_scale();
  out["random_effects:sum"] = sum;
  out["survival"] = survival_block_.log_scale();
  out["alpha"] = alpha_block_.log_scale();
  out["tau"] = tau_block_.log_scale();
  return out;
}

// ---------------------------------------------------------------------------
// Chains

ParameterState initialize_chain(const JointModelSpec& spec, const CohortDataset& cohort,
                                std::uint64_t seed) {
  spec.validate();
  ChainRng rng(derive_seed(seed, 0x1A17));
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  std::uniform_real_distribution<double> small(-1.0, 1.0);
  const auto& pr = spec.priors;
  for (int attempt = 0; attempt < 100; ++attempt) {
    ParameterState s = make_state(spec, cohort);
    auto& l = s.longitudinal;
    const double intercept_mid = 0.5 * (pr.intercept_lower + pr.intercept_upper);
    l.beta0 = intercept_mid * jitter(rng);
    for (auto& b : l.group_intercepts) b = intercept_mid * jitter(rng);
    const double slope_mid = 0.5 * (spec.slope_lower() + spec.slope_upper());
    l.beta1 = slope_mid == 0.0 ? 0.2 * small(rng) : slope_mid * jitter(rng);
    l.sigma = 0.5 * pr.sigma_upper * jitter(rng);
    l.omega0 = 0.5 * pr.sd_upper * jitter(rng);
    l.omega1 = spec.random_slope ? 0.5 * pr.sd_upper * jitter(rng) : 0.0;
    s.survival.shape = jitter(rng);
    s.survival.phi[0] = -5.0 * jitter(rng);
    for (std::size_t g = 1; g < s.survival.phi.size(); ++g) s.survival.phi[g] = 0.2 * small(rng);
    auto& a = s.association;
    a.alpha = spec.association_fixed_zero ? 0.0 : 0.01 * small(rng);
    for (auto& ak : a.alpha_k) {
      ak = spec.structure == AssociationStructure::common ? a.alpha : a.alpha + 0.01 * small(rng);
    }
    if (spec.structure == AssociationStructure::exchangeable) a.tau = 0.05 * jitter(rng);
    if (std::isfinite(log_posterior(s, cohort, spec))) return s;
  }
  throw NumericalError("could not find a starting state with finite log posterior in 100 attempts");
}

namespace {

std::string dump_state(const ParameterState& s) {
  std::ostringstream os;
  os.precision(10);
  os << "beta0=" << s.longitudinal.beta0 << " beta1=" << s.longitudinal.beta1
     << " sigma=" << s.longitudinal.sigma << " omega0=" << s.longitudinal.omega0
     << " omega1=" << s.longitudinal.omega1 << " kappa=" << s.survival.shape << " phi=[";
  for (double p : s.survival.phi) os << p << ' ';
  os << "] alpha=" << s.association.alpha << " tau=" << s.association.tau;
  return os.str();
}

}  // namespace

Chain run_chain(const JointModelSpec& spec, const CohortDataset& cohort, const McmcConfig& config,
                std::uint64_t seed) {
  const ParameterLayout layout(spec, cohort);
  ChainRng rng(seed);
  JointSampler sampler(spec, cohort, initialize_chain(spec, cohort, seed));

  const std::size_t learn_from = config.burn_in / 4;
  for (std::size_t s = 1; s <= config.burn_in; ++s) sampler.sweep(rng, s, s > learn_from);
  sampler.freeze();

  Chain chain;
  chain.seed = seed;
  chain.width = layout.size();
  chain.scales_at_freeze = sampler.log_scales();
  chain.draws.reserve(config.draws_per_chain() * chain.width);
  chain.loglik.reserve(config.draws_per_chain());
  std::vector<double> row(chain.width);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    sampler.sweep(rng, config.burn_in + it);
    if (it % config.thin != 0) continue;
    const double ll = sampler.log_likelihood();
    if (!std::isfinite(ll)) {
      throw NumericalError("non-finite log-likelihood at iteration " + std::to_string(it) +
                           " of chain seeded " + std::to_string(seed) + ": " +
                           dump_state(sampler.state()));
    }
    layout.pack(sampler.state(), row);
    chain.draws.insert(chain.draws.end(), row.begin(), row.end());
    chain.loglik.push_back(ll);
  }
  chain.acceptance = sampler.acceptance_rates();
  chain.cap_events = sampler.cap_events();
  chain.scales_at_end = sampler.log_scales();
  return chain;
}

PosteriorSamples run_chains(const JointModelSpec& spec, const CohortDataset& cohort,
                            const McmcConfig& config) {
  spec.validate();
  config.validate();
  const auto seeds = config.chain_seeds();
  PosteriorSamples out;
  out.spec = spec;
  out.config = config;
  out.names = ParameterLayout(spec, cohort).names();
  out.groups = cohort.groups;
  out.chains.resize(seeds.size());

  std::vector<std::exception_ptr> errors(seeds.size());
  const auto n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    try {
      out.chains[static_cast<std::size_t>(c)] =
          run_chain(spec, cohort, config, seeds[static_cast<std::size_t>(c)]);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace jmsurv
