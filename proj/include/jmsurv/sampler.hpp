#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/kernels.hpp"
#include "jmsurv/layout.hpp"
#include "jmsurv/model.hpp"

namespace jmsurv {

using ChainRng = std::mt19937_64;

constexpr double kScalarTargetAcceptance = 0.44;
constexpr double kBlockTargetAcceptance = 0.23;

/// Robbins-Monro update of a log proposal scale toward the target acceptance
/// with step 1 / ceil(sweep / window).
double adapt(double log_scale, double accept_prob, double target, std::size_t sweep,
             std::size_t window = 50);

/// Gaussian random-walk proposal for a block of coordinates. During burn-in
/// the scale follows Robbins-Monro and, for blocks of dimension > 1, the
/// shape follows the empirical covariance of the visited states. freeze()
/// fixes both for the rest of the run.
class RandomWalkBlock {
 public:
  RandomWalkBlock() = default;
  RandomWalkBlock(std::vector<double> initial_sd, std::size_t window = 50);

  std::size_t dim() const { return static_cast<std::size_t>(chol_.rows()); }
  double target() const { return dim() == 1 ? kScalarTargetAcceptance : kBlockTargetAcceptance; }
  double log_scale() const { return log_scale_; }
  bool frozen() const { return frozen_; }

  void propose(std::span<const double> current, std::span<double> out, ChainRng& rng) const;
  /// Called once per proposal with min(1, exp(log ratio)).
  void record(double accept_prob, bool accepted, std::size_t sweep);
  /// Adds the block's current value to the covariance estimate (burn-in only).
  void observe(std::span<const double> value);
  void freeze();

  double acceptance_rate() const {
    return attempts_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(attempts_);
  }
  /// Proposal covariance actually in use (scale included).
  Eigen::MatrixXd proposal_covariance() const;

 private:
  Eigen::MatrixXd chol_;  // lower-triangular shape factor
  double log_scale_ = 0.0;
  std::size_t window_ = 50;
  bool frozen_ = false;
  std::size_t attempts_ = 0;
  std::size_t accepted_ = 0;
  // running covariance of visited states
  std::size_t seen_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;
  bool learned_ = false;
};

/// One Metropolis-within-Gibbs sweep over a generic target: each block is
/// updated in turn by a random-walk proposal on its coordinates. Returns the
/// log target of the final state. Used for test-harness posteriors.
double mwg_step(std::vector<double>& x, std::vector<std::vector<std::size_t>> const& blocks,
                std::vector<RandomWalkBlock>& proposals,
                const std::function<double(std::span<const double>)>& log_target,
                double current_log_target, ChainRng& rng, bool adapting, std::size_t sweep);

struct McmcConfig {
  std::size_t chains = 3;
  std::size_t burn_in = 50000;
  std::size_t iterations = 150000;
  std::size_t thin = 1;
  std::uint64_t base_seed = 20210720;
  std::vector<std::uint64_t> seeds;     // per chain; derived from base_seed when empty
  std::vector<std::string> monitored;   // diagnostics list; empty = population parameters
  std::size_t adapt_window = 50;

  std::vector<std::uint64_t> chain_seeds() const;
  std::size_t draws_per_chain() const { return iterations / thin; }
  void validate() const;

  static McmcConfig smoke();  // 2,000 burn-in / 5,000 estimation
  static McmcConfig paper();  // 50,000 burn-in / 150,000 estimation

  bool operator==(const McmcConfig&) const = default;
};

struct Chain {
  std::uint64_t seed = 0;
  std::size_t width = 0;       // parameters per draw
  std::vector<double> draws;   // row-major, one row per retained draw
  std::vector<double> loglik;  // longitudinal + survival log-likelihood per draw
  std::map<std::string, double> acceptance;
  std::size_t cap_events = 0;
  std::map<std::string, double> scales_at_freeze;
  std::map<std::string, double> scales_at_end;

  std::size_t size() const { return width == 0 ? 0 : draws.size() / width; }
  std::span<const double> row(std::size_t draw) const {
    return {draws.data() + draw * width, width};
  }
  double value(std::size_t draw, std::size_t param) const { return draws[draw * width + param]; }
};

struct PosteriorSamples {
  std::vector<Chain> chains;
  JointModelSpec spec;
  McmcConfig config;
  std::vector<std::string> names;
  std::vector<std::string> groups;

  std::size_t param_index(std::string_view name) const;
  /// Per-chain series of one parameter.
  std::vector<std::vector<double>> series(std::string_view name) const;
  std::size_t total_draws() const;
  /// Population parameter names (everything but per-patient random effects).
  std::vector<std::string> population_names() const;
};

/// Incremental Metropolis-within-Gibbs sampler for the joint model.
///
/// Random effects are held in centred form (theta0_i = intercept + b0_i,
/// theta1_i = beta1 + b1_i). Each population location parameter gets two
/// moves: one with the centred values fixed (changes only the random-effect
/// prior) and one that shifts them along (changes only the likelihood).
/// Per-patient likelihood terms are cached so that a patient update costs
/// O(visits + quadrature nodes).
class JointSampler {
 public:
  JointSampler(const JointModelSpec& spec, const CohortDataset& cohort,
               const ParameterState& initial);

  /// One full sweep. Proposal scales adapt until freeze(); learn_shape also
  /// feeds block covariance estimates.
  void sweep(ChainRng& rng, std::size_t sweep_index, bool learn_shape = false);
  void freeze();

  ParameterState state() const;
  double log_likelihood() const;
  double log_posterior() const;
  std::map<std::string, double> acceptance_rates() const;
  std::map<std::string, double> log_scales() const;
  std::size_t cap_events() const { return cap_events_; }

 private:
  void refresh_all();
  void survival_terms(std::span<const std::size_t> patients, std::span<const double> theta0,
                      std::span<const double> theta1, std::span<const double> log_scale,
                      std::span<const double> alpha, double shape,
                      std::span<const double> root_nodes);
  void rss_terms(std::span<const std::size_t> patients, std::span<const double> theta0,
                 std::span<const double> theta1);
  double survival_delta(std::span<const std::size_t> patients) const;
  double rss_delta(std::span<const std::size_t> patients) const;
  void commit_survival(std::span<const std::size_t> patients);
  void commit_rss(std::span<const std::size_t> patients);
  double survival_block_prior(double log_shape, std::span<const double> phi,
                              std::span<const double> hazard_alpha) const;
  std::vector<double> group_log_scale(std::span<const double> phi) const;
  std::vector<double> group_alpha(std::span<const double> hazard_alpha) const;
  double intercept_of(std::size_t patient) const;

  void update_intercepts(ChainRng& rng, std::size_t sweep, bool learn);
  void update_slope(ChainRng& rng, std::size_t sweep, bool learn);
  void update_sigma(ChainRng& rng, std::size_t sweep, bool learn);
  void update_omegas(ChainRng& rng, std::size_t sweep, bool learn);
  void update_patients(ChainRng& rng, std::size_t sweep, bool learn);
  void update_survival(ChainRng& rng, std::size_t sweep, bool learn);
  void update_hyper(ChainRng& rng, std::size_t sweep, bool learn);

  static bool accept(double log_ratio, RandomWalkBlock& block, ChainRng& rng, std::size_t sweep);

  JointModelSpec spec_;
  CohortArrays cohort_;
  GaussLegendre rule_;
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<std::size_t> all_;

  // population parameters
  std::vector<double> intercepts_;  // size 1, or K with group intercepts
  double beta1_ = 0.0;
  double log_sigma_ = 0.0;
  double log_omega0_ = 0.0;
  double log_omega1_ = 0.0;
  double log_shape_ = 0.0;
  std::vector<double> phi_;
  std::vector<double> hazard_alpha_;  // alpha (common), alpha_k (other), empty if fixed at 0
  double alpha_ = 0.0;                // exchangeable mean
  double log_tau_ = 0.0;

  // centred random effects
  std::vector<double> theta0_;
  std::vector<double> theta1_;

  // caches
  std::vector<double> rss_;
  std::vector<double> surv_;
  std::vector<std::uint8_t> caps_;
  std::vector<double> root_nodes_;
  std::size_t cap_events_ = 0;

  // proposals
  std::vector<RandomWalkBlock> intercept_shift_;
  std::vector<RandomWalkBlock> intercept_centred_;
  RandomWalkBlock slope_shift_;
  RandomWalkBlock slope_centred_;
  RandomWalkBlock sigma_block_;
  RandomWalkBlock omega0_block_;
  RandomWalkBlock omega1_block_;
  std::vector<RandomWalkBlock> patient_blocks_;
  RandomWalkBlock survival_block_;
  RandomWalkBlock alpha_block_;
  RandomWalkBlock tau_block_;

  // scratch
  std::vector<double> scratch_a_;
  std::vector<double> scratch_b_;
  std::vector<double> scratch_surv_;
  std::vector<std::uint8_t> scratch_caps_;
  std::vector<double> scratch_rss_;
  std::vector<double> scratch_roots_;
};

/// Overdispersed, in-support starting state with a finite log posterior.
ParameterState initialize_chain(const JointModelSpec& spec, const CohortDataset& cohort,
                                std::uint64_t seed);

/// Runs one chain to completion.
Chain run_chain(const JointModelSpec& spec, const CohortDataset& cohort, const McmcConfig& config,
                std::uint64_t seed);

/// Runs all chains (concurrently when threads are available); each chain is
/// a deterministic function of its seed.
PosteriorSamples run_chains(const JointModelSpec& spec, const CohortDataset& cohort,
                            const McmcConfig& config);

}  // namespace jmsurv
