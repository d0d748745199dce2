#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "jmsurv/data.hpp"
#include "jmsurv/model.hpp"

namespace jmsurv {

/// Flat, named view of a ParameterState for draw storage and export.
/// Naming: beta0 (or beta0[<group>]), beta1, sigma, omega0, omega1, kappa,
/// phi[<group>], alpha, alpha[<group>], tau, b0[<patient>], b1[<patient>].
/// phi[<reference group>] is the intercept; the other phi entries are
/// contrasts against it.
class ParameterLayout {
 public:
  ParameterLayout(const JointModelSpec& spec, const CohortDataset& cohort);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  /// Number of leading entries that are not per-patient random effects.
  std::size_t population_size() const { return population_size_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  void pack(const ParameterState& state, std::span<double> out) const;
  std::vector<double> pack(const ParameterState& state) const;
  ParameterState unpack(std::span<const double> row) const;

 private:
  JointModelSpec spec_;
  std::size_t patients_ = 0;
  std::size_t groups_ = 0;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t population_size_ = 0;
};

}  // namespace jmsurv
