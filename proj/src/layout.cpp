#include "jmsurv/layout.hpp"

#include "jmsurv/error.hpp"

namespace jmsurv {

ParameterLayout::ParameterLayout(const JointModelSpec& spec, const CohortDataset& cohort)
    : spec_(spec), patients_(cohort.size()), groups_(cohort.group_count()) {
  const auto& groups = cohort.groups;
  if (spec.group_intercepts) {
    for (const auto& g : groups) names_.push_back("beta0[" + g + "]");
  } else {
    names_.emplace_back("beta0");
  }
  names_.emplace_back("beta1");
  names_.emplace_back("sigma");
  names_.emplace_back("omega0");
  if (spec.random_slope) names_.emplace_back("omega1");
  names_.emplace_back("kappa");
  for (const auto& g : groups) names_.push_back("phi[" + g + "]");
  if (spec.structure != AssociationStructure::independent) names_.emplace_back("alpha");
  if (spec.structure != AssociationStructure::common) {
    for (const auto& g : groups) names_.push_back("alpha[" + g + "]");
  }
  if (spec.structure == AssociationStructure::exchangeable) names_.emplace_back("tau");
  population_size_ = names_.size();
  for (const auto& p : cohort.patients) names_.push_back("b0[" + p.survival.patient_id + "]");
  if (spec.random_slope) {
    for (const auto& p : cohort.patients) names_.push_back("b1[" + p.survival.patient_id + "]");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      throw InputError("duplicate parameter name " + names_[i]);
    }
  }
}

std::optional<std::size_t> ParameterLayout::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ParameterLayout::pack(const ParameterState& s, std::span<double> out) const {
  if (out.size() != names_.size()) throw InputError("parameter row has the wrong length");
  std::size_t k = 0;
  const auto& l = s.longitudinal;
  if (spec_.group_intercepts) {
    for (double b : l.group_intercepts) out[k++] = b;
  } else {
    out[k++] = l.beta0;
  }
  out[k++] = l.beta1;
  out[k++] = l.sigma;
  out[k++] = l.omega0;
  if (spec_.random_slope) out[k++] = l.omega1;
  out[k++] = s.survival.shape;
  for (double phi : s.survival.phi) out[k++] = phi;
  if (spec_.structure != AssociationStructure::independent) out[k++] = s.association.alpha;
  if (spec_.structure != AssociationStructure::common) {
    for (double a : s.association.alpha_k) out[k++] = a;
  }
  if (spec_.structure == AssociationStructure::exchangeable) out[k++] = s.association.tau;
  for (double b : l.b0) out[k++] = b;
  if (spec_.random_slope) {
    for (double b : l.b1) out[k++] = b;
  }
}

std::vector<double> ParameterLayout::pack(const ParameterState& state) const {
  std::vector<double> out(names_.size());
  pack(state, out);
  return out;
}

ParameterState ParameterLayout::unpack(std::span<const double> row) const {
  if (row.size() != names_.size()) throw InputError("parameter row has the wrong length");
  ParameterState s;
  auto& l = s.longitudinal;
  std::size_t k = 0;
  if (spec_.group_intercepts) {
    l.group_intercepts.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(groups_));
    k += groups_;
    l.beta0 = l.group_intercepts.front();
  } else {
    l.beta0 = row[k++];
  }
  l.beta1 = row[k++];
  l.sigma = row[k++];
  l.omega0 = row[k++];
  l.omega1 = spec_.random_slope ? row[k++] : 0.0;
  s.survival.shape = row[k++];
  s.survival.phi.assign(row.begin() + static_cast<std::ptrdiff_t>(k),
                        row.begin() + static_cast<std::ptrdiff_t>(k + groups_));
  k += groups_;
  auto& a = s.association;
  a.structure = spec_.structure;
  a.functional = spec_.functional;
  if (spec_.structure != AssociationStructure::independent) a.alpha = row[k++];
  if (spec_.structure != AssociationStructure::common) {
    a.alpha_k.assign(row.begin() + static_cast<std::ptrdiff_t>(k),
                     row.begin() + static_cast<std::ptrdiff_t>(k + groups_));
    k += groups_;
  } else {
    a.alpha_k.assign(groups_, a.alpha);
  }
  if (spec_.structure == AssociationStructure::exchangeable) a.tau = row[k++];
  l.b0.assign(row.begin() + static_cast<std::ptrdiff_t>(k),
              row.begin() + static_cast<std::ptrdiff_t>(k + patients_));
  k += patients_;
  if (spec_.random_slope) {
    l.b1.assign(row.begin() + static_cast<std::ptrdiff_t>(k),
                row.begin() + static_cast<std::ptrdiff_t>(k + patients_));
  } else {
    l.b1.assign(patients_, 0.0);
  }
  return s;
}

}  // namespace jmsurv
