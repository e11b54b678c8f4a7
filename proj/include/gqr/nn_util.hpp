#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gqr/error.hpp"

namespace gqr {

/// Logistic function, clamped so the result stays strictly inside (0, 1).
inline double sigmoid(double z) {
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, 0x1.0p-1022, 1.0 - 0x1.0p-53);
}

/// -[y log s(z) + (1-y) log(1-s(z))] without forming s(z).
template <typename Real>
Real bce_with_logits(Real z, Real y) {
  return std::max(z, Real(0)) - y * z + std::log1p(std::exp(-std::abs(z)));
}

template <typename Real>
bool all_finite(std::span<const Real> values) {
  return std::all_of(values.begin(), values.end(), [](Real v) { return std::isfinite(v); });
}

inline std::size_t domain_index(std::span<const std::string> domains, const std::string& label) {
  auto it = std::find(domains.begin(), domains.end(), label);
  if (it == domains.end()) throw InvariantError("label '" + label + "' is not a configured domain");
  return static_cast<std::size_t>(it - domains.begin());
}

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments for one parameter block. update_range() touches only a
/// slice, which gives lazy (sparse-row) updates for embedding tables.
template <typename Real>
class AdamState {
 public:
  explicit AdamState(std::size_t n) : m_(n, Real(0)), v_(n, Real(0)) {}

  void update(const AdamHyper& hp, std::uint64_t step, std::span<Real> params,
              std::span<const Real> grad) {
    update_range(hp, step, params, grad, 0);
  }

  void update_range(const AdamHyper& hp, std::uint64_t step, std::span<Real> params,
                    std::span<const Real> grad, std::size_t offset) {
    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
    const Real lr = static_cast<Real>(hp.learning_rate * std::sqrt(c2) / c1);
    const Real b1 = static_cast<Real>(hp.beta1), b2 = static_cast<Real>(hp.beta2);
    const Real eps = static_cast<Real>(hp.epsilon * std::sqrt(c2));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Real& m = m_[offset + i];
      Real& v = v_[offset + i];
      const Real g = grad[i];
      m = b1 * m + (Real(1) - b1) * g;
      v = b2 * v + (Real(1) - b2) * g * g;
      params[i] -= lr * m / (std::sqrt(v) + eps);
    }
  }

 private:
  std::vector<Real> m_;
  std::vector<Real> v_;
};

}  // namespace gqr
