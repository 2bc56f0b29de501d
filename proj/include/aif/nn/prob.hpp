#pragma once

// Closed-form probability utilities over diagonal Gaussians, Bernoullis and
// categorical distributions.

#include "aif/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aif::nn {

inline constexpr double kTwoPiE = 2.0 * M_PI * M_E;

// KL[N(mu1, var1) || N(mu2, var2)] summed over dimensions, in nats.
template <typename A, typename B, typename C, typename D>
double kl_diag_gaussians(const Eigen::DenseBase<A>& mu1, const Eigen::DenseBase<B>& var1,
                         const Eigen::DenseBase<C>& mu2, const Eigen::DenseBase<D>& var2) {
  if ((var1.derived().array() <= 0.0).any() || (var2.derived().array() <= 0.0).any())
    throw std::domain_error("kl_diag_gaussians: variances must be positive");
  const auto v1 = var1.derived().array();
  const auto v2 = var2.derived().array();
  const auto diff = mu1.derived().array() - mu2.derived().array();
  return 0.5 * ((v2 / v1).log() + (v1 + diff.square()) / v2 - 1.0).sum();
}

template <typename A>
double entropy_diag_gaussian(const Eigen::DenseBase<A>& var) {
  if ((var.derived().array() <= 0.0).any())
    throw std::domain_error("entropy_diag_gaussian: variances must be positive");
  return 0.5 * (kTwoPiE * var.derived().array()).log().sum();
}

inline double entropy_bernoulli(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("entropy_bernoulli: p must be in [0, 1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

template <typename A>
double entropy_bernoulli(const Eigen::DenseBase<A>& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) h += entropy_bernoulli(p.derived().coeff(i));
  return h;
}

// mu + sigma * eps with standard normal eps.
inline Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& var, Rng& rng) {
  Eigen::VectorXd out(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) out(i) = mu(i) + std::sqrt(var(i)) * standard_normal(rng);
  return out;
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = standard_normal(rng);
  return m;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  Eigen::VectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

// KL[q || p] between categorical distributions; p is floored at `floor` and
// renormalized first.
inline double kl_categorical(const Eigen::VectorXd& q, const Eigen::VectorXd& p, double floor = 1e-6) {
  Eigen::VectorXd pf = p.cwiseMax(floor);
  pf /= pf.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (q(i) > 0.0) kl += q(i) * std::log(q(i) / pf(i));
  return std::max(0.0, kl);
}

}  // namespace aif::nn
