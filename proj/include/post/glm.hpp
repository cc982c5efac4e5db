#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "post/common.hpp"

namespace post {

enum class FamilyKind { GaussianIdentity, BernoulliLogit, PoissonLog };

/// Exponential-family model with canonical link. The dispersion a(phi) is
/// fixed and known; it is never estimated. Bernoulli and Poisson pin it to 1.
struct GlmFamily {
  FamilyKind kind = FamilyKind::GaussianIdentity;
  double dispersion = 1.0;

  static GlmFamily gaussian(double dispersion = 1.0);
  static GlmFamily bernoulli();
  static GlmFamily poisson();
};

/// One subject: response, covariate vector with x[0] = 1, and arm indicator
/// (1 = treatment, 0 = control).
struct Observation {
  double y = 0.0;
  Eigen::VectorXd x;
  int arm = 0;
};

using ObservationSpan = std::span<const Observation>;

/// mu = g^{-1}(eta). The logit branch is overflow-safe; the log link clamps
/// eta at 700 before exponentiating and bumps the saturation counter.
double inverse_link(const GlmFamily& family, double eta);

/// b''(gamma(mu)). Floored at 1e-10 (counted) so IRLS weights stay usable.
double variance_function(const GlmFamily& family, double mu);

/// Throws if y lies outside the family's response domain.
void validate_response(const GlmFamily& family, double y);

/// Exact log-likelihood of the accumulated sample under
/// eta_i = theta'x_i + (beta'x_i) a_i, including the data-only c(y, phi)
/// terms so differences and ratios across parameter values are exact.
double log_likelihood(const GlmFamily& family, ObservationSpan data,
                      const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& beta);

/// Log-likelihood of a single observation at linear predictor eta.
double log_likelihood_term(const GlmFamily& family, double y, double eta);

}  // namespace post
