#pragma once

#include <utility>
#include <vector>

#include "post/glm.hpp"
#include "post/penalties.hpp"

namespace post {

/// Result of a (penalized) maximum-likelihood fit on control-arm data.
/// sigma_hat is the per-sqrt(n) covariance of theta_hat: inverse observed
/// Fisher information on the active set, exact zeros elsewhere, so that
/// Var(theta_hat) ~ sigma_hat / n.
struct FittedModel {
  Eigen::VectorXd theta_hat;
  std::vector<int> active_set;
  double lambda = 0.0;
  Eigen::MatrixXd sigma_hat;
  bool converged = false;
  int iterations = 0;
  GlmFamily family;
  PenaltyConfig penalty;
};

/// Ridge-penalized fit: minimizes -loglik + (lambda_ridge/2) * |theta|^2
/// by IRLS. Returns the final iterate even when not converged.
Eigen::VectorXd fit_ridge(ObservationSpan control, const GlmFamily& family,
                          double lambda_ridge);

/// Ridge pilot with lambda_ridge chosen by BIC (effective degrees of
/// freedom) over a 10-point internal grid; feeds the AdaLasso weights.
Eigen::VectorXd ridge_pilot(ObservationSpan control, const GlmFamily& family);

/// AdaLasso weights w_j = 1 / (|pilot_j| + 1e-6).
Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot);

/// Penalized fit at a fixed lambda via IRLS-majorized coordinate descent.
/// The objective is the mean negative log-likelihood plus the penalty, so
/// lambda is on the per-observation scale. An AdaLasso config without
/// weights triggers an internal ridge pilot.
FittedModel fit_penalized(ObservationSpan control, const GlmFamily& family,
                          const PenaltyConfig& penalty, double lambda,
                          const Eigen::VectorXd* init = nullptr);

/// fit_penalized started from a ridge pilot of the same data; used by the
/// sequential layer so weakly penalized refits stay fast and deterministic.
FittedModel fit_penalized_warm(ObservationSpan control,
                               const GlmFamily& family,
                               const PenaltyConfig& penalty, double lambda);

/// Smallest lambda at which every penalized coordinate is zero, computed
/// from the null-model score.
double lambda_max(ObservationSpan control, const GlmFamily& family,
                  const PenaltyConfig& penalty);

/// Warm-started path over the grid (default: 50 log-spaced points from
/// lambda_max down to 0.001 * lambda_max); returns the BIC-minimizing
/// lambda and its fit, ties broken toward larger lambda. Path points that
/// fail to fit are skipped and counted in diagnostics().path_skips.
std::pair<double, FittedModel> select_lambda(
    ObservationSpan control, const GlmFamily& family,
    const PenaltyConfig& penalty,
    const std::vector<double>* grid = nullptr);

/// Unpenalized IRLS fit. Rank-deficient designs and separated logistic
/// samples raise errors rather than returning diverging estimates.
FittedModel fit_mle(ObservationSpan control, const GlmFamily& family);

/// Inverse observed Fisher information (1/n) sum V(mu_i) x_A x_A^T / a(phi)
/// on the active set, zero elsewhere.
Eigen::MatrixXd active_set_covariance(const FittedModel& model,
                                      ObservationSpan control);

/// Gradient of the mean negative log-likelihood at theta (canonical links).
Eigen::VectorXd nll_gradient(ObservationSpan control, const GlmFamily& family,
                             const Eigen::VectorXd& theta);

/// Mean negative log-likelihood plus penalty, the objective fit_penalized
/// minimizes.
double penalized_objective(ObservationSpan control, const GlmFamily& family,
                           const PenaltyConfig& penalty, double lambda,
                           const Eigen::VectorXd& theta);

}  // namespace post
