#pragma once

#include <Eigen/Dense>

#include "post/common.hpp"

namespace post {

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
/// Series expansion for x < a + 1, Lentz continued fraction otherwise.
double regularized_gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double regularized_gamma_q(double a, double x);

/// Central chi-squared survival function Pr(X >= x), X ~ chi2(df).
double chi2_survival(double x, double df);

/// Noncentral chi-squared with df degrees of freedom and noncentrality nc.
struct NoncentralChiSq {
  double df;
  double nc;

  NoncentralChiSq(double df_, double nc_) : df(df_), nc(nc_) {
    if (!(df > 0.0) || !std::isfinite(df))
      throw std::invalid_argument("NoncentralChiSq: df must be positive");
    if (!(nc >= 0.0) || !std::isfinite(nc))
      throw std::invalid_argument("NoncentralChiSq: nc must be nonnegative");
  }
};

/// Pr(X >= x) for X ~ chi2_df(nc) via the Poisson-weighted central mixture
///   sum_j e^{-nc/2} (nc/2)^j / j! * SF_central(x; df + 2j).
/// The series is swept outward from the modal Poisson index and truncated
/// once the accumulated weight reaches 1 - tail_cutoff and the current term
/// falls below term_cutoff.
double noncentral_chi2_survival(double x, const NoncentralChiSq& dist,
                                double tail_cutoff = 1e-12,
                                double term_cutoff = 1e-14);

/// Inverse of the survival complement: returns x with
/// noncentral_chi2_survival(x) = 1 - p, by bisection on a bracket
/// [0, df + nc + 40*sqrt(2 df + 4 nc) + 40].
double noncentral_chi2_quantile(double p, const NoncentralChiSq& dist);

/// Log density of MVN(mean, cov) at x. cov must admit a Cholesky factor;
/// failure raises FactorizationError with the bad pivot index.
double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov);

/// Lower-triangular L with L L^T = cov. Requires symmetry within 1e-10 and
/// every pivot >= 1e-12.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov);

}  // namespace post
