#include "post/distributions.hpp"

#include <cmath>
#include <limits>

namespace post {

Diagnostics& diagnostics() {
  static Diagnostics d;
  return d;
}

namespace {

constexpr double kGammaEps = 1e-15;
constexpr int kGammaMaxIter = 500;

// Series representation of P(a, x), valid (fast) for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < kGammaMaxIter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kGammaEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  constexpr double kFpMin = std::numeric_limits<double>::min() / kGammaEps;
  double b = x + 1.0 - a;
  double c = 1.0 / kFpMin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kGammaMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = b + an / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kGammaEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a))
    throw std::invalid_argument("regularized_gamma_p: a must be positive");
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::invalid_argument("regularized_gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a))
    throw std::invalid_argument("regularized_gamma_q: a must be positive");
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::invalid_argument("regularized_gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

double chi2_survival(double x, double df) {
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::invalid_argument("chi2_survival: x must be nonnegative finite");
  return regularized_gamma_q(df / 2.0, x / 2.0);
}

double noncentral_chi2_survival(double x, const NoncentralChiSq& dist,
                                double tail_cutoff, double term_cutoff) {
  if (!(x >= 0.0) || !std::isfinite(x))
    throw std::invalid_argument(
        "noncentral_chi2_survival: x must be nonnegative finite");
  if (dist.nc == 0.0) return chi2_survival(x, dist.df);

  const double half_nc = dist.nc / 2.0;
  // Poisson(half_nc) weights in log space so large nc cannot underflow.
  const auto log_weight = [&](long j) {
    if (j == 0) return -half_nc;
    return -half_nc + static_cast<double>(j) * std::log(half_nc) -
           std::lgamma(static_cast<double>(j) + 1.0);
  };
  const auto term = [&](long j) {
    const double w = std::exp(log_weight(j));
    return std::pair<double, double>(
        w, w * chi2_survival(x, dist.df + 2.0 * static_cast<double>(j)));
  };

  const long mode = static_cast<long>(std::floor(half_nc));
  double sf = 0.0;
  double cum_weight = 0.0;

  // Sweep outward from the modal index; weights shrink monotonically on
  // both sides, so each direction stops once the accumulated mass and the
  // current term satisfy the truncation rule.
  long lo = mode;
  long hi = mode + 1;
  bool lo_done = false;
  bool hi_done = false;
  for (long guard = 0; guard < 100000 && (!lo_done || !hi_done); ++guard) {
    if (!lo_done) {
      if (lo < 0) {
        lo_done = true;
      } else {
        const auto [w, t] = term(lo--);
        sf += t;
        cum_weight += w;
        lo_done = lo < 0 || (cum_weight >= 1.0 - tail_cutoff &&
                             (t < term_cutoff || w < term_cutoff));
      }
    }
    if (!hi_done) {
      const auto [w, t] = term(hi++);
      sf += t;
      cum_weight += w;
      hi_done = cum_weight >= 1.0 - tail_cutoff &&
                (t < term_cutoff || w < term_cutoff);
    }
  }
  // Remaining Poisson mass bounds the truncation error since SF <= 1.
  return std::min(1.0, sf + std::max(0.0, 1.0 - cum_weight));
}

double noncentral_chi2_quantile(double p, const NoncentralChiSq& dist) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument(
        "noncentral_chi2_quantile: p must lie in (0,1)");
  const double target = 1.0 - p;  // survival at the quantile
  double lo = 0.0;
  double hi = dist.df + dist.nc +
              40.0 * std::sqrt(2.0 * dist.df + 4.0 * dist.nc) + 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (noncentral_chi2_survival(mid, dist) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-13 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  const auto n = cov.rows();
  if (cov.cols() != n)
    throw std::invalid_argument("cholesky_factor: matrix must be square");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("cholesky_factor: matrix not symmetric");

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = cov(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d >= 1e-12))
      throw FactorizationError(
          "cholesky_factor: non-positive-definite matrix, pivot " +
              std::to_string(j) + " = " + std::to_string(d),
          static_cast<int>(j));
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      L(i, j) =
          (cov(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  return L;
}

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
  const auto k = x.size();
  if (mean.size() != k || cov.rows() != k || cov.cols() != k)
    throw std::invalid_argument("mvn_log_density: dimension mismatch");
  const Eigen::MatrixXd L = cholesky_factor(cov);
  const Eigen::VectorXd r = x - mean;
  const Eigen::VectorXd z =
      L.triangularView<Eigen::Lower>().solve(r);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(k) * kLog2Pi + log_det + z.squaredNorm());
}

}  // namespace post
