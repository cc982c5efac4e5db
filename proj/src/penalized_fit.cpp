#include "post/penalized_fit.hpp"

#include "post/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace post {

namespace {

constexpr double kRidgeTol = 1e-8;
constexpr int kRidgeMaxIter = 200;
constexpr double kCdTol = 1e-9;
constexpr int kCdMaxCycles = 200;
constexpr double kOuterTol = 1e-7;
constexpr int kOuterMaxIter = 1000;
constexpr int kMleMaxIter = 200;
constexpr double kSeparationEta = 30.0;

struct Design {
  Eigen::MatrixXd X;  // n x (p+1), first column all ones
  Eigen::VectorXd y;
  long n = 0;
  int dim = 0;  // p+1
};

Design build_design(ObservationSpan data, const GlmFamily& family,
                    long min_obs) {
  if (static_cast<long>(data.size()) < min_obs)
    throw std::invalid_argument("fit: need at least " +
                                std::to_string(min_obs) + " observations");
  const auto dim = data[0].x.size();
  Design d;
  d.n = static_cast<long>(data.size());
  d.dim = static_cast<int>(dim);
  d.X.resize(d.n, dim);
  d.y.resize(d.n);
  for (long i = 0; i < d.n; ++i) {
    const Observation& obs = data[static_cast<size_t>(i)];
    if (obs.arm != 0)
      throw std::invalid_argument("fit: expected control-arm data (arm == 0)");
    if (obs.x.size() != dim)
      throw std::invalid_argument("fit: inconsistent covariate length");
    if (obs.x(0) != 1.0)
      throw std::invalid_argument("fit: x[0] must be the intercept 1");
    validate_response(family, obs.y);
    d.X.row(i) = obs.x.transpose();
    d.y(i) = obs.y;
  }
  return d;
}

void check_eta_finite(const Eigen::VectorXd& eta, const GlmFamily& family,
                      int iteration) {
  const double m = eta.cwiseAbs().maxCoeff();
  // The log link overflows long before the others become unusable.
  const double limit = family.kind == FamilyKind::PoissonLog ? 250.0 : 1e8;
  if (!std::isfinite(m) || m > limit) {
    std::ostringstream os;
    os << "fit diverged: |eta| reached " << m << " at iteration " << iteration;
    throw FittingError(os.str(), iteration);
  }
}

// Floored IRLS quantities at theta: weights w = V(mu), working response
// z = eta + (y - mu)/V(mu). Throws FittingError once the linear predictor
// leaves the family's usable range.
void irls_quantities(const Design& d, const GlmFamily& family,
                     const Eigen::VectorXd& theta, Eigen::VectorXd& eta,
                     Eigen::VectorXd& w, Eigen::VectorXd& z,
                     int iteration) {
  eta = d.X * theta;
  check_eta_finite(eta, family, iteration);
  w.resize(d.n);
  z.resize(d.n);
  for (long i = 0; i < d.n; ++i) {
    const double mu = inverse_link(family, eta(i));
    const double v = variance_function(family, mu);
    w(i) = v;
    z(i) = eta(i) + (d.y(i) - mu) / v;
  }
}

double sum_log_likelihood(const Design& d, const GlmFamily& family,
                          const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = d.X * theta;
  double ll = 0.0;
  for (long i = 0; i < d.n; ++i)
    ll += log_likelihood_term(family, d.y(i), eta(i));
  return ll;
}

std::vector<int> nonzero_indices(const Eigen::VectorXd& theta) {
  std::vector<int> idx;
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    if (theta(j) != 0.0) idx.push_back(static_cast<int>(j));
  return idx;
}

// Observed Fisher information block (1/(n a)) sum V(mu_i) x_A x_A^T.
Eigen::MatrixXd information_block(const Design& d, const GlmFamily& family,
                                  const Eigen::VectorXd& theta,
                                  const std::vector<int>& coords) {
  const Eigen::VectorXd eta = d.X * theta;
  const int k = static_cast<int>(coords.size());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd xa(k);
  for (long i = 0; i < d.n; ++i) {
    const double v = variance_function(family, inverse_link(family, eta(i)));
    for (int c = 0; c < k; ++c) xa(c) = d.X(i, coords[static_cast<size_t>(c)]);
    info.selfadjointView<Eigen::Lower>().rankUpdate(xa, v);
  }
  info = info.selfadjointView<Eigen::Lower>();
  info /= static_cast<double>(d.n) * family.dispersion;
  return info;
}

Eigen::MatrixXd covariance_from_active(const Design& d,
                                       const GlmFamily& family,
                                       const Eigen::VectorXd& theta,
                                       const std::vector<int>& active) {
  const int dim = d.dim;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(dim, dim);
  if (active.empty()) return sigma;
  const Eigen::MatrixXd info = information_block(d, family, theta, active);
  Eigen::MatrixXd inv;
  try {
    const Eigen::MatrixXd L = cholesky_factor(info);
    inv = L.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(info.rows(), info.cols()));
    inv = L.transpose().triangularView<Eigen::Upper>().solve(inv);
  } catch (const FactorizationError& e) {
    std::vector<int> cols;
    for (int c = 0; c <= e.pivot_index && c < static_cast<int>(active.size());
         ++c)
      cols.push_back(active[static_cast<size_t>(c)]);
    throw RankDeficiencyError(
        "active-set information is singular near coordinate " +
            std::to_string(active[static_cast<size_t>(e.pivot_index)]),
        cols);
  }
  inv = 0.5 * (inv + inv.transpose()).eval();
  for (size_t r = 0; r < active.size(); ++r)
    for (size_t c = 0; c < active.size(); ++c)
      sigma(active[r], active[c]) =
          inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return sigma;
}

// Coordinate descent on the weighted least-squares surrogate at fixed
// (w, z). Residual updates keep each coordinate visit O(n); after the first
// full sweep only coordinates that moved are revisited until stable, then a
// full sweep verifies optimality.
struct CdWorkspace {
  Eigen::VectorXd r;       // working residual z - X theta
  Eigen::VectorXd wr;      // elementwise w .* r
  Eigen::VectorXd v;       // curvature per coordinate
};

double cd_visit(const Design& d, const Eigen::VectorXd& w, double na,
                double lambda, const PenaltyConfig& cfg, int j,
                Eigen::VectorXd& theta, CdWorkspace& ws) {
  const double vj = ws.v(j);
  if (vj < 1e-12) return 0.0;  // column carries no information
  const double zj = d.X.col(j).dot(ws.wr) / na + vj * theta(j);
  const double updated = threshold_update(zj, vj, lambda, cfg, j);
  const double delta = updated - theta(j);
  if (delta != 0.0) {
    ws.r -= d.X.col(j) * delta;
    ws.wr = w.cwiseProduct(ws.r);
    theta(j) = updated;
  }
  return std::abs(delta);
}

void cd_solve(const Design& d, const Eigen::VectorXd& w,
              const Eigen::VectorXd& z, double dispersion, double lambda,
              const PenaltyConfig& cfg, Eigen::VectorXd& theta) {
  const double na = static_cast<double>(d.n) * dispersion;
  CdWorkspace ws;
  ws.v.resize(d.dim);
  for (int j = 0; j < d.dim; ++j)
    ws.v(j) = d.X.col(j).cwiseAbs2().dot(w) / na;
  ws.r = z - d.X * theta;
  ws.wr = w.cwiseProduct(ws.r);

  for (int round = 0; round < kCdMaxCycles; ++round) {
    // Full sweep.
    double max_delta = 0.0;
    for (int j = 0; j < d.dim; ++j)
      max_delta = std::max(max_delta, cd_visit(d, w, na, lambda, cfg, j,
                                               theta, ws));
    if (max_delta < kCdTol) return;
    // Iterate the current active set to convergence.
    std::vector<int> active = nonzero_indices(theta);
    for (int cycle = 0; cycle < kCdMaxCycles; ++cycle) {
      double amax = 0.0;
      for (int j : active)
        amax = std::max(amax, cd_visit(d, w, na, lambda, cfg, j, theta, ws));
      if (amax < kCdTol) break;
    }
  }
}

Eigen::VectorXd ridge_pilot_impl(const Design& d, const GlmFamily& family);

FittedModel fit_penalized_impl(const Design& d, const GlmFamily& family,
                               const PenaltyConfig& cfg, double lambda,
                               const Eigen::VectorXd* init) {
  Eigen::VectorXd theta =
      init != nullptr ? *init : Eigen::VectorXd::Zero(d.dim);
  if (theta.size() != d.dim)
    throw std::invalid_argument("fit_penalized: init length mismatch");
  const double n = static_cast<double>(d.n);

  const auto objective = [&](const Eigen::VectorXd& t) {
    double obj = -sum_log_likelihood(d, family, t) / n;
    for (int j = 0; j < d.dim; ++j)
      obj += penalty_value(t(j), lambda, cfg, j);
    return obj;
  };

  FittedModel model;
  model.lambda = lambda;
  model.family = family;
  model.penalty = cfg;

  Eigen::VectorXd eta, w, z;
  double prev_obj = objective(theta);
  int outer = 0;
  bool converged = false;
  for (; outer < kOuterMaxIter && !converged; ++outer) {
    irls_quantities(d, family, theta, eta, w, z, outer);
    const Eigen::VectorXd theta_before = theta;
    cd_solve(d, w, z, family.dispersion, lambda, cfg, theta);

    const double obj = objective(theta);
    if (obj > prev_obj + 1e-9) diagnostics().majorization_increases++;
    prev_obj = obj;
    converged = (theta - theta_before).cwiseAbs().maxCoeff() < kOuterTol;
  }
  model.converged = converged;

  if (!theta.allFinite())
    throw FittingError("fit_penalized produced non-finite coefficients",
                       outer);
  model.theta_hat = theta;
  model.iterations = outer;
  model.active_set = nonzero_indices(theta);
  model.sigma_hat = covariance_from_active(d, family, theta, model.active_set);
  return model;
}

double lambda_max_impl(const Design& d, const GlmFamily& family,
                       const PenaltyConfig& penalty) {
  // Null-model score: gradient of the mean negative log-likelihood at 0.
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d.dim);
  const double mu0 = inverse_link(family, 0.0);
  for (long i = 0; i < d.n; ++i)
    g -= d.X.row(i).transpose() * (d.y(i) - mu0);
  g /= static_cast<double>(d.n) * family.dispersion;

  double lam = 0.0;
  for (int j = penalty.penalize_intercept ? 0 : 1; j < d.dim; ++j) {
    const double w =
        penalty.kind == PenaltyKind::AdaLasso ? penalty.weight(j) : 1.0;
    if (w < 1e-12) continue;  // effectively unpenalized coordinate
    lam = std::max(lam, std::abs(g(j)) / w);
  }
  return lam;
}

Eigen::VectorXd ridge_pilot_impl(const Design& d, const GlmFamily& family) {
  const double n = static_cast<double>(d.n);
  const double a = family.dispersion;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d.dim, d.dim);

  const bool gaussian = family.kind == FamilyKind::GaussianIdentity;
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  if (gaussian) {
    xtx = d.X.transpose() * d.X / a;
    xty = d.X.transpose() * d.y / a;
  }

  double best_bic = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(d.dim);
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(d.dim);
  // 10-point grid of per-observation ridge strengths, strongest first so
  // BIC ties resolve toward heavier shrinkage.
  for (int k = 9; k >= 0; --k) {
    const double lambda_ridge = std::pow(10.0, -4.0 + 5.0 * k / 9.0) * n;
    Eigen::VectorXd theta;
    Eigen::MatrixXd xtwx;
    try {
      if (gaussian) {
        theta = (xtx + lambda_ridge * eye).ldlt().solve(xty);
        xtwx = xtx;
      } else {
        theta = warm;
        Eigen::VectorXd eta, w, z;
        for (int iter = 0; iter < kRidgeMaxIter; ++iter) {
          irls_quantities(d, family, theta, eta, w, z, iter);
          xtwx = d.X.transpose() * w.asDiagonal() * d.X / a;
          const Eigen::VectorXd rhs =
              d.X.transpose() * (w.asDiagonal() * z) / a;
          const Eigen::VectorXd next =
              (xtwx + lambda_ridge * eye).ldlt().solve(rhs);
          const double delta = (next - theta).cwiseAbs().maxCoeff();
          theta = next;
          if (delta < kRidgeTol) break;
        }
        warm = theta;
      }
    } catch (const PostError&) {
      continue;
    }
    const double df_eff =
        ((xtwx + lambda_ridge * eye).ldlt().solve(xtwx)).trace();
    const double bic =
        -2.0 * sum_log_likelihood(d, family, theta) + df_eff * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best = theta;
    }
  }
  return best;
}

}  // namespace

Eigen::VectorXd nll_gradient(ObservationSpan control, const GlmFamily& family,
                             const Eigen::VectorXd& theta) {
  const Design d = build_design(control, family, 1);
  const Eigen::VectorXd eta = d.X * theta;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d.dim);
  for (long i = 0; i < d.n; ++i) {
    const double mu = inverse_link(family, eta(i));
    g -= d.X.row(i).transpose() * (d.y(i) - mu);
  }
  return g / (static_cast<double>(d.n) * family.dispersion);
}

double penalized_objective(ObservationSpan control, const GlmFamily& family,
                           const PenaltyConfig& penalty, double lambda,
                           const Eigen::VectorXd& theta) {
  const Design d = build_design(control, family, 1);
  double obj =
      -sum_log_likelihood(d, family, theta) / static_cast<double>(d.n);
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    obj += penalty_value(theta(j), lambda, penalty, static_cast<int>(j));
  return obj;
}

Eigen::VectorXd fit_ridge(ObservationSpan control, const GlmFamily& family,
                          double lambda_ridge) {
  if (!(lambda_ridge > 0.0))
    throw std::invalid_argument("fit_ridge: lambda_ridge must be positive");
  const Design d = build_design(control, family, 2);
  const double a = family.dispersion;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d.dim, d.dim);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.dim);
  Eigen::VectorXd eta, w, z;
  for (int iter = 0; iter < kRidgeMaxIter; ++iter) {
    irls_quantities(d, family, theta, eta, w, z, iter);
    const Eigen::MatrixXd G =
        d.X.transpose() * w.asDiagonal() * d.X / a + lambda_ridge * eye;
    const Eigen::VectorXd rhs = d.X.transpose() * (w.asDiagonal() * z) / a;
    const Eigen::VectorXd next = G.ldlt().solve(rhs);
    const double delta = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    if (delta < kRidgeTol) break;
  }
  return theta;
}

Eigen::VectorXd ridge_pilot(ObservationSpan control, const GlmFamily& family) {
  const Design d = build_design(control, family, 2);
  return ridge_pilot_impl(d, family);
}

Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot) {
  return (pilot.cwiseAbs().array() + 1e-6).inverse().matrix();
}

FittedModel fit_penalized(ObservationSpan control, const GlmFamily& family,
                          const PenaltyConfig& penalty, double lambda,
                          const Eigen::VectorXd* init) {
  if (lambda < 0.0)
    throw std::invalid_argument("fit_penalized: lambda must be nonnegative");
  penalty.validate();
  const Design d = build_design(control, family, 2);
  PenaltyConfig cfg = penalty;
  if (cfg.kind == PenaltyKind::AdaLasso && !cfg.weights) {
    const Eigen::VectorXd pilot = ridge_pilot_impl(d, family);
    cfg.weights = adaptive_weights(pilot);
    // The pilot is a function of the same data, so starting coordinate
    // descent from it keeps the fit deterministic while skipping the slow
    // cold crawl at weak penalties.
    if (init == nullptr)
      return fit_penalized_impl(d, family, cfg, lambda, &pilot);
  }
  return fit_penalized_impl(d, family, cfg, lambda, init);
}

FittedModel fit_penalized_warm(ObservationSpan control,
                               const GlmFamily& family,
                               const PenaltyConfig& penalty, double lambda) {
  penalty.validate();
  const Design d = build_design(control, family, 2);
  PenaltyConfig cfg = penalty;
  const Eigen::VectorXd pilot = ridge_pilot_impl(d, family);
  if (cfg.kind == PenaltyKind::AdaLasso && !cfg.weights)
    cfg.weights = adaptive_weights(pilot);
  return fit_penalized_impl(d, family, cfg, lambda, &pilot);
}

double lambda_max(ObservationSpan control, const GlmFamily& family,
                  const PenaltyConfig& penalty) {
  const Design d = build_design(control, family, 2);
  return lambda_max_impl(d, family, penalty);
}

std::pair<double, FittedModel> select_lambda(
    ObservationSpan control, const GlmFamily& family,
    const PenaltyConfig& penalty, const std::vector<double>* grid) {
  penalty.validate();
  const Design d = build_design(control, family, 2);
  const double n = static_cast<double>(d.n);

  if (penalty.kind == PenaltyKind::None)
    return {0.0, fit_penalized_impl(d, family, penalty, 0.0, nullptr)};

  PenaltyConfig cfg = penalty;
  if (cfg.kind == PenaltyKind::AdaLasso && !cfg.weights)
    cfg.weights = adaptive_weights(ridge_pilot_impl(d, family));

  std::vector<double> lambdas;
  if (grid != nullptr) {
    lambdas = *grid;
    if (lambdas.empty())
      throw std::invalid_argument("select_lambda: empty grid");
    for (double lam : lambdas)
      if (!(lam > 0.0) || !std::isfinite(lam))
        throw std::invalid_argument("select_lambda: grid must be positive");
    std::sort(lambdas.rbegin(), lambdas.rend());
  } else {
    const double lmax = lambda_max_impl(d, family, cfg);
    if (!(lmax > 0.0))
      throw FittingError("select_lambda: degenerate null-model score", 0);
    constexpr int kPoints = 50;
    for (int k = 0; k < kPoints; ++k)
      lambdas.push_back(
          lmax * std::pow(1e-3, static_cast<double>(k) / (kPoints - 1)));
  }

  double best_bic = std::numeric_limits<double>::infinity();
  double best_lambda = lambdas.front();
  FittedModel best_model;
  bool have_model = false;
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(d.dim);
  for (const double lam : lambdas) {
    FittedModel m;
    try {
      m = fit_penalized_impl(d, family, cfg, lam, &warm);
    } catch (const PostError&) {
      diagnostics().path_skips++;
      continue;
    }
    warm = m.theta_hat;
    const double bic = -2.0 * sum_log_likelihood(d, family, m.theta_hat) +
                       static_cast<double>(m.active_set.size()) * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best_lambda = lam;
      best_model = std::move(m);
      have_model = true;
    }
  }
  if (!have_model)
    throw FittingError("select_lambda: every path point failed", 0);
  return {best_lambda, std::move(best_model)};
}

FittedModel fit_mle(ObservationSpan control, const GlmFamily& family) {
  const Design d = build_design(control, family, 2);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d.dim);
  Eigen::VectorXd eta, w, z;
  bool converged = false;
  int iter = 0;
  for (; iter < kMleMaxIter; ++iter) {
    irls_quantities(d, family, theta, eta, w, z, iter);
    const Eigen::MatrixXd G =
        d.X.transpose() * w.asDiagonal() * d.X / static_cast<double>(d.n);
    Eigen::MatrixXd L;
    try {
      L = cholesky_factor(G);
    } catch (const FactorizationError& e) {
      throw RankDeficiencyError(
          "fit_mle: singular weighted Gram matrix at coordinate " +
              std::to_string(e.pivot_index),
          {e.pivot_index});
    }
    const Eigen::VectorXd rhs =
        d.X.transpose() * (w.asDiagonal() * z) / static_cast<double>(d.n);
    Eigen::VectorXd next = L.triangularView<Eigen::Lower>().solve(rhs);
    next = L.transpose().triangularView<Eigen::Upper>().solve(next);
    const double delta = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    if (delta < kRidgeTol) {
      converged = true;
      ++iter;
      break;
    }
  }
  if (family.kind == FamilyKind::BernoulliLogit) {
    // Separated samples make IRLS drift outward with ever-shrinking steps:
    // either fitted probabilities saturate onto the responses, or the loop
    // times out with extreme linear predictors.
    const Eigen::VectorXd eta_hat = d.X * theta;
    const double max_eta = eta_hat.cwiseAbs().maxCoeff();
    double max_resid = 0.0;
    for (long i = 0; i < d.n; ++i)
      max_resid = std::max(
          max_resid, std::abs(d.y(i) - inverse_link(family, eta_hat(i))));
    if (max_resid < 1e-6 || (!converged && max_eta > 25.0) ||
        (converged && max_eta > kSeparationEta))
      throw SeparationError(
          "fit_mle: separation detected (|eta| = " + std::to_string(max_eta) +
              "), logistic MLE does not exist",
          iter);
  }
  FittedModel model;
  model.theta_hat = theta;
  model.lambda = 0.0;
  model.converged = converged;
  model.iterations = iter;
  model.family = family;
  model.penalty = PenaltyConfig::none();
  model.active_set.resize(static_cast<size_t>(d.dim));
  for (int j = 0; j < d.dim; ++j) model.active_set[static_cast<size_t>(j)] = j;
  model.sigma_hat = covariance_from_active(d, family, theta, model.active_set);
  return model;
}

Eigen::MatrixXd active_set_covariance(const FittedModel& model,
                                      ObservationSpan control) {
  const Design d = build_design(control, model.family, 1);
  if (model.theta_hat.size() != d.dim)
    throw std::invalid_argument(
        "active_set_covariance: model/data dimension mismatch");
  return covariance_from_active(d, model.family, model.theta_hat,
                                model.active_set);
}

}  // namespace post
