#include "post/penalties.hpp"

#include <cmath>

namespace post {

PenaltyConfig PenaltyConfig::none() { return PenaltyConfig{}; }

PenaltyConfig PenaltyConfig::adalasso(std::optional<Eigen::VectorXd> weights) {
  PenaltyConfig cfg;
  cfg.kind = PenaltyKind::AdaLasso;
  cfg.weights = std::move(weights);
  cfg.validate();
  return cfg;
}

PenaltyConfig PenaltyConfig::scad(double gamma) {
  PenaltyConfig cfg;
  cfg.kind = PenaltyKind::Scad;
  cfg.gamma = gamma;
  cfg.validate();
  return cfg;
}

PenaltyConfig PenaltyConfig::mcp(double gamma) {
  PenaltyConfig cfg;
  cfg.kind = PenaltyKind::Mcp;
  cfg.gamma = gamma;
  cfg.validate();
  return cfg;
}

void PenaltyConfig::validate() const {
  if (kind == PenaltyKind::Scad && !(gamma > 2.0))
    throw std::invalid_argument("SCAD requires gamma > 2");
  if (kind == PenaltyKind::Mcp && !(gamma > 1.0))
    throw std::invalid_argument("MCP requires gamma > 1");
  if (weights) {
    for (Eigen::Index j = 0; j < weights->size(); ++j) {
      const double w = (*weights)(j);
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument(
            "AdaLasso weights must be finite and nonnegative");
    }
  }
}

double PenaltyConfig::weight(int j) const {
  if (!weights) return 1.0;
  if (j < 0 || j >= weights->size())
    throw std::invalid_argument("penalty weight index out of range");
  return (*weights)(j);
}

double soft_threshold(double z, double t) {
  const double a = std::abs(z) - t;
  return a > 0.0 ? std::copysign(a, z) : 0.0;
}

double penalty_value(double theta_j, double lambda, const PenaltyConfig& cfg,
                     int j) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (cfg.kind == PenaltyKind::None) return 0.0;
  if (j == 0 && !cfg.penalize_intercept) return 0.0;
  const double a = std::abs(theta_j);
  switch (cfg.kind) {
    case PenaltyKind::AdaLasso:
      return lambda * cfg.weight(j) * a;
    case PenaltyKind::Scad: {
      const double g = cfg.gamma;
      if (a <= lambda) return lambda * a;
      if (a < g * lambda)
        return (2.0 * g * lambda * a - a * a - lambda * lambda) /
               (2.0 * (g - 1.0));
      return lambda * lambda * (g + 1.0) / 2.0;
    }
    case PenaltyKind::Mcp: {
      const double g = cfg.gamma;
      if (a <= g * lambda) return lambda * a - a * a / (2.0 * g);
      return 0.5 * g * lambda * lambda;
    }
    case PenaltyKind::None:
      break;
  }
  return 0.0;
}

namespace {

// Golden-section refinement of the univariate objective on [lo, hi],
// preceded by a coarse scan so nonconvex objectives cannot trap the search
// in the wrong basin. Used only when the closed form's curvature condition
// fails.
double fallback_minimize(double z, double v, double lambda,
                         const PenaltyConfig& cfg, int j) {
  diagnostics().threshold_fallbacks++;
  const double sign = z < 0.0 ? -1.0 : 1.0;
  const double za = std::abs(z);
  const double hi0 = za / v;  // the minimizer lies in [0, |z|/v]
  const auto objective = [&](double th) {
    const double d = th - hi0;
    return 0.5 * v * d * d + penalty_value(th, lambda, cfg, j);
  };
  constexpr int kGrid = 256;
  double best_t = 0.0;
  double best_f = objective(0.0);
  for (int i = 1; i <= kGrid; ++i) {
    const double t = hi0 * static_cast<double>(i) / kGrid;
    const double f = objective(t);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  double lo = std::max(0.0, best_t - hi0 / kGrid);
  double hi = std::min(hi0, best_t + hi0 / kGrid);
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + hi); ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = objective(x2);
    }
  }
  const double t = 0.5 * (lo + hi);
  return sign * (objective(t) <= best_f ? t : best_t);
}

}  // namespace

double threshold_update(double z, double v, double lambda,
                        const PenaltyConfig& cfg, int j) {
  if (!(v > 0.0)) throw std::invalid_argument("curvature v must be positive");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (cfg.kind == PenaltyKind::None || lambda == 0.0 ||
      (j == 0 && !cfg.penalize_intercept))
    return z / v;

  switch (cfg.kind) {
    case PenaltyKind::AdaLasso:
      return soft_threshold(z, lambda * cfg.weight(j)) / v;
    case PenaltyKind::Mcp: {
      const double g = cfg.gamma;
      if (v * g <= 1.0) return fallback_minimize(z, v, lambda, cfg, j);
      if (std::abs(z) <= v * g * lambda)
        return soft_threshold(z, lambda) / (v - 1.0 / g);
      return z / v;
    }
    case PenaltyKind::Scad: {
      const double g = cfg.gamma;
      if (v * (g - 1.0) <= 1.0) return fallback_minimize(z, v, lambda, cfg, j);
      const double za = std::abs(z);
      if (za <= lambda * (v + 1.0)) return soft_threshold(z, lambda) / v;
      if (za <= v * g * lambda)
        return soft_threshold(z, g * lambda / (g - 1.0)) /
               (v - 1.0 / (g - 1.0));
      return z / v;
    }
    case PenaltyKind::None:
      break;
  }
  return z / v;
}

}  // namespace post
