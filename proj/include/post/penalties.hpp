#pragma once

#include <Eigen/Dense>
#include <optional>

#include "post/common.hpp"

namespace post {

enum class PenaltyKind { AdaLasso, Scad, Mcp, None };

/// Penalty family plus its concavity parameter and optional adaptive
/// weights. The intercept is penalized by default; set penalize_intercept
/// to false for the conventional exemption.
struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::None;
  double gamma = 0.0;
  std::optional<Eigen::VectorXd> weights;
  bool penalize_intercept = true;

  static PenaltyConfig none();
  static PenaltyConfig adalasso(
      std::optional<Eigen::VectorXd> weights = std::nullopt);
  static PenaltyConfig scad(double gamma = 3.7);
  static PenaltyConfig mcp(double gamma = 3.0);

  void validate() const;
  /// AdaLasso weight for coordinate j (1 when no weights are set).
  double weight(int j) const;
};

/// J_lambda(theta_j) for coordinate j. AdaLasso is lambda * w_j * |theta|;
/// SCAD and MCP follow their usual branch formulas. Zero for kind None and
/// for the intercept when it is exempt.
double penalty_value(double theta_j, double lambda, const PenaltyConfig& cfg,
                     int j);

/// argmin_theta  0.5 * v * (theta - z/v)^2 + J_lambda(theta)  in closed form;
/// when the curvature condition of a concave penalty fails (v*gamma <= 1 for
/// MCP, v*(gamma-1) <= 1 for SCAD) a bracketed golden-section search is used
/// instead and counted in diagnostics().threshold_fallbacks.
double threshold_update(double z, double v, double lambda,
                        const PenaltyConfig& cfg, int j);

/// Soft-threshold S(z, t) = sign(z) * max(|z| - t, 0).
double soft_threshold(double z, double t);

}  // namespace post
