#include "post/glm.hpp"

#include <algorithm>
#include <cmath>

namespace post {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kEtaClamp = 700.0;
constexpr double kVarianceFloor = 1e-10;
}  // namespace

GlmFamily GlmFamily::gaussian(double dispersion) {
  if (!(dispersion > 0.0) || !std::isfinite(dispersion))
    throw std::invalid_argument("GlmFamily: dispersion must be positive");
  return GlmFamily{FamilyKind::GaussianIdentity, dispersion};
}

GlmFamily GlmFamily::bernoulli() {
  return GlmFamily{FamilyKind::BernoulliLogit, 1.0};
}

GlmFamily GlmFamily::poisson() {
  return GlmFamily{FamilyKind::PoissonLog, 1.0};
}

double inverse_link(const GlmFamily& family, double eta) {
  if (!std::isfinite(eta))
    throw std::invalid_argument("inverse_link: eta must be finite");
  switch (family.kind) {
    case FamilyKind::GaussianIdentity:
      return eta;
    case FamilyKind::BernoulliLogit:
      if (eta >= 0.0) {
        return 1.0 / (1.0 + std::exp(-eta));
      } else {
        // Keep the saturated tail strictly positive: exp underflows to 0
        // below roughly -745, so pin the exponent at the subnormal edge.
        const double e = std::exp(std::max(eta, -745.0));
        return e / (1.0 + e);
      }
    case FamilyKind::PoissonLog:
      if (eta > kEtaClamp) {
        diagnostics().link_saturations++;
        return std::exp(kEtaClamp);
      }
      return std::exp(eta);
  }
  throw std::logic_error("inverse_link: unknown family");
}

double variance_function(const GlmFamily& family, double mu) {
  double v = 0.0;
  switch (family.kind) {
    case FamilyKind::GaussianIdentity:
      return 1.0;
    case FamilyKind::BernoulliLogit:
      if (!(mu >= 0.0 && mu <= 1.0))
        throw std::invalid_argument(
            "variance_function: Bernoulli mean outside [0,1]");
      v = mu * (1.0 - mu);
      break;
    case FamilyKind::PoissonLog:
      if (!(mu >= 0.0))
        throw std::invalid_argument(
            "variance_function: Poisson mean must be nonnegative");
      v = mu;
      break;
  }
  if (v < kVarianceFloor) {
    diagnostics().variance_floors++;
    return kVarianceFloor;
  }
  return v;
}

void validate_response(const GlmFamily& family, double y) {
  if (!std::isfinite(y))
    throw std::invalid_argument("response must be finite");
  switch (family.kind) {
    case FamilyKind::GaussianIdentity:
      return;
    case FamilyKind::BernoulliLogit:
      if (y != 0.0 && y != 1.0)
        throw std::invalid_argument("Bernoulli response must be 0 or 1");
      return;
    case FamilyKind::PoissonLog:
      if (y < 0.0 || std::abs(y - std::round(y)) > 1e-9)
        throw std::invalid_argument(
            "Poisson response must be a nonnegative integer");
      return;
  }
}

double log_likelihood_term(const GlmFamily& family, double y, double eta) {
  switch (family.kind) {
    case FamilyKind::GaussianIdentity: {
      const double r = y - eta;
      return -0.5 * r * r / family.dispersion -
             0.5 * (kLog2Pi + std::log(family.dispersion));
    }
    case FamilyKind::BernoulliLogit:
      // y*eta - log(1 + e^eta), computed on the stable branch.
      if (eta > 0.0) {
        return y * eta - eta - std::log1p(std::exp(-eta));
      }
      return y * eta - std::log1p(std::exp(eta));
    case FamilyKind::PoissonLog: {
      const double mu = std::exp(std::min(eta, kEtaClamp));
      return y * eta - mu - std::lgamma(y + 1.0);
    }
  }
  throw std::logic_error("log_likelihood_term: unknown family");
}

double log_likelihood(const GlmFamily& family, ObservationSpan data,
                      const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& beta) {
  if (theta.size() != beta.size())
    throw std::invalid_argument("log_likelihood: theta/beta length mismatch");
  double ll = 0.0;
  for (const Observation& obs : data) {
    if (obs.x.size() != theta.size())
      throw std::invalid_argument(
          "log_likelihood: covariate length mismatch");
    validate_response(family, obs.y);
    const double eta =
        theta.dot(obs.x) + (obs.arm == 1 ? beta.dot(obs.x) : 0.0);
    ll += log_likelihood_term(family, obs.y, eta);
  }
  return ll;
}

}  // namespace post
