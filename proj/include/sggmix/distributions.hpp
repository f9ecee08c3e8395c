#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "sggmix/rng.hpp"

namespace sggmix {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double pos_inf = std::numeric_limits<double>::infinity();

namespace detail {
inline void check(bool ok, const char* msg) {
  if (!ok) throw std::domain_error(msg);
}
} // namespace detail

/// Parameters of the shifted gamma-gamma density: location mu >= 0, shape
/// gamma > 0, tail alpha > 0, scale beta > 0. Support is [mu, inf).
struct SggParams {
  double mu = 0.0;
  double gamma = 1.0;
  double alpha = 1.0;
  double beta = 1.0;

  bool valid() const {
    return std::isfinite(mu) && std::isfinite(gamma) && std::isfinite(alpha) &&
           std::isfinite(beta) && mu >= 0.0 && gamma > 0.0 && alpha > 0.0 && beta > 0.0;
  }
};

/// Generalised Pareto parameters, restricted to xi >= 0 (unbounded support).
struct GpdParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;

  bool valid() const {
    return std::isfinite(mu) && std::isfinite(sigma) && std::isfinite(xi) &&
           sigma > 0.0 && xi >= 0.0;
  }
};

/// Log density of Ga(shape, rate) at x. The x == 0 boundary follows the
/// analytic limit: -inf for shape > 1, log(rate) for shape == 1, +inf for
/// shape < 1.
inline double gamma_logpdf(double x, double shape, double rate) {
  detail::check(std::isfinite(shape) && std::isfinite(rate) && shape > 0.0 && rate > 0.0,
                "gamma_logpdf: shape and rate must be positive finite");
  if (!(x >= 0.0)) return neg_inf;
  if (x == 0.0) {
    if (shape > 1.0) return neg_inf;
    if (shape < 1.0) return pos_inf;
    return std::log(rate);
  }
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// Log of the shifted gamma-gamma density
///   f(x) = beta^alpha / B(alpha, gamma) * (x-mu)^(gamma-1) / (beta+x-mu)^(alpha+gamma)
/// on [mu, inf), evaluated entirely through lgamma. At x == mu the value is
/// the analytic limit: -inf for gamma > 1, finite for gamma == 1, +inf for
/// gamma < 1 (integrable asymptote at the support edge).
inline double sgg_logpdf(double x, const SggParams& p) {
  detail::check(p.valid(), "sgg_logpdf: invalid parameters");
  if (!(x >= p.mu)) return neg_inf;
  const double t = x - p.mu;
  const double c = p.alpha * std::log(p.beta) + std::lgamma(p.alpha + p.gamma) -
                   std::lgamma(p.alpha) - std::lgamma(p.gamma);
  if (t == 0.0) {
    if (p.gamma > 1.0) return neg_inf;
    if (p.gamma < 1.0) return pos_inf;
    return c - (p.alpha + 1.0) * std::log(p.beta);
  }
  return c + (p.gamma - 1.0) * std::log(t) - (p.alpha + p.gamma) * std::log(p.beta + t);
}

inline double sgg_pdf(double x, const SggParams& p) { return std::exp(sgg_logpdf(x, p)); }

/// Log of the generalised Pareto density; xi == 0 takes the shifted
/// exponential limit exp(-(x-mu)/sigma)/sigma.
inline double gpd_logpdf(double x, const GpdParams& p) {
  detail::check(p.valid(), "gpd_logpdf: invalid parameters");
  if (!(x >= p.mu)) return neg_inf;
  const double z = (x - p.mu) / p.sigma;
  if (p.xi == 0.0) return -std::log(p.sigma) - z;
  return -std::log(p.sigma) - (1.0 + 1.0 / p.xi) * std::log1p(p.xi * z);
}

inline double gpd_pdf(double x, const GpdParams& p) { return std::exp(gpd_logpdf(x, p)); }

/// Gamma-gamma density: the mu = 0 member of the shifted family.
inline double gg_logpdf(double x, double gamma, double alpha, double beta) {
  return sgg_logpdf(x, SggParams{0.0, gamma, alpha, beta});
}

/// E(X) = mu + beta*gamma/(alpha-1), defined for alpha > 1.
inline double sgg_mean(const SggParams& p) {
  detail::check(p.valid(), "sgg_mean: invalid parameters");
  detail::check(p.alpha > 1.0, "sgg_mean: first moment requires alpha > 1");
  return p.mu + p.beta * p.gamma / (p.alpha - 1.0);
}

/// Var(X) = beta^2*gamma*(gamma+alpha-1)/((alpha-1)^2*(alpha-2)), alpha > 2.
inline double sgg_variance(const SggParams& p) {
  detail::check(p.valid(), "sgg_variance: invalid parameters");
  detail::check(p.alpha > 2.0, "sgg_variance: second moment requires alpha > 2");
  const double am1 = p.alpha - 1.0;
  return p.beta * p.beta * p.gamma * (p.gamma + p.alpha - 1.0) / (am1 * am1 * (p.alpha - 2.0));
}

inline double gpd_mean(const GpdParams& p) {
  detail::check(p.valid(), "gpd_mean: invalid parameters");
  detail::check(p.xi < 1.0, "gpd_mean: first moment requires xi < 1");
  return p.mu + p.sigma / (1.0 - p.xi);
}

inline double gpd_variance(const GpdParams& p) {
  detail::check(p.valid(), "gpd_variance: invalid parameters");
  detail::check(p.xi < 0.5, "gpd_variance: second moment requires xi < 1/2");
  const double om = 1.0 - p.xi;
  return p.sigma * p.sigma / (om * om * (1.0 - 2.0 * p.xi));
}

namespace detail {

/// Marsaglia-Tsang for shape >= 1, rate 1.
inline double gamma_std(double shape, RngStream& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

} // namespace detail

/// Gamma draw parametrised by shape and rate (mean = shape/rate). Shapes
/// below one go through the boosting identity Ga(a) = Ga(a+1) * U^(1/a).
inline double gamma_sample(double shape, double rate, RngStream& rng) {
  detail::check(std::isfinite(shape) && std::isfinite(rate) && shape > 0.0 && rate > 0.0,
                "gamma_sample: shape and rate must be positive finite");
  if (shape < 1.0) {
    const double g = detail::gamma_std(shape + 1.0, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape) / rate;
  }
  return detail::gamma_std(shape, rng) / rate;
}

inline double beta_sample(double a, double b, RngStream& rng) {
  detail::check(std::isfinite(a) && std::isfinite(b) && a > 0.0 && b > 0.0,
                "beta_sample: parameters must be positive finite");
  const double x = gamma_sample(a, 1.0, rng);
  const double y = gamma_sample(b, 1.0, rng);
  return x / (x + y);
}

/// Draw from the shifted gamma-gamma through its latent construction:
/// Y ~ Ga(alpha, beta), then X - mu ~ Ga(gamma, Y).
inline double sgg_sample(const SggParams& p, RngStream& rng) {
  detail::check(p.valid(), "sgg_sample: invalid parameters");
  const double y = gamma_sample(p.alpha, p.beta, rng);
  return p.mu + gamma_sample(p.gamma, y, rng);
}

/// Conditional latent draw Y | X = x ~ Ga(gamma + alpha, x - mu + beta).
inline double latent_conditional_sample(double x, const SggParams& p, RngStream& rng) {
  detail::check(p.valid(), "latent_conditional_sample: invalid parameters");
  detail::check(x >= p.mu, "latent_conditional_sample: x below the support");
  return gamma_sample(p.gamma + p.alpha, x - p.mu + p.beta, rng);
}

} // namespace sggmix
