#include "ecotraj/polya_gamma.hpp"

#include <cmath>

#include "ecotraj/errors.hpp"
#include "ecotraj/stickbreak.hpp"

namespace ecotraj {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Truncation point splitting the J*(1,z) density into an inverse-Gaussian
// piece on (0,t] and an exponential piece on (t,inf).
constexpr double kTrunc = 0.64;

// log Phi(x) for the standard normal, stable far into the left tail.
double log_norm_cdf(double x) {
  if (x > -8.0) return std::log(0.5 * std::erfc(-x / std::sqrt(2.0)));
  // Asymptotic series: Phi(x) ~ phi(x)/(-x) (1 - 1/x^2 + 3/x^4 - 15/x^6).
  const double x2 = x * x;
  return -0.5 * x2 - 0.5 * std::log(2.0 * kPi) - std::log(-x) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2));
}

// Probability that the proposal falls in the exponential branch,
// q / (p + q) with p the truncated inverse-Gaussian mass.
double exp_branch_prob(double z) {
  const double t = kTrunc;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
  const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
  const double x0 = std::log(fz) + fz * t;
  const double xb = x0 - z + log_norm_cdf(b);
  const double xa = x0 + z + log_norm_cdf(a);
  const double p_over_q = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + p_over_q);
}

// Inverse-Gaussian(mu, lambda=1) truncated to (0, kTrunc].
double rtigauss(double z, Rng& rng) {
  const double t = kTrunc;
  double x = t + 1.0;
  if (1.0 / t > z) {
    // mu = 1/z exceeds the truncation point: sample X = t/(1+tE)^2 from the
    // chi-like proposal and accept with the z-tilt.
    double alpha = 0.0;
    while (rng.unif() > alpha) {
      double e1, e2;
      do {
        e1 = rng.expon();
        e2 = rng.expon();
      } while (e1 * e1 > 2.0 * e2 / t);
      x = 1.0 + e1 * t;
      x = t / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > t) {
      double y = rng.norm();
      y *= y;
      const double mu_y = mu * y;
      x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (rng.unif() > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

// Coefficients a_n(x) of the alternating series for the J*(1,z) density.
double series_coef(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x > 0.0) {
    const double expnt =
        -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x;
    return std::exp(expnt);
  }
  return 0.0;
}

// Exact PG(1, c) draw: sample 0.25 * J*(1, |c|/2) by alternating-series
// rejection from the two-piece proposal.
double pg1_draw(double c, Rng& rng) {
  const double z = std::fabs(c) * 0.5;
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double r = exp_branch_prob(z);
  while (true) {
    double x;
    if (rng.unif() < r)
      x = kTrunc + rng.expon() / fz;
    else
      x = rtigauss(z, rng);

    double s = series_coef(0, x);
    const double y = rng.unif() * s;
    int n = 0;
    while (true) {
      ++n;
      if (n % 2 == 1) {
        s -= series_coef(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_coef(n, x);
        if (y > s) break;
      }
    }
  }
}

}  // namespace

double pg_draw(int b, double c, Rng& rng) {
  if (b < 0) throw_domain("pg_shape", "PG shape must be a nonnegative integer");
  if (!std::isfinite(c)) throw_domain("pg_tilt", "PG tilt must be finite");
  double sum = 0.0;
  for (int j = 0; j < b; ++j) sum += pg1_draw(c, rng);
  return sum;
}

double pg_draw(const PgParams& params, Rng& rng) { return pg_draw(params.b, params.c, rng); }

double pg_mean(int b, double c) {
  if (b < 0) throw_domain("pg_shape", "PG shape must be a nonnegative integer");
  if (std::fabs(c) < 1e-4) {
    // Series of tanh(c/2)/(2c) around 0; the c^2 term keeps ~1e-18 accuracy.
    return b * (0.25 - c * c / 48.0);
  }
  return b / (2.0 * c) * std::tanh(0.5 * c);
}

double pg_mean(const PgParams& params) { return pg_mean(params.b, params.c); }

Eigen::VectorXd kappa_of(int state, int n_states) {
  const Eigen::VectorXi trials = conditional_trials(state, n_states);
  Eigen::VectorXd kappa(n_states - 1);
  for (int k = 1; k < n_states; ++k) {
    const double y = state == k ? 1.0 : 0.0;
    kappa[k - 1] = y - 0.5 * trials[k - 1];
  }
  return kappa;
}

}  // namespace ecotraj
