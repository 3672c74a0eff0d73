#include "ecotraj/stickbreak.hpp"

#include <cmath>
#include <string>

#include "ecotraj/errors.hpp"

namespace ecotraj {

double inv_logit(double x) {
  if (!std::isfinite(x)) throw_domain("logit_nonfinite", "inverse-logit of non-finite value");
  if (x > kLogitClamp) x = kLogitClamp;
  if (x < -kLogitClamp) x = -kLogitClamp;
  return 1.0 / (1.0 + std::exp(-x));
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw_domain("logit_range", "logit argument must lie in (0,1)");
  return std::log(p / (1.0 - p));
}

double log1pexp(double x) {
  if (x > 33.0) return x;  // log1p(exp(-33)) is below double epsilon of x
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

Simplex::Simplex(Eigen::VectorXd p) : p_(std::move(p)) {
  if (p_.size() < 2) throw_domain("simplex_dim", "simplex needs at least two states");
  double sum = 0.0;
  for (int k = 0; k < p_.size(); ++k) {
    if (!std::isfinite(p_[k]) || p_[k] < 0.0)
      throw_domain("simplex_entry", "simplex entries must be finite and nonnegative");
    sum += p_[k];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw_domain("simplex_sum", "simplex entries must sum to one (got " + std::to_string(sum) + ")");
}

ConditionalProbs::ConditionalProbs(Eigen::VectorXd ptilde) : ptilde_(std::move(ptilde)) {
  if (ptilde_.size() < 1) throw_domain("condprob_dim", "need at least one conditional probability");
  for (int k = 0; k < ptilde_.size(); ++k)
    if (!(ptilde_[k] > 0.0 && ptilde_[k] < 1.0))
      throw_domain("condprob_range", "conditional probabilities must lie strictly in (0,1)");
}

LatentLocation::LatentLocation(Eigen::VectorXd eta) : eta_(std::move(eta)) {
  if (eta_.size() < 1) throw_domain("eta_dim", "latent location needs at least one coordinate");
  for (int k = 0; k < eta_.size(); ++k)
    if (!std::isfinite(eta_[k]))
      throw_domain("eta_nonfinite", "latent location coordinates must be finite");
}

Simplex sb_inverse(const ConditionalProbs& ptilde) {
  const Eigen::VectorXd& v = ptilde.values();
  const int K = static_cast<int>(v.size()) + 1;
  Eigen::VectorXd p(K);
  double stick = 1.0;  // probability mass not yet assigned
  for (int k = 0; k < K - 1; ++k) {
    p[k] = v[k] * stick;
    stick -= p[k];
  }
  p[K - 1] = stick;
  return Simplex(p);
}

ConditionalProbs sb_forward(const Simplex& p) {
  const Eigen::VectorXd& v = p.probs();
  const int K = p.n_states();
  Eigen::VectorXd ptilde(K - 1);
  double stick = 1.0;
  for (int k = 0; k < K - 1; ++k) {
    if (v[k] <= 0.0 || stick - v[k] <= 0.0)
      throw_domain("simplex_boundary",
                   "sb_forward requires a strictly interior simplex; state " +
                       std::to_string(k + 1) + " exhausts the remaining mass");
    ptilde[k] = v[k] / stick;
    stick -= v[k];
  }
  return ConditionalProbs(ptilde);
}

Simplex eta_to_simplex(const LatentLocation& eta) {
  Eigen::VectorXd ptilde(eta.dim());
  for (int k = 0; k < eta.dim(); ++k) ptilde[k] = inv_logit(eta.eta()[k]);
  return sb_inverse(ConditionalProbs(ptilde));
}

Eigen::VectorXi conditional_trials(int state, int n_states) {
  if (state < 1 || state > n_states)
    throw_domain("state_range", "state " + std::to_string(state) + " outside 1.." + std::to_string(n_states));
  Eigen::VectorXi trials(n_states - 1);
  for (int k = 1; k < n_states; ++k) trials[k - 1] = state >= k ? 1 : 0;
  return trials;
}

Eigen::VectorXi conditional_trials(const StateObservation& y, int n_states) {
  return conditional_trials(y.state, n_states);
}

double sb_loglik(int state, const LatentLocation& eta) {
  const int K = eta.dim() + 1;
  if (state < 1 || state > K)
    throw_domain("state_range", "state " + std::to_string(state) + " outside 1.." + std::to_string(K));
  double ll = 0.0;
  // Only dimensions with a live trial (k <= state) contribute; N_k = 0 terms
  // are Binom(0;0,.) = 1.
  for (int k = 1; k < K && k <= state; ++k) {
    const double e = eta.eta()[k - 1];
    ll -= state == k ? log1pexp(-e) : log1pexp(e);
  }
  return ll;
}

double sb_loglik(const StateObservation& y, const LatentLocation& eta) {
  return sb_loglik(y.state, eta);
}

int sample_state(const LatentLocation& eta, Rng& rng) {
  const Eigen::VectorXd p = eta_to_simplex(eta).probs();
  const double u = rng.unif();
  double cum = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    cum += p[k];
    if (u <= cum) return k + 1;
  }
  return static_cast<int>(p.size());
}

}  // namespace ecotraj
