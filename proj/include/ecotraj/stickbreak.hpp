#ifndef ECOTRAJ_STICKBREAK_HPP
#define ECOTRAJ_STICKBREAK_HPP

#include <Eigen/Dense>

#include "ecotraj/rng.hpp"

namespace ecotraj {

// |logit| beyond which inverse-logit is clamped so that mapped probabilities
// never underflow to exact 0 or 1 and every derived simplex stays strictly
// interior in double precision.
inline constexpr double kLogitClamp = 36.0;

double inv_logit(double x);
double logit(double p);
// log(1 + exp(x)) without overflow.
double log1pexp(double x);

// One classified subplot at one survey year. `state` is 1-based in 1..K.
struct StateObservation {
  int plot = 0;
  int subplot = 0;
  int year = 0;
  int state = 1;
};

// Probability vector over the K states; entries >= 0 and summing to one.
class Simplex {
 public:
  explicit Simplex(Eigen::VectorXd p);
  const Eigen::VectorXd& probs() const { return p_; }
  int n_states() const { return static_cast<int>(p_.size()); }

 private:
  Eigen::VectorXd p_;
};

// The K-1 conditional probabilities p~_k = P(state k | not in 1..k-1),
// each strictly inside (0,1).
class ConditionalProbs {
 public:
  explicit ConditionalProbs(Eigen::VectorXd ptilde);
  const Eigen::VectorXd& values() const { return ptilde_; }
  int dim() const { return static_cast<int>(ptilde_.size()); }

 private:
  Eigen::VectorXd ptilde_;
};

// Position of an ecosystem in the (K-1)-dimensional logit-transformed
// probability space.
class LatentLocation {
 public:
  explicit LatentLocation(Eigen::VectorXd eta);
  const Eigen::VectorXd& eta() const { return eta_; }
  int dim() const { return static_cast<int>(eta_.size()); }

 private:
  Eigen::VectorXd eta_;
};

// Stick-breaking map and its inverse between the simplex interior and the
// conditional probabilities.
Simplex sb_inverse(const ConditionalProbs& ptilde);
ConditionalProbs sb_forward(const Simplex& p);

// Composition of componentwise inverse-logit with sb_inverse.
Simplex eta_to_simplex(const LatentLocation& eta);

// Conditional binomial trial counts: N_1 = 1, N_k = 1 iff state >= k.
Eigen::VectorXi conditional_trials(int state, int n_states);
Eigen::VectorXi conditional_trials(const StateObservation& y, int n_states);

// Log pmf of the observed state as a product of conditional binomials.
double sb_loglik(int state, const LatentLocation& eta);
double sb_loglik(const StateObservation& y, const LatentLocation& eta);

// Categorical draw from eta_to_simplex(eta); returns a 1-based state.
int sample_state(const LatentLocation& eta, Rng& rng);

}  // namespace ecotraj

#endif  // ECOTRAJ_STICKBREAK_HPP
