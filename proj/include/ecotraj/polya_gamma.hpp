#ifndef ECOTRAJ_POLYA_GAMMA_HPP
#define ECOTRAJ_POLYA_GAMMA_HPP

#include <Eigen/Dense>

#include "ecotraj/rng.hpp"

namespace ecotraj {

// Parameters of a Polya-Gamma distribution PG(b, c) with integer shape.
struct PgParams {
  int b = 1;
  double c = 0.0;
};

// Exact draw from PG(b, c). b = 0 returns 0 (degenerate by convention; rows
// with no trial carry no information). b > 1 is the b-fold convolution of
// PG(1, c).
double pg_draw(int b, double c, Rng& rng);
double pg_draw(const PgParams& params, Rng& rng);

// E[PG(b, c)] = b/(2c) tanh(c/2), with the analytic limit b/4 at c = 0.
double pg_mean(int b, double c);
double pg_mean(const PgParams& params);

// kappa_k = y_k - N_k/2 for the conditional-binomial factorization;
// entries lie in {-1/2, 0, +1/2}. `state` is 1-based in 1..n_states.
Eigen::VectorXd kappa_of(int state, int n_states);

}  // namespace ecotraj

#endif  // ECOTRAJ_POLYA_GAMMA_HPP
