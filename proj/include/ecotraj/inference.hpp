#ifndef ECOTRAJ_INFERENCE_HPP
#define ECOTRAJ_INFERENCE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ecotraj/polya_gamma.hpp"
#include "ecotraj/rng.hpp"
#include "ecotraj/trajectory.hpp"

namespace ecotraj {

// Hyperparameters: exchangeable Gaussian priors on the coefficient blocks,
// Inverse-Gamma priors on the variances, uniform prior on the range.
struct Priors {
  double alpha_mean = 0.0;
  double alpha_var = 100.0;
  double beta_mean = 0.0;
  double beta_var = 100.0;
  double zeta_ig_shape = 2.0, zeta_ig_scale = 1.0;
  double xi_ig_shape = 2.0, xi_ig_scale = 1.0;
  double eps_ig_shape = 2.0, eps_ig_scale = 1.0;
  double phi_lower = 1e-6;  // km
  // 0 means "max plot distance / 3"; single-plot designs fall back to 1 km
  // unless set explicitly.
  double phi_upper = 0.0;

  double resolve_phi_upper(const StudyDesign& design) const;
};

struct ChainConfig {
  int iterations = 10000;
  int burn_in = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
  bool store_latent = true;
};

// Retained post-burn-in draws. `params` columns follow `param_names`
// (alpha[p][k], beta[p][k], sigma2_zeta, sigma2_xi, sigma2_eps, phi);
// latent summary columns are site-major with the K-1 dimensions fastest.
struct PosteriorSamples {
  std::vector<std::string> param_names;
  Eigen::MatrixXd params;  // (n_chains * draws_per_chain) x n_params
  Eigen::MatrixXd eta0;    // rows as params; cols n_sites*(K-1); empty if not stored
  Eigen::MatrixXd delta;
  int n_chains = 1;
  int draws_per_chain = 0;
  int burn_in = 0;
  int thin = 1;
  std::uint64_t seed = 0;
  int n_states = 0;
  int n_sites = 0;

  int n_draws() const { return static_cast<int>(params.rows()); }
  int latent_col(int site, int dim) const { return site * (n_states - 1) + dim; }
};

// Conjugate Gaussian update under Polya-Gamma augmentation:
// V = (Sigma^{-1} + diag(omega))^{-1}, m = V (Sigma^{-1} mu + kappa).
struct GaussianUpdate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
GaussianUpdate pg_normal_update(const Eigen::VectorXd& prior_mean,
                                const Eigen::MatrixXd& prior_cov, const Eigen::VectorXd& kappa,
                                const Eigen::VectorXd& omega);

// Shrink-expand slice sampler on a bounded support; leaves the target
// invariant for any log density that is finite at x0.
double slice_sample_bounded(double x0, double lo, double hi,
                            const std::function<double(double)>& log_density, Rng& rng);
// Same with only a lower bound; steps out to the right until outside the
// slice (the target must decay).
double slice_sample_lower_bounded(double x0, double lo, double width,
                                  const std::function<double(double)>& log_density, Rng& rng);

// Log density of the stacked plot-noise draws as a function of the range:
// columns of `stacked` are independent N(0, sigma2 * exp(-D/phi)) vectors.
double range_log_density(const Eigen::MatrixXd& D, const Eigen::MatrixXd& stacked,
                         double sigma2, double phi);

// Deterministic-scan Gibbs sampler for the latent trajectory model. One
// instance drives one chain; instances share nothing mutable, so chains
// can run on separate threads with independent Rng streams.
class GibbsSampler {
 public:
  GibbsSampler(const StudyDesign& design, const std::vector<StateObservation>& observations,
               int n_states, const Priors& priors);

  // Replace the observation set without resetting the chain state (e.g.
  // warm-started refits or simulation-based kernel checks).
  void set_observations(const std::vector<StateObservation>& observations);

  void update_omega(Rng& rng);
  // Redraws every Gaussian component from its exact conditional. The
  // coefficient blocks are drawn jointly with their random-effect fields
  // (alpha with the site effects marginalized, beta with the plot-noise
  // sums marginalized; the field is then redrawn from its conditional),
  // which removes the coefficient/field ridge that cripples one-at-a-time
  // scans. eps passes through the sum-to-zero kriging correction.
  void update_eta_block(Rng& rng);
  void update_variances(Rng& rng);
  // Non-centered companions of update_variances: with the fields held in
  // whitened coordinates, each scale gets a 1-D slice draw against the
  // data, then the field is rescaled. Breaks the variance/field ridge.
  void rescale_variances(Rng& rng);
  void update_range(Rng& rng);  // slice sampler for phi

  void sweep(Rng& rng);

  const TrajectoryParams& params() const { return params_; }
  const LatentField& field() const { return field_; }
  const Eigen::MatrixXd& omega_start() const { return omega_start_; }
  const Eigen::MatrixXd& omega_end() const { return omega_end_; }
  int n_states() const { return n_states_; }
  int iteration() const { return iteration_; }

  // Current linear predictors at the survey years, one column per latent dim.
  Eigen::VectorXd eta_start_col(int dim) const;
  Eigen::VectorXd eta_end_col(int dim) const;
  // Current eta0 / displacement summaries (n_sites x K-1).
  Eigen::MatrixXd eta0() const;
  Eigen::MatrixXd displacement() const;

 private:
  void update_alpha(Rng& rng);
  void update_beta(Rng& rng);
  void update_zeta(Rng& rng);
  void update_xi(Rng& rng);
  void update_eps(Rng& rng);
  void refresh_corr_cache();
  void check_finite(const char* block, const Eigen::MatrixXd& m) const;
  double phi_log_density(double phi, const Eigen::MatrixXd& stacked_xi) const;

  const StudyDesign& design_;
  int n_states_;
  Priors priors_;
  double phi_upper_;

  // Per-site conditional-binomial data, zero rows where a survey is absent.
  Eigen::MatrixXi trials_start_, trials_end_;  // n_sites x (K-1), 0/1
  Eigen::MatrixXd kappa_start_, kappa_end_;

  TrajectoryParams params_;
  LatentField field_;
  Eigen::MatrixXd omega_start_, omega_end_;

  // Component caches; linear predictors are re-assembled from these.
  Eigen::MatrixXd h_alpha_;    // n_sites x (K-1)
  Eigen::MatrixXd x_beta_;     // n_sites x (K-1)
  Eigen::MatrixXd sum_xi_;     // n_sites x (K-1)
  Eigen::MatrixXd sum_eps_;    // n_sites x (K-1)
  Eigen::MatrixXd xsum_rows_;  // n_sites x P_x, per-plot climate sums broadcast

  IcarStructure icar_;
  Eigen::LLT<Eigen::MatrixXd> corr_llt_;  // of exp(-D/phi)
  Eigen::MatrixXd corr_;      // exp(-D/phi)
  Eigen::MatrixXd corr_inv_;
  Eigen::MatrixXd overlap_;   // pairwise counts of shared interval years
  int iteration_ = 0;
};

// Run a single chain (`config.seed` selects the Rng stream) or several
// chains with consecutive stream ids, optionally on parallel threads.
// Results are identical for any thread count.
PosteriorSamples run_chain(const StudyDesign& design,
                           const std::vector<StateObservation>& observations, int n_states,
                           const Priors& priors, const ChainConfig& config);
PosteriorSamples run_chains(const StudyDesign& design,
                            const std::vector<StateObservation>& observations, int n_states,
                            const Priors& priors, const ChainConfig& config, int n_chains,
                            int n_threads);

// Per-parameter posterior summary and convergence diagnostics.
struct ParamSummary {
  std::string name;
  double mean = 0.0, sd = 0.0;
  double q025 = 0.0, q500 = 0.0, q975 = 0.0;
  double ess = 0.0;   // NaN when undefined
  double rhat = 0.0;  // NaN when undefined (e.g. constant chain)
  bool degenerate = false;
};

std::vector<ParamSummary> diagnostics(const PosteriorSamples& samples);

// Split-Rhat and autocorrelation ESS for one parameter given per-chain
// draw sequences; exposed for reuse and testing.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

}  // namespace ecotraj

#endif  // ECOTRAJ_INFERENCE_HPP
