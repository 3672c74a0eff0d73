#ifndef ECOTRAJ_PREDICTION_HPP
#define ECOTRAJ_PREDICTION_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ecotraj/inference.hpp"
#include "ecotraj/rng.hpp"
#include "ecotraj/stickbreak.hpp"
#include "ecotraj/trajectory.hpp"

namespace ecotraj {

// Row-stochastic start-state -> end-state probability matrix. Rows whose
// start state never occurs are flagged and left as NaN rather than filled.
struct TransitionMatrix {
  Eigen::MatrixXd probs;       // K x K
  Eigen::VectorXd row_counts;  // denominator per row (mean count over draws)
  Eigen::MatrixXd lower, upper;  // elementwise 95% bounds; empty without draws
  std::vector<int> empty_rows;   // 1-based start states with zero denominator

  int n_states() const { return static_cast<int>(probs.rows()); }
  bool has_interval() const { return lower.size() > 0; }
};

// Indicator-ratio transition matrix from paired observations: each
// (plot, subplot) must appear in exactly two years.
TransitionMatrix empirical_transition_matrix(const std::vector<StateObservation>& observations,
                                             int n_states);

// Climate scenario applied on top of a fitted model.
struct ClimateScenario {
  std::string name = "custom";
  int horizon_years = 120;
  double delta_temp = 0.0;    // total change over the horizon, degrees C
  double delta_precip = 0.0;  // total change over the horizon, mm/day
  // Optional user path: one row per year of raw non-intercept climate
  // covariates; overrides the uniform-per-year rule when non-empty.
  Eigen::MatrixXd yearly_path;

  bool has_path() const { return yearly_path.size() > 0; }
};

// Built-in presets: "high-emission" (120 y, +8 C, +2 mm), "low-emission"
// (120 y, +4 C, +2 mm), "zero" (120 y, no change).
ClimateScenario scenario_preset(const std::string& name);

// Raw per-year climate covariate rows [intercept, temp change, precip
// change] whose non-intercept columns sum to the scenario totals; with a
// user path, its rows are passed through behind the intercept.
Eigen::MatrixXd build_scenario_covariates(const ClimateScenario& scenario);

struct PredictOptions {
  // Redraw the plot/subplot noise sums over the scenario horizon. Off, the
  // projection is drift-only (sensitivity analysis).
  bool redraw_noise = true;
  // Use observed start states instead of resampling them from eta0
  // (extension; the default follows the posterior-predictive recipe).
  bool condition_on_observed_start = false;
  int ci_draws_minimum = 1;
};

struct PredictiveResult {
  TransitionMatrix estimate;
  // Per-row number of draws with a nonzero denominator.
  Eigen::VectorXi defined_draws;
  int n_draws = 0;
};

// Posterior-predictive transition matrix over the observed intervals:
// per draw, resample start states from eta0, end states from
// eta0 + delta, tabulate the count ratio, then average over draws with
// elementwise quantile intervals.
PredictiveResult predict_transition_matrix(const PosteriorSamples& samples,
                                           const PredictOptions& options, Rng& rng,
                                           const std::vector<StateObservation>* observed_start = nullptr);

// Scenario variant: the displacement is rebuilt per draw from beta and
// freshly drawn plot/subplot noise over the horizon, using the draw's
// variance and range parameters. `standardize` maps raw scenario rows to
// the fitted covariate scale (column mean/sd of the training data).
struct CovariateTransform {
  Eigen::VectorXd mean;  // per non-intercept column
  Eigen::VectorXd sd;
};

PredictiveResult predict_transition_matrix_scenario(const PosteriorSamples& samples,
                                                    const StudyDesign& design,
                                                    const ClimateScenario& scenario,
                                                    const CovariateTransform& climate_transform,
                                                    const PredictOptions& options, Rng& rng);

}  // namespace ecotraj

#endif  // ECOTRAJ_PREDICTION_HPP
