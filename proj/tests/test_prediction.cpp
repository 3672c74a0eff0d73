#include <doctest.h>

#include <cmath>

#include "ecotraj/errors.hpp"
#include "ecotraj/prediction.hpp"
#include "ecotraj/rng.hpp"

using namespace ecotraj;

namespace {

// Observed subplot transition counts of the case-study summary table,
// rows/cols ordered Forest, Tall, Low, Barren, Other.
constexpr int kCounts[5][5] = {{587, 0, 0, 0, 5},
                               {15, 440, 0, 0, 0},
                               {117, 66, 4043, 0, 4},
                               {0, 0, 17, 1107, 4},
                               {4, 4, 17, 26, 944}};

std::vector<StateObservation> paired_observations_from_counts() {
  std::vector<StateObservation> obs;
  int site = 0;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      for (int n = 0; n < kCounts[r][c]; ++n) {
        ++site;
        obs.push_back({site, 1, 1980, r + 1});
        obs.push_back({site, 1, 2010, c + 1});
      }
  return obs;
}

PosteriorSamples toy_samples(int n_draws, int n_sites, const Eigen::VectorXd& eta0,
                             const Eigen::VectorXd& delta) {
  // one latent dimension (two states); every site shares eta0/delta
  PosteriorSamples s;
  s.n_states = 2;
  s.n_sites = n_sites;
  s.n_chains = 1;
  s.draws_per_chain = n_draws;
  s.params.resize(n_draws, 0);
  s.eta0.resize(n_draws, n_sites);
  s.delta.resize(n_draws, n_sites);
  for (int q = 0; q < n_draws; ++q)
    for (int u = 0; u < n_sites; ++u) {
      s.eta0(q, u) = eta0[u];
      s.delta(q, u) = delta[u];
    }
  return s;
}

}  // namespace

TEST_CASE("empirical transition matrix reproduces the observed count ratios") {
  const TransitionMatrix tm = empirical_transition_matrix(paired_observations_from_counts(), 5);
  CHECK(tm.probs(0, 0) == doctest::Approx(587.0 / 592.0).epsilon(1e-14));
  CHECK(tm.probs(2, 0) == doctest::Approx(117.0 / 4230.0).epsilon(1e-14));
  CHECK(tm.row_counts[0] == 592.0);
  CHECK(tm.row_counts[2] == 4230.0);
  for (int r = 0; r < 5; ++r) CHECK(std::abs(tm.probs.row(r).sum() - 1.0) < 1e-12);
  CHECK(tm.empty_rows.empty());
}

TEST_CASE("empirical transition matrix edge cases") {
  // same state twice -> identity row; unseen start states flagged
  std::vector<StateObservation> obs = {{1, 1, 2000, 2}, {1, 1, 2010, 2}};
  const TransitionMatrix tm = empirical_transition_matrix(obs, 3);
  CHECK(tm.probs(1, 1) == 1.0);
  CHECK(tm.probs(1, 0) == 0.0);
  CHECK(std::isnan(tm.probs(0, 0)));
  CHECK(tm.empty_rows == std::vector<int>{1, 3});

  // missing pair names the site
  std::vector<StateObservation> missing = {{1, 1, 2000, 2}, {1, 1, 2010, 2}, {2, 4, 2000, 1}};
  try {
    empirical_transition_matrix(missing, 3);
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("plot 2") != std::string::npos);
    CHECK(std::string(e.what()).find("subplot 4") != std::string::npos);
  }
}

TEST_CASE("predictive estimator matches the enumerated two-state law") {
  // 40 identical sites: start prob p0 = logit^{-1}(0.3), end adds delta
  const int n_sites = 40, n_draws = 10000;
  const double eta0 = 0.3, delta = -1.1;
  const PosteriorSamples s =
      toy_samples(n_draws, n_sites, Eigen::VectorXd::Constant(n_sites, eta0),
                  Eigen::VectorXd::Constant(n_sites, delta));
  Rng rng(7);
  const PredictiveResult result = predict_transition_matrix(s, PredictOptions{}, rng);
  // end-state law is independent of the start state
  const double pT = inv_logit(eta0 + delta);
  for (int r = 0; r < 2; ++r) {
    CHECK(std::abs(result.estimate.probs(r, 0) - pT) < 0.01);
    CHECK(std::abs(result.estimate.probs(r, 1) - (1.0 - pT)) < 0.01);
  }
  CHECK(result.n_draws == n_draws);
  // quantile sandwich: lower <= mean <= upper elementwise
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      CHECK(result.estimate.lower(r, c) <= result.estimate.probs(r, c) + 1e-12);
      CHECK(result.estimate.upper(r, c) >= result.estimate.probs(r, c) - 1e-12);
    }
}

TEST_CASE("degenerate saturated draws give the identity matrix") {
  const int n_sites = 30, n_draws = 2000;
  Eigen::VectorXd eta0(n_sites);
  for (int u = 0; u < n_sites; ++u) eta0[u] = u % 2 == 0 ? 9.0 : -9.0;
  const PosteriorSamples s =
      toy_samples(n_draws, n_sites, eta0, Eigen::VectorXd::Zero(n_sites));
  Rng rng(11);
  const PredictiveResult result = predict_transition_matrix(s, PredictOptions{}, rng);
  CHECK(result.estimate.probs(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(result.estimate.probs(1, 1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("zero-denominator rows are excluded per draw and flagged") {
  // a single site always starting in state 1: row 2 never has a denominator
  const PosteriorSamples s = toy_samples(500, 1, Eigen::VectorXd::Constant(1, 9.0),
                                         Eigen::VectorXd::Zero(1));
  Rng rng(13);
  const PredictiveResult result = predict_transition_matrix(s, PredictOptions{}, rng);
  CHECK(result.defined_draws[0] == 500);
  CHECK(result.defined_draws[1] == 0);
  CHECK(result.estimate.empty_rows == std::vector<int>{2});
  CHECK(std::isnan(result.estimate.probs(1, 0)));
  CHECK(result.estimate.probs(0, 0) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("conditioning on observed start states pins the rows") {
  const int n_sites = 20;
  std::vector<StateObservation> starts;
  for (int u = 0; u < n_sites; ++u) starts.push_back({u + 1, 1, 1980, 2});
  const PosteriorSamples s = toy_samples(800, n_sites, Eigen::VectorXd::Zero(n_sites),
                                         Eigen::VectorXd::Constant(n_sites, 2.0));
  PredictOptions options;
  options.condition_on_observed_start = true;
  Rng rng(17);
  const PredictiveResult result = predict_transition_matrix(s, options, rng, &starts);
  // every site starts in state 2, so row 1 is never defined
  CHECK(result.estimate.empty_rows == std::vector<int>{1});
  CHECK(result.estimate.probs(1, 0) == doctest::Approx(inv_logit(2.0)).epsilon(0.02));
}

TEST_CASE("scenario presets echo the published settings") {
  const ClimateScenario hi = scenario_preset("high-emission");
  CHECK(hi.horizon_years == 120);
  CHECK(hi.delta_temp == 8.0);
  CHECK(hi.delta_precip == 2.0);
  const ClimateScenario lo = scenario_preset("low-emission");
  CHECK(lo.horizon_years == 120);
  CHECK(lo.delta_temp == 4.0);
  CHECK(lo.delta_precip == 2.0);
  const ClimateScenario zero = scenario_preset("zero");
  CHECK(zero.delta_temp == 0.0);
  CHECK(zero.delta_precip == 0.0);
  CHECK_THROWS_AS(scenario_preset("mid"), Error);
}

TEST_CASE("scenario covariates sum to the totals and scale with the horizon") {
  ClimateScenario s;
  s.horizon_years = 120;
  s.delta_temp = 8.0;
  s.delta_precip = 2.0;
  const Eigen::MatrixXd x = build_scenario_covariates(s);
  CHECK(x.rows() == 120);
  CHECK(x.cols() == 3);
  CHECK(x.col(0).sum() == doctest::Approx(120.0).epsilon(1e-14));
  CHECK(x.col(1).sum() == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(x.col(2).sum() == doctest::Approx(2.0).epsilon(1e-12));

  // doubling the horizon at fixed per-year deltas doubles every column sum
  ClimateScenario d = s;
  d.horizon_years = 240;
  d.delta_temp = 16.0;
  d.delta_precip = 4.0;
  const Eigen::MatrixXd x2 = build_scenario_covariates(d);
  for (int c = 0; c < 3; ++c)
    CHECK(x2.col(c).sum() == doctest::Approx(2.0 * x.col(c).sum()).epsilon(1e-12));

  // user-supplied per-year path takes precedence
  ClimateScenario path;
  path.yearly_path = Eigen::MatrixXd::Constant(10, 2, 0.25);
  const Eigen::MatrixXd xp = build_scenario_covariates(path);
  CHECK(xp.rows() == 10);
  CHECK(xp.cols() == 3);
  CHECK(xp.col(1).sum() == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("scenario projection rebuilds the displacement from beta draws") {
  // two plots, one subplot each; beta known exactly in every draw
  std::vector<PlotGeometry> plots = {{1, 66.0, -155.0}, {2, 66.8, -154.0}};
  HexLattice lattice = build_hex_lattice(0);
  Eigen::MatrixXd h = Eigen::MatrixXd::Ones(2, 1);
  std::vector<Eigen::MatrixXd> climate = {Eigen::MatrixXd::Ones(10, 3),
                                          Eigen::MatrixXd::Ones(10, 3)};
  StudyDesign design(std::move(plots), std::move(lattice), {1980, 1980}, {1990, 1990},
                     std::move(h), std::move(climate));

  const int n_draws = 4000;
  PosteriorSamples s;
  s.n_states = 2;
  s.n_sites = 2;
  s.n_chains = 1;
  s.draws_per_chain = n_draws;
  s.param_names = {"alpha[0][1]", "beta[0][1]", "beta[1][1]", "beta[2][1]",
                   "sigma2_zeta", "sigma2_xi", "sigma2_eps", "phi"};
  s.params.resize(n_draws, 8);
  s.eta0.resize(n_draws, 2);
  s.delta.resize(n_draws, 2);
  for (int q = 0; q < n_draws; ++q) {
    s.params.row(q) << 0.0, 0.01, 0.05, -0.2, 0.3, 0.02, 0.02, 20.0;
    s.eta0.row(q) << 0.0, 0.0;
    s.delta.row(q) << 0.0, 0.0;
  }

  ClimateScenario scenario;
  scenario.horizon_years = 120;
  scenario.delta_temp = 8.0;
  scenario.delta_precip = 2.0;

  PredictOptions options;
  options.redraw_noise = false;  // drift-only projection
  Rng rng(23);
  const PredictiveResult result = predict_transition_matrix_scenario(
      s, design, scenario, CovariateTransform{}, options, rng);
  // deterministic displacement: 120*0.01 + 8*0.05 + 2*(-0.2) = 1.2
  const double pT = inv_logit(0.0 + 1.2);
  CHECK(result.estimate.probs(0, 0) == doctest::Approx(pT).epsilon(0.03));
  CHECK(result.estimate.probs(1, 0) == doctest::Approx(pT).epsilon(0.03));

  // with noise redrawn the displacement gains variance but keeps its center
  PredictOptions noisy;
  noisy.redraw_noise = true;
  Rng rng2(29);
  const PredictiveResult wide = predict_transition_matrix_scenario(
      s, design, scenario, CovariateTransform{}, noisy, rng2);
  // logistic curvature pulls the mean transition toward 1/2 under noise
  CHECK(wide.estimate.probs(0, 0) > 0.5);
  CHECK(wide.estimate.probs(0, 0) < pT + 0.02);

  // standardization of scenario covariates rescales the deterministic drift
  CovariateTransform transform;
  transform.mean = Eigen::VectorXd::Zero(2);
  transform.sd = Eigen::VectorXd::Constant(2, 2.0);
  Rng rng3(31);
  const PredictiveResult scaled = predict_transition_matrix_scenario(
      s, design, scenario, transform, options, rng3);
  const double pT_scaled = inv_logit(120 * 0.01 + (8.0 / 2.0) * 0.05 + (2.0 / 2.0) * (-0.2));
  CHECK(scaled.estimate.probs(0, 0) == doctest::Approx(pT_scaled).epsilon(0.03));
}

TEST_CASE("posterior samples without latent summaries are rejected") {
  PosteriorSamples s;
  s.n_states = 2;
  s.n_sites = 1;
  s.params.resize(10, 0);
  Rng rng(37);
  CHECK_THROWS_AS(predict_transition_matrix(s, PredictOptions{}, rng), Error);
}
