#include "ecotraj/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include "ecotraj/errors.hpp"
#include "ecotraj/spatial.hpp"

namespace ecotraj {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Accumulates per-draw transition matrices into a mean with elementwise
// quantile bounds, skipping rows of draws where the denominator is zero.
class DrawTabulator {
 public:
  DrawTabulator(int n_states, bool keep_draws)
      : K_(n_states),
        sum_(Eigen::MatrixXd::Zero(n_states, n_states)),
        denom_sum_(Eigen::VectorXd::Zero(n_states)),
        defined_(Eigen::VectorXi::Zero(n_states)),
        keep_draws_(keep_draws) {
    if (keep_draws_) draws_.resize(K_ * K_);
  }

  void add(const Eigen::MatrixXi& counts) {
    ++n_draws_;
    for (int r = 0; r < K_; ++r) {
      const int denom = counts.row(r).sum();
      denom_sum_[r] += denom;
      if (denom == 0) continue;
      ++defined_[r];
      for (int c = 0; c < K_; ++c) {
        const double p = static_cast<double>(counts(r, c)) / denom;
        sum_(r, c) += p;
        if (keep_draws_) draws_[r * K_ + c].push_back(p);
      }
    }
  }

  PredictiveResult finish(int ci_minimum) {
    PredictiveResult out;
    out.n_draws = n_draws_;
    out.defined_draws = defined_;
    TransitionMatrix& tm = out.estimate;
    tm.probs = Eigen::MatrixXd::Constant(K_, K_, kNaN);
    tm.row_counts = denom_sum_ / std::max(1, n_draws_);
    tm.lower = Eigen::MatrixXd::Constant(K_, K_, kNaN);
    tm.upper = Eigen::MatrixXd::Constant(K_, K_, kNaN);
    for (int r = 0; r < K_; ++r) {
      if (defined_[r] == 0) {
        tm.empty_rows.push_back(r + 1);
        continue;
      }
      for (int c = 0; c < K_; ++c) {
        tm.probs(r, c) = sum_(r, c) / defined_[r];
        if (keep_draws_ && defined_[r] >= ci_minimum) {
          auto& v = draws_[r * K_ + c];
          std::sort(v.begin(), v.end());
          auto quantile = [&](double q) {
            const double pos = q * (static_cast<double>(v.size()) - 1);
            const auto lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, v.size() - 1);
            return v[lo] + (pos - lo) * (v[hi] - v[lo]);
          };
          tm.lower(r, c) = quantile(0.025);
          tm.upper(r, c) = quantile(0.975);
        }
      }
    }
    return out;
  }

 private:
  int K_;
  Eigen::MatrixXd sum_;
  Eigen::VectorXd denom_sum_;
  Eigen::VectorXi defined_;
  bool keep_draws_;
  std::vector<std::vector<double>> draws_;
  int n_draws_ = 0;
};

Eigen::VectorXd latent_row(const Eigen::MatrixXd& m, int draw, int site, int K1) {
  return m.row(draw).segment(site * K1, K1).transpose();
}

}  // namespace

TransitionMatrix empirical_transition_matrix(const std::vector<StateObservation>& observations,
                                             int n_states) {
  std::map<std::pair<int, int>, std::vector<StateObservation>> by_site;
  for (const auto& y : observations) by_site[{y.plot, y.subplot}].push_back(y);

  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(n_states, n_states);
  for (auto& [key, obs] : by_site) {
    if (obs.size() != 2)
      throw_data("obs_pair", "plot " + std::to_string(key.first) + ", subplot " +
                                 std::to_string(key.second) + " has " +
                                 std::to_string(obs.size()) + " observations; need exactly 2");
    if (obs[0].year == obs[1].year)
      throw_data("obs_pair", "plot " + std::to_string(key.first) + ", subplot " +
                                 std::to_string(key.second) + " has two observations in one year");
    const StateObservation& first = obs[0].year < obs[1].year ? obs[0] : obs[1];
    const StateObservation& last = obs[0].year < obs[1].year ? obs[1] : obs[0];
    if (first.state < 1 || first.state > n_states || last.state < 1 || last.state > n_states)
      throw_data("obs_state", "state outside 1.." + std::to_string(n_states));
    counts(first.state - 1, last.state - 1) += 1;
  }

  TransitionMatrix tm;
  tm.probs = Eigen::MatrixXd::Constant(n_states, n_states, kNaN);
  tm.row_counts.resize(n_states);
  for (int r = 0; r < n_states; ++r) {
    const int denom = counts.row(r).sum();
    tm.row_counts[r] = denom;
    if (denom == 0) {
      tm.empty_rows.push_back(r + 1);
      continue;
    }
    for (int c = 0; c < n_states; ++c)
      tm.probs(r, c) = static_cast<double>(counts(r, c)) / denom;
  }
  return tm;
}

ClimateScenario scenario_preset(const std::string& name) {
  ClimateScenario s;
  s.name = name;
  if (name == "high-emission") {
    s.horizon_years = 120;
    s.delta_temp = 8.0;
    s.delta_precip = 2.0;
  } else if (name == "low-emission") {
    s.horizon_years = 120;
    s.delta_temp = 4.0;
    s.delta_precip = 2.0;
  } else if (name == "zero") {
    s.horizon_years = 120;
    s.delta_temp = 0.0;
    s.delta_precip = 0.0;
  } else {
    throw_config("scenario_name", "unknown scenario preset '" + name + "'");
  }
  return s;
}

Eigen::MatrixXd build_scenario_covariates(const ClimateScenario& scenario) {
  if (scenario.horizon_years < 1) throw_config("scenario_horizon", "scenario horizon must be >= 1");
  if (scenario.has_path()) {
    Eigen::MatrixXd x(scenario.yearly_path.rows(), scenario.yearly_path.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(scenario.yearly_path.cols()) = scenario.yearly_path;
    return x;
  }
  const int H = scenario.horizon_years;
  Eigen::MatrixXd x(H, 3);
  x.col(0).setOnes();
  x.col(1).setConstant(scenario.delta_temp / H);
  x.col(2).setConstant(scenario.delta_precip / H);
  return x;
}

namespace {

PredictiveResult tabulate_over_draws(
    const PosteriorSamples& samples, const PredictOptions& options, Rng& rng,
    const std::vector<int>* start_states,
    const std::function<void(int, Eigen::MatrixXd&)>& displacement_for_draw) {
  const int K1 = samples.n_states - 1;
  const int n_sites = samples.n_sites;
  if (samples.eta0.size() == 0)
    throw_data("samples_latent", "posterior samples carry no latent summaries; refit with latent storage");

  DrawTabulator tab(samples.n_states, true);
  Eigen::MatrixXd disp(n_sites, K1);
  for (int q = 0; q < samples.n_draws(); ++q) {
    displacement_for_draw(q, disp);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(samples.n_states, samples.n_states);
    for (int u = 0; u < n_sites; ++u) {
      const Eigen::VectorXd eta0 = latent_row(samples.eta0, q, u, K1);
      int y0;
      if (start_states) {
        y0 = (*start_states)[u];
      } else {
        y0 = sample_state(LatentLocation(eta0), rng);
      }
      const int yT = sample_state(LatentLocation(eta0 + disp.row(u).transpose()), rng);
      counts(y0 - 1, yT - 1) += 1;
    }
    tab.add(counts);
  }
  return tab.finish(options.ci_draws_minimum);
}

}  // namespace

PredictiveResult predict_transition_matrix(const PosteriorSamples& samples,
                                           const PredictOptions& options, Rng& rng,
                                           const std::vector<StateObservation>* observed_start) {
  std::vector<int> start_states;
  if (options.condition_on_observed_start) {
    if (!observed_start)
      throw_config("predict_start", "conditioning on observed start states requires observations");
    // Observed starts must be supplied site-ordered by the caller.
    if (static_cast<int>(observed_start->size()) != samples.n_sites)
      throw_data("predict_start", "need one start observation per site");
    for (const auto& y : *observed_start) start_states.push_back(y.state);
  }
  const int K1 = samples.n_states - 1;
  if (samples.delta.size() == 0)
    throw_data("samples_latent", "posterior samples carry no displacement draws");
  return tabulate_over_draws(
      samples, options, rng, options.condition_on_observed_start ? &start_states : nullptr,
      [&](int q, Eigen::MatrixXd& disp) {
        for (int u = 0; u < samples.n_sites; ++u)
          disp.row(u) = latent_row(samples.delta, q, u, K1).transpose();
      });
}

PredictiveResult predict_transition_matrix_scenario(const PosteriorSamples& samples,
                                                    const StudyDesign& design,
                                                    const ClimateScenario& scenario,
                                                    const CovariateTransform& climate_transform,
                                                    const PredictOptions& options, Rng& rng) {
  const int K1 = samples.n_states - 1;
  const int p_h = design.n_landscape_covariates();
  const int p_x = design.n_climate_covariates();
  Eigen::MatrixXd x = build_scenario_covariates(scenario);
  if (x.cols() != p_x)
    throw_config("scenario_covariates", "scenario provides " + std::to_string(x.cols()) +
                                            " climate covariates but the model was fit with " +
                                            std::to_string(p_x));
  // Map raw scenario covariates onto the fitted (standardized) scale.
  if (climate_transform.mean.size() > 0) {
    if (climate_transform.mean.size() != p_x - 1 || climate_transform.sd.size() != p_x - 1)
      throw_config("scenario_transform", "climate transform must cover the non-intercept columns");
    for (int c = 1; c < p_x; ++c)
      x.col(c) = (x.col(c).array() - climate_transform.mean[c - 1]) / climate_transform.sd[c - 1];
  }
  const Eigen::RowVectorXd xsum = x.colwise().sum();
  const double horizon = static_cast<double>(x.rows());

  const int beta_offset = p_h * K1;
  const int var_offset = (p_h + p_x) * K1;
  const IcarStructure icar = design.n_subplots() > 1 ? icar_structure(design.lattice())
                                                     : IcarStructure{};

  return tabulate_over_draws(
      samples, options, rng, nullptr, [&](int q, Eigen::MatrixXd& disp) {
        Eigen::MatrixXd beta(p_x, K1);
        for (int p = 0; p < p_x; ++p)
          for (int k = 0; k < K1; ++k) beta(p, k) = samples.params(q, beta_offset + p * K1 + k);
        const Eigen::RowVectorXd det = xsum * beta;  // deterministic drift, all sites alike
        for (int u = 0; u < design.n_sites(); ++u) disp.row(u) = det;

        if (!options.redraw_noise) return;
        const double sigma2_xi = samples.params(q, var_offset + 1);
        const double sigma2_eps = samples.params(q, var_offset + 2);
        const double phi = samples.params(q, var_offset + 3);

        // Sum of H iid plot-level fields: one joint draw with variance
        // scaled by the horizon.
        if (design.n_plots() > 1) {
          Eigen::LLT<Eigen::MatrixXd> llt(exp_covariance(design.distances(), 1.0, phi));
          if (llt.info() != Eigen::Success)
            throw_numeric("scenario_corr", "plot correlation not positive definite in draw " +
                                               std::to_string(q));
          const double sd = std::sqrt(horizon * sigma2_xi);
          for (int k = 0; k < K1; ++k) {
            Eigen::VectorXd z(design.n_plots());
            for (int i = 0; i < z.size(); ++i) z[i] = rng.norm();
            z = llt.matrixL() * z;
            const Eigen::VectorXd xi_sum = sd * z;
            for (int i = 0; i < design.n_plots(); ++i)
              for (int s = 0; s < design.n_subplots(); ++s) disp(design.site(i, s), k) += xi_sum[i];
          }
        } else {
          const double sd = std::sqrt(horizon * sigma2_xi);
          for (int k = 0; k < K1; ++k) {
            const double xi_sum = sd * rng.norm();
            for (int s = 0; s < design.n_subplots(); ++s) disp(design.site(0, s), k) += xi_sum;
          }
        }

        if (design.n_subplots() > 1) {
          for (int i = 0; i < design.n_plots(); ++i)
            for (int k = 0; k < K1; ++k) {
              const Eigen::VectorXd eps_sum =
                  sample_constrained_icar(icar, horizon * sigma2_eps, rng);
              for (int s = 0; s < design.n_subplots(); ++s) disp(design.site(i, s), k) += eps_sum[s];
            }
        }
      });
}

}  // namespace ecotraj
