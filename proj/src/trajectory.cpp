#include "ecotraj/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecotraj/errors.hpp"

namespace ecotraj {

StudyDesign::StudyDesign(std::vector<PlotGeometry> plots, HexLattice lattice,
                         std::vector<int> start_year, std::vector<int> end_year,
                         Eigen::MatrixXd landscape, std::vector<Eigen::MatrixXd> climate)
    : plots_(std::move(plots)),
      lattice_(std::move(lattice)),
      start_year_(std::move(start_year)),
      end_year_(std::move(end_year)),
      landscape_(std::move(landscape)),
      climate_(std::move(climate)) {
  const int n = n_plots();
  if (n < 1) throw_data("design_plots", "design needs at least one plot");
  if (static_cast<int>(start_year_.size()) != n || static_cast<int>(end_year_.size()) != n ||
      static_cast<int>(climate_.size()) != n)
    throw_data("design_shape", "per-plot tables must match the plot count");
  if (landscape_.rows() != n_sites())
    throw_data("design_landscape", "landscape covariates must have one row per (plot, subplot)");
  if (!(landscape_.col(0).array() == 1.0).all())
    throw_data("design_intercept", "landscape covariates must carry an intercept column of ones");

  const int p_x = static_cast<int>(climate_.front().cols());
  for (int i = 0; i < n; ++i) {
    if (start_year_[i] >= end_year_[i])
      throw_data("design_interval", "plot " + std::to_string(plots_[i].plot_id) +
                                        " needs start year < end year");
    if (climate_[i].rows() != interval_years(i) || climate_[i].cols() != p_x)
      throw_data("design_climate", "plot " + std::to_string(plots_[i].plot_id) +
                                       " needs one climate row per drift year");
    if (!(climate_[i].col(0).array() == 1.0).all())
      throw_data("design_intercept", "climate covariates must carry an intercept column of ones");
  }

  D_ = distance_matrix(plots_);
  int first = start_year_[0] + 1, last = end_year_[0];
  for (int i = 1; i < n; ++i) {
    first = std::min(first, start_year_[i] + 1);
    last = std::max(last, end_year_[i]);
  }
  first_model_year_ = first;
  n_model_years_ = last - first + 1;

  climate_sum_.reserve(n);
  for (int i = 0; i < n; ++i) climate_sum_.push_back(climate_[i].colwise().sum());
}

Eigen::RowVectorXd StudyDesign::climate_row(int plot, int year) const {
  if (!plot_active(plot, year))
    throw_data("climate_year", "no climate covariates for plot " +
                                   std::to_string(plots_[plot].plot_id) + " in year " +
                                   std::to_string(year));
  return climate_[plot].row(year - start_year_[plot] - 1);
}

void validate_params(const StudyDesign& design, const TrajectoryParams& params) {
  if (params.alpha.rows() != design.n_landscape_covariates())
    throw_domain("params_alpha", "alpha must have one row per landscape covariate");
  if (params.beta.rows() != design.n_climate_covariates())
    throw_domain("params_beta", "beta must have one row per climate covariate");
  if (params.beta.cols() != params.alpha.cols() || params.alpha.cols() < 1)
    throw_domain("params_dims", "alpha and beta must share K-1 columns");
  if (!(params.sigma2_zeta > 0.0 && params.sigma2_xi > 0.0 && params.sigma2_eps > 0.0))
    throw_domain("params_variance", "variances must be positive");
  if (!(params.phi > 0.0)) throw_domain("params_phi", "phi must be positive");
  if (design.n_plots() > 1 && params.phi > design.max_distance() / 3.0)
    throw_domain("params_phi", "phi exceeds one third of the maximum plot distance");
}

Eigen::MatrixXd initial_eta(const StudyDesign& design, const Eigen::MatrixXd& alpha,
                            const Eigen::MatrixXd& zeta) {
  if (alpha.rows() != design.n_landscape_covariates())
    throw_domain("eta0_alpha", "alpha rows must match the landscape covariate count");
  if (zeta.rows() != design.n_sites() || zeta.cols() != alpha.cols())
    throw_domain("eta0_zeta", "zeta must be n_sites x (K-1)");
  return design.landscape() * alpha + zeta;
}

Eigen::VectorXd drift_step(const Eigen::RowVectorXd& x, const Eigen::MatrixXd& beta) {
  if (x.cols() != beta.rows())
    throw_domain("drift_dims", "climate covariate length must match beta rows");
  return (x * beta).transpose();
}

Eigen::VectorXd accumulate_displacement(const StudyDesign& design, const TrajectoryParams& params,
                                        const LatentField& field, int plot, int subplot) {
  const int K1 = params.n_dims();
  Eigen::VectorXd disp = (design.climate_sum(plot) * params.beta).transpose();
  for (int year = design.start_year(plot) + 1; year <= design.end_year(plot); ++year) {
    const int ty = year - design.first_model_year();
    const int tp = year - design.start_year(plot) - 1;
    if (ty < 0 || ty >= static_cast<int>(field.xi.size()) ||
        tp >= static_cast<int>(field.eps[plot].size()))
      throw_data("field_year", "latent field does not cover year " + std::to_string(year));
    disp += field.xi[ty].row(plot).transpose().head(K1);
    disp += field.eps[plot][tp].row(subplot).transpose().head(K1);
  }
  return disp;
}

Eigen::VectorXd accumulate(const StudyDesign& design, const TrajectoryParams& params,
                           const LatentField& field, int plot, int subplot) {
  return field.eta0.row(design.site(plot, subplot)).transpose() +
         accumulate_displacement(design, params, field, plot, subplot);
}

SimulationResult simulate_dataset(const StudyDesign& design, const TrajectoryParams& params,
                                  Rng& rng) {
  validate_params(design, params);
  const int K1 = params.n_dims();
  const int n_plots = design.n_plots();
  const int n_sub = design.n_subplots();

  LatentField field;
  field.zeta.resize(design.n_sites(), K1);
  const double sd_zeta = std::sqrt(params.sigma2_zeta);
  for (int u = 0; u < design.n_sites(); ++u)
    for (int k = 0; k < K1; ++k) field.zeta(u, k) = sd_zeta * rng.norm();

  field.eta0 = initial_eta(design, params.alpha, field.zeta);

  // Plot-level noise, drawn jointly across plots per (year, k) so that
  // overlapping survey intervals share correlated terms.
  Eigen::LLT<Eigen::MatrixXd> corr_llt;
  if (n_plots > 1) {
    corr_llt.compute(exp_covariance(design.distances(), 1.0, params.phi));
    if (corr_llt.info() != Eigen::Success)
      throw_numeric("xi_factor", "plot correlation matrix is not positive definite");
  }
  const double sd_xi = std::sqrt(params.sigma2_xi);
  field.xi.resize(design.n_model_years());
  for (int t = 0; t < design.n_model_years(); ++t) {
    field.xi[t].resize(n_plots, K1);
    for (int k = 0; k < K1; ++k) {
      Eigen::VectorXd z(n_plots);
      for (int i = 0; i < n_plots; ++i) z[i] = rng.norm();
      if (n_plots > 1) z = corr_llt.matrixL() * z;
      field.xi[t].col(k) = sd_xi * z;
    }
  }

  const IcarStructure icar = icar_structure(design.lattice());
  field.eps.resize(n_plots);
  for (int i = 0; i < n_plots; ++i) {
    field.eps[i].resize(design.interval_years(i));
    for (int tp = 0; tp < design.interval_years(i); ++tp) {
      field.eps[i][tp].resize(n_sub, K1);
      for (int k = 0; k < K1; ++k)
        field.eps[i][tp].col(k) =
            n_sub > 1 ? sample_constrained_icar(icar, params.sigma2_eps, rng)
                      : Eigen::VectorXd::Zero(1);
    }
  }

  field.delta.resize(design.n_sites(), K1);
  for (int i = 0; i < n_plots; ++i)
    for (int s = 0; s < n_sub; ++s)
      field.delta.row(design.site(i, s)) =
          accumulate_displacement(design, params, field, i, s).transpose();

  SimulationResult result;
  result.observations.reserve(2 * design.n_sites());
  for (int i = 0; i < n_plots; ++i) {
    for (int s = 0; s < n_sub; ++s) {
      const int u = design.site(i, s);
      const LatentLocation at_start(field.eta0.row(u).transpose());
      const LatentLocation at_end(field.eta0.row(u).transpose() + field.delta.row(u).transpose());
      result.observations.push_back({design.plots()[i].plot_id, s + 1, design.start_year(i),
                                     sample_state(at_start, rng)});
      result.observations.push_back({design.plots()[i].plot_id, s + 1, design.end_year(i),
                                     sample_state(at_end, rng)});
    }
  }
  result.field = std::move(field);
  return result;
}

StudyDesign make_grid_design(const GridDesignConfig& config, Rng& rng) {
  if (config.n_plots < 1) throw_config("grid_plots", "need at least one plot");
  if (config.min_interval_years < 1 || config.max_interval_years < config.min_interval_years)
    throw_config("grid_interval", "invalid interval range");

  const int n_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(config.n_plots))));
  const double km_per_deg_lat = kEarthRadiusKm * 3.14159265358979323846 / 180.0;
  const double dlat = config.spacing_km / km_per_deg_lat;
  const double dlon =
      config.spacing_km / (km_per_deg_lat * std::cos(config.center_lat * 3.14159265358979323846 / 180.0));

  std::vector<PlotGeometry> plots;
  std::vector<int> start_year, end_year;
  for (int i = 0; i < config.n_plots; ++i) {
    const int row = i / n_cols, col = i % n_cols;
    plots.push_back({i + 1, config.center_lat + (row - 0.5 * (config.n_plots / n_cols)) * dlat,
                     config.center_lon + (col - 0.5 * n_cols) * dlon});
    const int jitter =
        config.start_jitter_years > 0
            ? static_cast<int>(rng.unif() * (2 * config.start_jitter_years + 1)) -
                  config.start_jitter_years
            : 0;
    const int interval = config.min_interval_years +
                         static_cast<int>(rng.unif() * (config.max_interval_years -
                                                        config.min_interval_years + 1));
    start_year.push_back(config.base_start_year + jitter);
    end_year.push_back(start_year.back() + interval);
  }

  HexLattice lattice = build_hex_lattice(config.n_rings);
  const int n_sites = config.n_plots * lattice.n_subplots();

  Eigen::MatrixXd landscape(n_sites, 1 + config.n_landscape_covariates);
  landscape.col(0).setOnes();
  // Plot-level covariates broadcast to subplots, mirroring the coarse
  // resolution of real landscape layers.
  for (int c = 1; c <= config.n_landscape_covariates; ++c)
    for (int i = 0; i < config.n_plots; ++i) {
      const double v = rng.norm();
      for (int s = 0; s < lattice.n_subplots(); ++s) landscape(i * lattice.n_subplots() + s, c) = v;
    }

  std::vector<Eigen::MatrixXd> climate;
  for (int i = 0; i < config.n_plots; ++i) {
    Eigen::MatrixXd x(end_year[i] - start_year[i], 1 + config.n_climate_covariates);
    x.col(0).setOnes();
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 1; c <= config.n_climate_covariates; ++c) x(r, c) = rng.norm();
    climate.push_back(std::move(x));
  }

  return StudyDesign(std::move(plots), std::move(lattice), std::move(start_year),
                     std::move(end_year), std::move(landscape), std::move(climate));
}

}  // namespace ecotraj
