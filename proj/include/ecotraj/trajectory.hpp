#ifndef ECOTRAJ_TRAJECTORY_HPP
#define ECOTRAJ_TRAJECTORY_HPP

#include <Eigen/Dense>
#include <vector>

#include "ecotraj/rng.hpp"
#include "ecotraj/spatial.hpp"
#include "ecotraj/stickbreak.hpp"

namespace ecotraj {

// Survey layout and covariates. Every plot carries the same subplot
// lattice and is observed at exactly two years, [start, end]; climate
// covariate rows cover the drift years start+1..end. Column 0 of both
// covariate tables is the intercept; remaining columns are standardized
// at ingestion.
class StudyDesign {
 public:
  StudyDesign(std::vector<PlotGeometry> plots, HexLattice lattice, std::vector<int> start_year,
              std::vector<int> end_year, Eigen::MatrixXd landscape,
              std::vector<Eigen::MatrixXd> climate);

  int n_plots() const { return static_cast<int>(plots_.size()); }
  int n_subplots() const { return lattice_.n_subplots(); }
  int n_sites() const { return n_plots() * n_subplots(); }
  int site(int plot, int subplot) const { return plot * n_subplots() + subplot; }

  const std::vector<PlotGeometry>& plots() const { return plots_; }
  const HexLattice& lattice() const { return lattice_; }
  const Eigen::MatrixXd& distances() const { return D_; }
  double max_distance() const { return D_.size() ? D_.maxCoeff() : 0.0; }

  int start_year(int plot) const { return start_year_[plot]; }
  int end_year(int plot) const { return end_year_[plot]; }
  int interval_years(int plot) const { return end_year_[plot] - start_year_[plot]; }

  // Calendar years carrying latent drift/noise terms: the union of all
  // plot intervals (start, end], as a contiguous range.
  int first_model_year() const { return first_model_year_; }
  int n_model_years() const { return n_model_years_; }
  bool plot_active(int plot, int year) const {
    return year > start_year_[plot] && year <= end_year_[plot];
  }

  int n_landscape_covariates() const { return static_cast<int>(landscape_.cols()); }
  int n_climate_covariates() const { return static_cast<int>(climate_.front().cols()); }
  const Eigen::MatrixXd& landscape() const { return landscape_; }
  // Climate covariates of one plot for year in (start, end].
  Eigen::RowVectorXd climate_row(int plot, int year) const;
  // Sum of climate rows over the plot's interval.
  const Eigen::RowVectorXd& climate_sum(int plot) const { return climate_sum_[plot]; }

 private:
  std::vector<PlotGeometry> plots_;
  HexLattice lattice_;
  std::vector<int> start_year_, end_year_;
  Eigen::MatrixXd landscape_;
  std::vector<Eigen::MatrixXd> climate_;
  std::vector<Eigen::RowVectorXd> climate_sum_;
  Eigen::MatrixXd D_;
  int first_model_year_ = 0;
  int n_model_years_ = 0;
};

// All unknowns of the latent trajectory model.
struct TrajectoryParams {
  Eigen::MatrixXd alpha;  // P_h x (K-1), initial-condition coefficients
  Eigen::MatrixXd beta;   // P_x x (K-1), drift coefficients
  double sigma2_zeta = 1.0;
  double sigma2_xi = 1.0;
  double sigma2_eps = 1.0;
  double phi = 1.0;  // km

  int n_dims() const { return static_cast<int>(alpha.cols()); }  // K-1
};

// Throws unless dimensions agree with the design, variances are positive,
// and phi lies in (0, max(D)/3] (any positive phi for single-plot designs).
void validate_params(const StudyDesign& design, const TrajectoryParams& params);

// Latent Gaussian components. Site rows are indexed by
// StudyDesign::site(plot, subplot); model years by year - first_model_year.
struct LatentField {
  Eigen::MatrixXd zeta;                          // n_sites x (K-1)
  std::vector<Eigen::MatrixXd> xi;               // [model year] n_plots x (K-1)
  std::vector<std::vector<Eigen::MatrixXd>> eps; // [plot][year offset] n_subplots x (K-1)
  Eigen::MatrixXd eta0;                          // n_sites x (K-1)
  Eigen::MatrixXd delta;                         // n_sites x (K-1), accumulated displacement
};

// eta0 = h' alpha + zeta per site.
Eigen::MatrixXd initial_eta(const StudyDesign& design, const Eigen::MatrixXd& alpha,
                            const Eigen::MatrixXd& zeta);

// One year of deterministic drift, beta' x.
Eigen::VectorXd drift_step(const Eigen::RowVectorXd& x, const Eigen::MatrixXd& beta);

// Accumulated displacement of one site over its plot's interval:
// beta' sum_t x + sum_t xi + sum_t eps.
Eigen::VectorXd accumulate_displacement(const StudyDesign& design, const TrajectoryParams& params,
                                        const LatentField& field, int plot, int subplot);

// Final latent location eta0 + displacement.
Eigen::VectorXd accumulate(const StudyDesign& design, const TrajectoryParams& params,
                           const LatentField& field, int plot, int subplot);

struct SimulationResult {
  std::vector<StateObservation> observations;  // two per site (start and end year)
  LatentField field;                           // generating ground truth
};

// Forward-simulate a complete dataset: draw all latent components with
// their model covariances (xi jointly across plots per year) and emit one
// state per site at the start and end survey years.
SimulationResult simulate_dataset(const StudyDesign& design, const TrajectoryParams& params,
                                  Rng& rng);

// Synthetic design on a coarse lat/lon grid with staggered survey
// intervals, for simulation studies.
struct GridDesignConfig {
  int n_plots = 20;
  int n_rings = 1;
  int n_landscape_covariates = 2;  // beyond the intercept
  int n_climate_covariates = 2;    // beyond the intercept
  double spacing_km = 20.0;
  double center_lat = 66.0;
  double center_lon = -155.0;
  int base_start_year = 1980;
  int start_jitter_years = 2;
  int min_interval_years = 8;
  int max_interval_years = 12;
};

StudyDesign make_grid_design(const GridDesignConfig& config, Rng& rng);

}  // namespace ecotraj

#endif  // ECOTRAJ_TRAJECTORY_HPP
