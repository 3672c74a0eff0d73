#ifndef ECOTRAJ_SPATIAL_HPP
#define ECOTRAJ_SPATIAL_HPP

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "ecotraj/rng.hpp"

namespace ecotraj {

// Mean Earth radius in kilometers; distances use the sphere model.
inline constexpr double kEarthRadiusKm = 6371.0088;

struct PlotGeometry {
  int plot_id = 0;
  double lat = 0.0;  // degrees, |lat| <= 90
  double lon = 0.0;  // degrees, |lon| <= 180
};

// Great-circle distance in kilometers.
double geodesic_km(const PlotGeometry& a, const PlotGeometry& b);

// Symmetric matrix of pairwise geodesic distances, zero diagonal.
Eigen::MatrixXd distance_matrix(std::span<const PlotGeometry> plots);

// C_ij = sigma2 * exp(-D_ij / phi).
Eigen::MatrixXd exp_covariance(const Eigen::MatrixXd& D, double sigma2, double phi);

// Centered hexagon of axial-coordinate cells: n_rings rings around one
// center cell, n_S = 1 + 3 n (n+1) cells, adjacency = the six axial
// neighbors. Cell order is fixed (sorted by axial (r, q)) and is the
// subplot numbering used throughout.
class HexLattice {
 public:
  HexLattice(Eigen::MatrixXd adjacency, std::vector<std::pair<int, int>> axial, int n_rings);

  int n_subplots() const { return static_cast<int>(adjacency_.rows()); }
  int n_rings() const { return n_rings_; }  // -1 for lattices built from an edge list
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  Eigen::VectorXd degrees() const { return adjacency_.rowwise().sum(); }
  // Axial (q, r) coordinates per cell; empty for edge-list lattices.
  const std::vector<std::pair<int, int>>& axial_coords() const { return axial_; }

 private:
  Eigen::MatrixXd adjacency_;
  std::vector<std::pair<int, int>> axial_;
  int n_rings_;
};

HexLattice build_hex_lattice(int n_rings);
// Lattice from an explicit 1-based edge list (dataset adjacency override).
HexLattice lattice_from_edges(int n_subplots, std::span<const std::pair<int, int>> edges);

// ICAR precision R - W (rank n_S - 1) with its spectral factorization and
// the generalized inverse Q on the sum-to-zero subspace.
struct IcarStructure {
  Eigen::MatrixXd precision;   // R - W
  Eigen::MatrixXd Q;           // pseudo-inverse of precision, Q 1 = 0
  Eigen::MatrixXd eigvecs;     // columns: eigenvectors of R - W
  Eigen::VectorXd eigvals;     // ascending; eigvals[0] ~ 0 is the constant mode

  int dim() const { return static_cast<int>(precision.rows()); }
};

// Throws a structure error when the lattice is disconnected (rank
// deficiency above one).
IcarStructure icar_structure(const HexLattice& lattice);

// Draw from N(0, sigma2_eps * Q) restricted to the sum-to-zero subspace.
// An unconstrained draw (including a dummy component along the constant
// vector) is corrected by conditioning by kriging on 1'z = 0.
Eigen::VectorXd sample_constrained_icar(const IcarStructure& structure, double sigma2_eps, Rng& rng);

// Covariance queries on the latent-noise fields, used by tests and by the
// trajectory covariance assembly.
struct SiteTime {
  int plot = 0;
  int subplot = 0;
  int year = 0;
};

// Plot-level field: sigma2 if same plot and year, sigma2 exp(-D_ij/phi) for
// distinct plots in the same year, 0 across years.
double plot_noise_covariance(const SiteTime& a, const SiteTime& b, double sigma2,
                             const Eigen::MatrixXd& D, double phi);

// Subplot-level field within one plot: sigma2 on the diagonal, sigma2 Q_sr
// across subplots in the same year, 0 across years. Cross-plot queries are
// a domain error.
double subplot_noise_covariance(const SiteTime& a, const SiteTime& b, double sigma2,
                                const IcarStructure& structure);

}  // namespace ecotraj

#endif  // ECOTRAJ_SPATIAL_HPP
