#include "ecotraj/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecotraj/errors.hpp"

namespace ecotraj {

namespace {
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
// Eigenvalues of R - W below this (relative to the largest) count as the
// constant mode.
constexpr double kNullTol = 1e-9;
}  // namespace

double geodesic_km(const PlotGeometry& a, const PlotGeometry& b) {
  if (std::abs(a.lat) > 90.0 || std::abs(b.lat) > 90.0 || std::abs(a.lon) > 180.0 ||
      std::abs(b.lon) > 180.0)
    throw_domain("plot_coords", "plot coordinates outside valid lat/lon range");
  const double lat1 = a.lat * kDegToRad, lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  // Haversine; stable for near-zero and antipodal separations.
  const double s1 = std::sin(0.5 * dlat), s2 = std::sin(0.5 * dlon);
  const double h = s1 * s1 + std::cos(lat1) * std::cos(lat2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

Eigen::MatrixXd distance_matrix(std::span<const PlotGeometry> plots) {
  const int n = static_cast<int>(plots.size());
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) D(i, j) = D(j, i) = geodesic_km(plots[i], plots[j]);
  return D;
}

Eigen::MatrixXd exp_covariance(const Eigen::MatrixXd& D, double sigma2, double phi) {
  if (!(sigma2 > 0.0)) throw_domain("cov_sigma2", "exp_covariance needs sigma2 > 0");
  if (!(phi > 0.0)) throw_domain("cov_phi", "exp_covariance needs phi > 0");
  return sigma2 * (-D / phi).array().exp().matrix();
}

HexLattice::HexLattice(Eigen::MatrixXd adjacency, std::vector<std::pair<int, int>> axial,
                       int n_rings)
    : adjacency_(std::move(adjacency)), axial_(std::move(axial)), n_rings_(n_rings) {
  if (adjacency_.rows() != adjacency_.cols())
    throw_structure("lattice_shape", "adjacency matrix must be square");
  for (int s = 0; s < adjacency_.rows(); ++s) {
    if (adjacency_(s, s) != 0.0) throw_structure("lattice_diag", "adjacency diagonal must be zero");
    for (int r = s + 1; r < adjacency_.cols(); ++r)
      if (adjacency_(s, r) != adjacency_(r, s))
        throw_structure("lattice_symmetry", "adjacency matrix must be symmetric");
  }
}

HexLattice build_hex_lattice(int n_rings) {
  if (n_rings < 0) throw_domain("lattice_rings", "n_rings must be nonnegative");
  std::vector<std::pair<int, int>> cells;  // axial (q, r)
  for (int r = -n_rings; r <= n_rings; ++r)
    for (int q = -n_rings; q <= n_rings; ++q)
      if (std::abs(q + r) <= n_rings) cells.emplace_back(q, r);
  std::sort(cells.begin(), cells.end(),
            [](auto& a, auto& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });

  const int n = static_cast<int>(cells.size());
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
  static constexpr int kDirs[6][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, -1}, {-1, 1}};
  for (int s = 0; s < n; ++s)
    for (int t = s + 1; t < n; ++t)
      for (const auto& d : kDirs)
        if (cells[t].first == cells[s].first + d[0] && cells[t].second == cells[s].second + d[1]) {
          W(s, t) = W(t, s) = 1.0;
          break;
        }
  return HexLattice(std::move(W), std::move(cells), n_rings);
}

HexLattice lattice_from_edges(int n_subplots, std::span<const std::pair<int, int>> edges) {
  if (n_subplots < 1) throw_domain("lattice_size", "lattice needs at least one subplot");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n_subplots, n_subplots);
  for (const auto& [a, b] : edges) {
    if (a < 1 || a > n_subplots || b < 1 || b > n_subplots || a == b)
      throw_data("adjacency_edge",
                 "invalid adjacency edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
    W(a - 1, b - 1) = W(b - 1, a - 1) = 1.0;
  }
  return HexLattice(std::move(W), {}, -1);
}

IcarStructure icar_structure(const HexLattice& lattice) {
  const Eigen::MatrixXd& W = lattice.adjacency();
  const int n = lattice.n_subplots();
  Eigen::MatrixXd prec = Eigen::MatrixXd(W.rowwise().sum().asDiagonal()) - W;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(prec);
  if (eig.info() != Eigen::Success)
    throw_numeric("icar_eig", "eigendecomposition of the ICAR precision failed");
  Eigen::VectorXd vals = eig.eigenvalues();
  const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1.0);

  int n_null = 0;
  for (int j = 0; j < n; ++j)
    if (vals[j] < kNullTol * scale) ++n_null;
  if (n_null != 1)
    throw_structure("lattice_disconnected",
                    "ICAR precision has " + std::to_string(n_null) +
                        " null modes; the lattice must be connected");

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    if (vals[j] >= kNullTol * scale)
      Q += eig.eigenvectors().col(j) * eig.eigenvectors().col(j).transpose() / vals[j];

  return IcarStructure{std::move(prec), std::move(Q), eig.eigenvectors(), std::move(vals)};
}

Eigen::VectorXd sample_constrained_icar(const IcarStructure& structure, double sigma2_eps,
                                        Rng& rng) {
  if (!(sigma2_eps > 0.0)) throw_domain("icar_sigma2", "sample_constrained_icar needs sigma2 > 0");
  const int n = structure.dim();
  const double scale = std::max(structure.eigvals.cwiseAbs().maxCoeff(), 1.0);
  const double sd = std::sqrt(sigma2_eps);

  // Spectral draw; the constant mode gets a dummy N(0, sigma2) coefficient
  // so the kriging correction below acts on a proper Gaussian.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    const double lambda = structure.eigvals[j];
    const double coef_sd = lambda < kNullTol * scale ? sd : sd / std::sqrt(lambda);
    z += structure.eigvecs.col(j) * (coef_sd * rng.norm());
  }

  // Conditioning by kriging on 1'z = 0: with Cov(z, 1'z) = sigma2 * 1 and
  // Var(1'z) = n * sigma2, the correction is the mean adjustment.
  z.array() -= z.sum() / n;
  return z;
}

double plot_noise_covariance(const SiteTime& a, const SiteTime& b, double sigma2,
                             const Eigen::MatrixXd& D, double phi) {
  if (a.plot < 0 || a.plot >= D.rows() || b.plot < 0 || b.plot >= D.rows())
    throw_domain("plot_index", "plot index outside distance matrix");
  if (a.year != b.year) return 0.0;
  if (a.plot == b.plot) return sigma2;
  return sigma2 * std::exp(-D(a.plot, b.plot) / phi);
}

double subplot_noise_covariance(const SiteTime& a, const SiteTime& b, double sigma2,
                                const IcarStructure& structure) {
  if (a.plot != b.plot)
    throw_domain("eps_cross_plot", "subplot-level covariance is defined within one plot only");
  if (a.subplot < 0 || a.subplot >= structure.dim() || b.subplot < 0 || b.subplot >= structure.dim())
    throw_domain("subplot_index", "subplot index outside lattice");
  if (a.year != b.year) return 0.0;
  if (a.subplot == b.subplot) return sigma2;
  return sigma2 * structure.Q(a.subplot, b.subplot);
}

}  // namespace ecotraj
