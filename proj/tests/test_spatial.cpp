#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "ecotraj/errors.hpp"
#include "ecotraj/rng.hpp"
#include "ecotraj/spatial.hpp"

using namespace ecotraj;

TEST_CASE("geodesic distances on the sphere") {
  const PlotGeometry a{1, 66.0, -160.0};
  CHECK(geodesic_km(a, a) == 0.0);

  const PlotGeometry e1{1, 0.0, 0.0}, e2{2, 0.0, 180.0};
  CHECK(geodesic_km(e1, e2) == doctest::Approx(3.14159265358979 * kEarthRadiusKm).epsilon(1e-9));

  const PlotGeometry n1{1, 66.0, -160.0}, n2{2, 67.0, -160.0};
  CHECK(geodesic_km(n1, n2) == doctest::Approx(kEarthRadiusKm * 3.14159265358979 / 180.0).epsilon(1e-9));
  CHECK(geodesic_km(n1, n2) == doctest::Approx(111.19).epsilon(1e-4));

  CHECK_THROWS_AS(geodesic_km(PlotGeometry{1, 91.0, 0.0}, a), Error);
}

TEST_CASE("distance matrix is symmetric with zero diagonal") {
  std::vector<PlotGeometry> plots = {{1, 66, -160}, {2, 66.5, -159}, {3, 67, -161}};
  const Eigen::MatrixXd D = distance_matrix(plots);
  CHECK(D.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK((D - D.transpose()).cwiseAbs().maxCoeff() == 0.0);
  // triangle inequality on the only triple
  CHECK(D(0, 2) <= D(0, 1) + D(1, 2) + 1e-9);
}

TEST_CASE("exponential covariance") {
  Eigen::MatrixXd D(2, 2);
  D << 0.0, 10.0, 10.0, 0.0;
  const Eigen::MatrixXd C = exp_covariance(D, 1.0, 10.0);
  CHECK(C(0, 0) == 1.0);
  CHECK(C(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  Eigen::MatrixXd D2(2, 2);
  D2 << 0.0, 100.0, 100.0, 0.0;
  CHECK(exp_covariance(D2, 2.0, 50.0)(0, 1) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(exp_covariance(D, -1.0, 10.0), Error);
  CHECK_THROWS_AS(exp_covariance(D, 1.0, 0.0), Error);

  // positive definite for distinct sites at any positive range
  Rng rng(3);
  std::vector<PlotGeometry> plots;
  for (int i = 0; i < 12; ++i)
    plots.push_back({i, 64.0 + 2.0 * rng.unif(), -160.0 + 3.0 * rng.unif()});
  const Eigen::MatrixXd Dr = distance_matrix(plots);
  for (const double phi : {0.5, 5.0, 50.0, 500.0}) {
    Eigen::LLT<Eigen::MatrixXd> llt(exp_covariance(Dr, 1.7, phi));
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("hex lattice cell counts and degrees") {
  const HexLattice single = build_hex_lattice(0);
  CHECK(single.n_subplots() == 1);
  CHECK(single.adjacency()(0, 0) == 0.0);

  const HexLattice ring1 = build_hex_lattice(1);
  CHECK(ring1.n_subplots() == 7);
  const Eigen::VectorXd deg1 = ring1.degrees();
  int center = -1;
  for (int s = 0; s < 7; ++s)
    if (ring1.axial_coords()[s] == std::make_pair(0, 0)) center = s;
  REQUIRE(center >= 0);
  CHECK(deg1[center] == 6.0);
  for (int s = 0; s < 7; ++s)
    if (s != center) CHECK(deg1[s] == 3.0);

  const HexLattice ring3 = build_hex_lattice(3);
  CHECK(ring3.n_subplots() == 37);
  CHECK(ring3.degrees().sum() == 180.0);  // twice the 90 lattice edges

  // brute-force neighbor enumeration over axial coordinates as the oracle
  std::set<std::pair<int, int>> cells(ring3.axial_coords().begin(), ring3.axial_coords().end());
  int edges = 0;
  static constexpr int dirs[6][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, -1}, {-1, 1}};
  for (const auto& [q, r] : cells)
    for (const auto& d : dirs)
      if (cells.count({q + d[0], r + d[1]})) ++edges;
  CHECK(edges == 180);  // each edge counted from both ends
}

TEST_CASE("hex lattice degrees are invariant under 6-fold rotation") {
  const HexLattice lat = build_hex_lattice(2);
  std::map<std::pair<int, int>, int> index;
  for (int s = 0; s < lat.n_subplots(); ++s) index[lat.axial_coords()[s]] = s;
  const Eigen::VectorXd deg = lat.degrees();
  for (int s = 0; s < lat.n_subplots(); ++s) {
    const auto [q, r] = lat.axial_coords()[s];
    const auto rotated = std::make_pair(-r, q + r);  // 60-degree axial rotation
    REQUIRE(index.count(rotated) == 1);
    CHECK(deg[index[rotated]] == deg[s]);
  }
}

TEST_CASE("icar structure spectral properties") {
  const IcarStructure single = icar_structure(build_hex_lattice(0));
  CHECK(single.precision(0, 0) == 0.0);
  CHECK(single.Q(0, 0) == 0.0);

  const IcarStructure ring1 = icar_structure(build_hex_lattice(1));
  CHECK((ring1.precision * Eigen::VectorXd::Ones(7)).cwiseAbs().maxCoeff() < 1e-12);
  int zeros = 0;
  for (int j = 0; j < 7; ++j) {
    if (ring1.eigvals[j] < 1e-9)
      ++zeros;
    else
      CHECK(ring1.eigvals[j] > 0.0);
  }
  CHECK(zeros == 1);
  // Q is the generalized inverse on the sum-to-zero subspace
  CHECK((ring1.Q * Eigen::VectorXd::Ones(7)).cwiseAbs().maxCoeff() < 1e-10);
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd v(7);
    for (int s = 0; s < 7; ++s) v[s] = rng.norm();
    v.array() -= v.mean();
    CHECK((ring1.Q * (ring1.precision * v) - v).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("disconnected lattices are rejected") {
  const std::vector<std::pair<int, int>> edges = {{1, 2}};
  try {
    icar_structure(lattice_from_edges(4, edges));
    FAIL("expected a structure error");
  } catch (const Error& e) {
    CHECK(e.category() == errc::structure);
  }
}

TEST_CASE("constrained ICAR draws honor the constraint and the law") {
  const IcarStructure icar = icar_structure(build_hex_lattice(1));
  Rng rng(42);
  const int n = 100000;
  Eigen::MatrixXd draws(n, 7);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd e = sample_constrained_icar(icar, 1.0, rng);
    CHECK(std::abs(e.sum()) < 1e-10);
    draws.row(i) = e.transpose();
  }
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);
  CHECK((cov - icar.Q).cwiseAbs().maxCoeff() < 0.02);
  CHECK((cov - icar.Q).norm() / icar.Q.norm() < 0.03);

  // vanishing scale
  const Eigen::VectorXd tiny = sample_constrained_icar(icar, 1e-12, rng);
  CHECK(tiny.cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("latent covariance queries implement both levels") {
  Eigen::MatrixXd D(2, 2);
  D << 0.0, 30.0, 30.0, 0.0;
  const double s2 = 1.7, phi = 15.0;
  CHECK(plot_noise_covariance({0, 0, 1990}, {0, 3, 1990}, s2, D, phi) == s2);
  CHECK(plot_noise_covariance({0, 0, 1990}, {0, 0, 1991}, s2, D, phi) == 0.0);
  CHECK(plot_noise_covariance({0, 0, 1990}, {1, 0, 1990}, s2, D, phi) ==
        doctest::Approx(s2 * std::exp(-2.0)).epsilon(1e-12));

  const IcarStructure icar = icar_structure(build_hex_lattice(1));
  CHECK(subplot_noise_covariance({0, 2, 1990}, {0, 2, 1990}, s2, icar) == s2);
  CHECK(subplot_noise_covariance({0, 2, 1990}, {0, 5, 1990}, s2, icar) ==
        doctest::Approx(s2 * icar.Q(2, 5)).epsilon(1e-12));
  CHECK(subplot_noise_covariance({0, 2, 1990}, {0, 5, 1991}, s2, icar) == 0.0);
  CHECK_THROWS_AS(subplot_noise_covariance({0, 2, 1990}, {1, 2, 1990}, s2, icar), Error);
}
