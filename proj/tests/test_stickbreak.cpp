#include <doctest.h>

#include <cmath>

#include "ecotraj/errors.hpp"
#include "ecotraj/rng.hpp"
#include "ecotraj/stickbreak.hpp"

using namespace ecotraj;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

// Dirichlet-style interior simplex with entries bounded away from zero.
Eigen::VectorXd random_interior_simplex(int K, Rng& rng) {
  Eigen::VectorXd p(K);
  for (int k = 0; k < K; ++k) p[k] = rng.expon() + 0.01;
  return p / p.sum();
}

}  // namespace

TEST_CASE("sb_inverse reproduces the latent-space anchor points") {
  const ConditionalProbs a(vec2(inv_logit(-0.4), inv_logit(0.8)));
  const Eigen::VectorXd pa = sb_inverse(a).probs();
  CHECK(pa[0] == doctest::Approx(0.40).epsilon(0.015));
  CHECK(pa[1] == doctest::Approx(0.41).epsilon(0.015));
  CHECK(pa[2] == doctest::Approx(0.19).epsilon(0.03));

  const Eigen::VectorXd ph = sb_inverse(ConditionalProbs(vec2(0.5, 0.5))).probs();
  CHECK(ph[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(ph[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(ph[2] == doctest::Approx(0.25).epsilon(1e-14));

  const ConditionalProbs b(vec2(inv_logit(-0.2), inv_logit(-2.0)));
  const Eigen::VectorXd pb = sb_inverse(b).probs();
  CHECK(std::abs(pb[0] - 0.45) < 0.005);
  CHECK(std::abs(pb[1] - 0.07) < 0.005);
  CHECK(std::abs(pb[2] - 0.48) < 0.005);
}

TEST_CASE("sb_forward inverts the stick-breaking map") {
  const Eigen::VectorXd q = sb_forward(Simplex(vec3(0.5, 0.25, 0.25))).values();
  CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.5).epsilon(1e-14));

  const Eigen::VectorXd u = sb_forward(Simplex(vec3(1.0 / 3, 1.0 / 3, 1.0 / 3))).values();
  CHECK(u[0] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK(u[1] == doctest::Approx(0.5).epsilon(1e-14));

  const Eigen::VectorXd r = sb_forward(Simplex(vec3(0.40, 0.41, 0.19))).values();
  CHECK(std::abs(r[0] - inv_logit(-0.4)) < 0.02);
  CHECK(std::abs(r[1] - inv_logit(0.8)) < 0.02);
}

TEST_CASE("sb_forward rejects boundary simplexes with a named code") {
  try {
    sb_forward(Simplex(vec3(0.5, 0.5, 0.0)));
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.category() == errc::domain);
    CHECK(e.tag() == "simplex_boundary");
  }
  CHECK_THROWS_AS(sb_forward(Simplex(vec3(0.0, 0.5, 0.5))), Error);
}

TEST_CASE("eta_to_simplex matches the anchors") {
  const Eigen::VectorXd origin = eta_to_simplex(LatentLocation(vec2(0, 0))).probs();
  CHECK(origin[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(origin[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(origin[2] == doctest::Approx(0.25).epsilon(1e-14));

  const Eigen::VectorXd sat = eta_to_simplex(LatentLocation(vec2(7, 0))).probs();
  CHECK(sat[0] > 0.998);
  CHECK(sat[1] + sat[2] < 1e-3 + (1 - 0.998));

  const Eigen::VectorXd anchor = eta_to_simplex(LatentLocation(vec2(-0.4, 0.8))).probs();
  CHECK(std::abs(anchor[0] - 0.40) < 0.005);
  CHECK(std::abs(anchor[1] - 0.41) < 0.005);
  CHECK(std::abs(anchor[2] - 0.19) < 0.005);
}

TEST_CASE("round trips hold to 1e-12") {
  Rng rng(7);
  for (int K = 2; K <= 8; ++K) {
    for (int it = 0; it < 1000; ++it) {
      const Eigen::VectorXd p = random_interior_simplex(K, rng);
      const Eigen::VectorXd back = sb_inverse(sb_forward(Simplex(p))).probs();
      CHECK((back - p).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  // sb_forward(eta_to_simplex(eta)) equals inverse-logit(eta).
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd eta(3);
    for (int k = 0; k < 3; ++k) eta[k] = rng.unif(-30.0, 30.0);
    const Eigen::VectorXd q = sb_forward(eta_to_simplex(LatentLocation(eta))).values();
    for (int k = 0; k < 3; ++k) CHECK(std::abs(q[k] - inv_logit(eta[k])) < 1e-12);
  }
}

TEST_CASE("eta_to_simplex output is normalized for large coordinates") {
  Rng rng(11);
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd eta(4);
    for (int k = 0; k < 4; ++k) eta[k] = rng.unif(-30.0, 30.0);
    const Eigen::VectorXd p = eta_to_simplex(LatentLocation(eta)).probs();
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("conditional trials follow the one-hot prefix rule") {
  CHECK(conditional_trials(1, 3).transpose() == Eigen::RowVector2i(1, 0));
  CHECK(conditional_trials(3, 3).transpose() == Eigen::RowVector2i(1, 1));
  Eigen::VectorXi n53 = conditional_trials(3, 5);
  CHECK(n53[0] == 1);
  CHECK(n53[1] == 1);
  CHECK(n53[2] == 1);
  CHECK(n53[3] == 0);
  // once a trial is zero all later ones are zero
  Rng rng(3);
  for (int it = 0; it < 200; ++it) {
    const int K = 2 + static_cast<int>(rng.unif() * 7);
    const int state = 1 + static_cast<int>(rng.unif() * K);
    const Eigen::VectorXi n = conditional_trials(state, K);
    bool seen_zero = false;
    for (int k = 0; k < K - 1; ++k) {
      if (seen_zero) CHECK(n[k] == 0);
      seen_zero = seen_zero || n[k] == 0;
    }
  }
}

TEST_CASE("sb_loglik equals the log state probability") {
  CHECK(sb_loglik(1, LatentLocation(vec2(0, 0))) == doctest::Approx(std::log(0.5)).epsilon(1e-14));
  CHECK(sb_loglik(3, LatentLocation(vec2(0, 0))) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(std::abs(sb_loglik(2, LatentLocation(vec2(-0.4, 0.8))) - std::log(0.41)) < 0.02);

  // exhaustive small-instance consistency with eta_to_simplex
  Rng rng(19);
  for (int K = 2; K <= 8; ++K) {
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::VectorXd eta(K - 1);
      for (int k = 0; k < K - 1; ++k) eta[k] = rng.unif(-6.0, 6.0);
      const LatentLocation loc(eta);
      const Eigen::VectorXd p = eta_to_simplex(loc).probs();
      for (int state = 1; state <= K; ++state)
        CHECK(std::abs(std::exp(sb_loglik(state, loc)) - p[state - 1]) < 1e-12);
    }
  }
}

TEST_CASE("sample_state follows the stick-breaking law") {
  Rng rng(23);
  const int n = 100000;

  int first = 0;
  for (int i = 0; i < n; ++i)
    if (sample_state(LatentLocation(vec2(20, 0)), rng) == 1) ++first;
  CHECK(static_cast<double>(first) / n > 0.999);

  // chi-square goodness of fit at the origin and at the anchor
  for (const auto& eta : {vec2(0, 0), vec2(-0.4, 0.8)}) {
    const LatentLocation loc(eta);
    const Eigen::VectorXd p = eta_to_simplex(loc).probs();
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) counts[sample_state(loc, rng) - 1] += 1.0;
    for (int k = 0; k < 3; ++k) CHECK(std::abs(counts[k] / n - p[k]) < 0.01);
    double chi2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double expected = n * p[k];
      chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
    }
    CHECK(chi2 < 13.8155);  // chi-square 0.999 quantile, 2 dof
  }
}
