#include "ecotraj/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "ecotraj/errors.hpp"

namespace ecotraj {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Draw from N(m, A^{-1}) given A = L L', z standard normal.
Eigen::VectorXd draw_from_precision(const Eigen::LLT<Eigen::MatrixXd>& llt,
                                    const Eigen::VectorXd& rhs, Rng& rng) {
  Eigen::VectorXd m = llt.solve(rhs);
  Eigen::VectorXd z(rhs.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.norm();
  return m + llt.matrixU().solve(z);
}
}  // namespace

double Priors::resolve_phi_upper(const StudyDesign& design) const {
  if (phi_upper > 0.0) return phi_upper;
  if (design.n_plots() > 1) return design.max_distance() / 3.0;
  return 1.0;  // single plot: the range is unidentified, pick a unit support
}

GaussianUpdate pg_normal_update(const Eigen::VectorXd& prior_mean,
                                const Eigen::MatrixXd& prior_cov, const Eigen::VectorXd& kappa,
                                const Eigen::VectorXd& omega) {
  const int d = static_cast<int>(prior_mean.size());
  if (prior_cov.rows() != d || prior_cov.cols() != d || kappa.size() != d || omega.size() != d)
    throw_domain("pg_update_dims", "pg_normal_update dimension mismatch");
  Eigen::MatrixXd prior_prec = prior_cov.llt().solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::MatrixXd post_prec = prior_prec;
  post_prec.diagonal() += omega;
  Eigen::LLT<Eigen::MatrixXd> llt(post_prec);
  if (llt.info() != Eigen::Success)
    throw_numeric("pg_update_pd", "posterior precision is not positive definite");
  GaussianUpdate out;
  out.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
  out.mean = out.cov * (prior_prec * prior_mean + kappa);
  return out;
}

GibbsSampler::GibbsSampler(const StudyDesign& design,
                           const std::vector<StateObservation>& observations, int n_states,
                           const Priors& priors)
    : design_(design), n_states_(n_states), priors_(priors), icar_(icar_structure(design.lattice())) {
  if (n_states_ < 2) throw_domain("n_states", "need at least two states");
  const int K1 = n_states_ - 1;
  const int n_sites = design_.n_sites();

  set_observations(observations);

  phi_upper_ = priors_.resolve_phi_upper(design_);
  if (!(priors_.phi_lower > 0.0 && priors_.phi_lower < phi_upper_))
    throw_config("phi_support", "phi prior support is empty");

  // Deterministic start: coefficients at their prior means, fields at zero,
  // variances at the prior mean (shape > 1) or scale, phi mid-support.
  params_.alpha = Eigen::MatrixXd::Constant(design_.n_landscape_covariates(), K1, priors_.alpha_mean);
  params_.beta = Eigen::MatrixXd::Constant(design_.n_climate_covariates(), K1, priors_.beta_mean);
  auto ig_mean = [](double shape, double scale) { return shape > 1.0 ? scale / (shape - 1.0) : scale; };
  params_.sigma2_zeta = ig_mean(priors_.zeta_ig_shape, priors_.zeta_ig_scale);
  params_.sigma2_xi = ig_mean(priors_.xi_ig_shape, priors_.xi_ig_scale);
  params_.sigma2_eps = ig_mean(priors_.eps_ig_shape, priors_.eps_ig_scale);
  params_.phi = priors_.phi_lower + 0.5 * (phi_upper_ - priors_.phi_lower);

  field_.zeta = Eigen::MatrixXd::Zero(n_sites, K1);
  field_.xi.assign(design_.n_model_years(), Eigen::MatrixXd::Zero(design_.n_plots(), K1));
  field_.eps.resize(design_.n_plots());
  for (int i = 0; i < design_.n_plots(); ++i)
    field_.eps[i].assign(design_.interval_years(i),
                         Eigen::MatrixXd::Zero(design_.n_subplots(), K1));

  omega_start_ = Eigen::MatrixXd::Zero(n_sites, K1);
  omega_end_ = Eigen::MatrixXd::Zero(n_sites, K1);

  h_alpha_ = design_.landscape() * params_.alpha;
  xsum_rows_.resize(n_sites, design_.n_climate_covariates());
  for (int i = 0; i < design_.n_plots(); ++i)
    for (int s = 0; s < design_.n_subplots(); ++s)
      xsum_rows_.row(design_.site(i, s)) = design_.climate_sum(i);
  x_beta_ = xsum_rows_ * params_.beta;
  sum_xi_ = Eigen::MatrixXd::Zero(n_sites, K1);
  sum_eps_ = Eigen::MatrixXd::Zero(n_sites, K1);

  overlap_.resize(design_.n_plots(), design_.n_plots());
  for (int i = 0; i < design_.n_plots(); ++i)
    for (int j = 0; j < design_.n_plots(); ++j) {
      const int first = std::max(design_.start_year(i), design_.start_year(j)) + 1;
      const int last = std::min(design_.end_year(i), design_.end_year(j));
      overlap_(i, j) = std::max(0, last - first + 1);
    }

  refresh_corr_cache();
}


void GibbsSampler::set_observations(const std::vector<StateObservation>& observations) {
  const int K1 = n_states_ - 1;
  const int n_sites = design_.n_sites();
  trials_start_ = Eigen::MatrixXi::Zero(n_sites, K1);
  trials_end_ = Eigen::MatrixXi::Zero(n_sites, K1);
  kappa_start_ = Eigen::MatrixXd::Zero(n_sites, K1);
  kappa_end_ = Eigen::MatrixXd::Zero(n_sites, K1);

  std::map<int, int> plot_index;
  for (int i = 0; i < design_.n_plots(); ++i) plot_index[design_.plots()[i].plot_id] = i;

  for (const StateObservation& y : observations) {
    auto it = plot_index.find(y.plot);
    if (it == plot_index.end())
      throw_data("obs_plot", "observation references unknown plot " + std::to_string(y.plot));
    const int i = it->second;
    if (y.subplot < 1 || y.subplot > design_.n_subplots())
      throw_data("obs_subplot", "observation references subplot " + std::to_string(y.subplot) +
                                    " outside the lattice");
    if (y.state < 1 || y.state > n_states_)
      throw_data("obs_state", "observation state " + std::to_string(y.state) + " outside 1.." +
                                  std::to_string(n_states_));
    const int u = design_.site(i, y.subplot - 1);
    const bool at_start = y.year == design_.start_year(i);
    const bool at_end = y.year == design_.end_year(i);
    if (!at_start && !at_end)
      throw_data("obs_year", "observation year " + std::to_string(y.year) +
                                 " is not a survey year of plot " + std::to_string(y.plot));
    Eigen::MatrixXi& trials = at_start ? trials_start_ : trials_end_;
    Eigen::MatrixXd& kappa = at_start ? kappa_start_ : kappa_end_;
    if (trials.row(u).any())
      throw_data("obs_duplicate", "duplicate observation for plot " + std::to_string(y.plot) +
                                      ", subplot " + std::to_string(y.subplot) + ", year " +
                                      std::to_string(y.year));
    trials.row(u) = conditional_trials(y.state, n_states_).transpose();
    kappa.row(u) = kappa_of(y.state, n_states_).transpose();
  }
}

void GibbsSampler::refresh_corr_cache() {
  const int n = design_.n_plots();
  corr_ = exp_covariance(design_.distances(), 1.0, params_.phi);
  corr_llt_.compute(corr_);
  if (corr_llt_.info() != Eigen::Success)
    throw_numeric("corr_pd", "plot correlation matrix is not positive definite at phi = " +
                                 std::to_string(params_.phi) + " (iteration " +
                                 std::to_string(iteration_) + ")");
  corr_inv_ = corr_llt_.solve(Eigen::MatrixXd::Identity(n, n));
}

void GibbsSampler::check_finite(const char* block, const Eigen::MatrixXd& m) const {
  if (!m.allFinite())
    throw_numeric("state_nan", std::string("non-finite values in block '") + block +
                                   "' at iteration " + std::to_string(iteration_));
}

Eigen::VectorXd GibbsSampler::eta_start_col(int dim) const {
  return h_alpha_.col(dim) + field_.zeta.col(dim);
}

Eigen::VectorXd GibbsSampler::eta_end_col(int dim) const {
  return h_alpha_.col(dim) + field_.zeta.col(dim) + x_beta_.col(dim) + sum_xi_.col(dim) +
         sum_eps_.col(dim);
}

Eigen::MatrixXd GibbsSampler::eta0() const { return h_alpha_ + field_.zeta; }

Eigen::MatrixXd GibbsSampler::displacement() const { return x_beta_ + sum_xi_ + sum_eps_; }

void GibbsSampler::update_omega(Rng& rng) {
  const int K1 = n_states_ - 1;
  for (int k = 0; k < K1; ++k) {
    const Eigen::VectorXd eta_s = eta_start_col(k);
    const Eigen::VectorXd eta_e = eta_end_col(k);
    for (int u = 0; u < design_.n_sites(); ++u) {
      omega_start_(u, k) = trials_start_(u, k) ? pg_draw(1, eta_s[u], rng) : 0.0;
      omega_end_(u, k) = trials_end_(u, k) ? pg_draw(1, eta_e[u], rng) : 0.0;
    }
  }
  check_finite("omega", omega_start_);
  check_finite("omega", omega_end_);
}

void GibbsSampler::update_alpha(Rng& rng) {
  const int K1 = n_states_ - 1;
  const Eigen::MatrixXd& H = design_.landscape();
  // Site effects are marginalized out: a site's live observations collapse
  // to one pseudo-observation with precision S/(1 + sigma2_zeta S).
  for (int k = 0; k < K1; ++k) {
    Eigen::MatrixXd prec =
        Eigen::MatrixXd::Identity(H.cols(), H.cols()) / priors_.alpha_var;
    Eigen::VectorXd rhs =
        Eigen::VectorXd::Constant(H.cols(), priors_.alpha_mean / priors_.alpha_var);
    for (int u = 0; u < design_.n_sites(); ++u) {
      double S = 0.0, T = 0.0;
      if (trials_start_(u, k)) {
        S += omega_start_(u, k);
        T += kappa_start_(u, k);
      }
      if (trials_end_(u, k)) {
        const double r = x_beta_(u, k) + sum_xi_(u, k) + sum_eps_(u, k);
        S += omega_end_(u, k);
        T += kappa_end_(u, k) - omega_end_(u, k) * r;
      }
      if (S <= 0.0) continue;
      const double shrink = 1.0 / (1.0 + params_.sigma2_zeta * S);
      prec.noalias() += (S * shrink) * (H.row(u).transpose() * H.row(u));
      rhs.noalias() += (T * shrink) * H.row(u).transpose();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw_numeric("alpha_pd", "alpha conditional precision not positive definite at iteration " +
                                    std::to_string(iteration_));
    params_.alpha.col(k) = draw_from_precision(llt, rhs, rng);
  }
  h_alpha_ = H * params_.alpha;
  check_finite("alpha", params_.alpha);
}

void GibbsSampler::update_beta(Rng& rng) {
  const int K1 = n_states_ - 1;
  const int nI = design_.n_plots();
  const int p_x = design_.n_climate_covariates();
  // The plot-noise sums are marginalized out: a plot's end observations
  // collapse to one pseudo-observation with noise 1/S_i plus the summed
  // field covariance sigma2_xi * (overlap .* corr).
  const Eigen::MatrixXd sum_cov = params_.sigma2_xi * overlap_.cwiseProduct(corr_);
  for (int k = 0; k < K1; ++k) {
    Eigen::VectorXd S = Eigen::VectorXd::Zero(nI), T = Eigen::VectorXd::Zero(nI);
    for (int i = 0; i < nI; ++i)
      for (int sub = 0; sub < design_.n_subplots(); ++sub) {
        const int u = design_.site(i, sub);
        if (!trials_end_(u, k)) continue;
        const double r = h_alpha_(u, k) + field_.zeta(u, k) + sum_eps_(u, k);
        S[i] += omega_end_(u, k);
        T[i] += kappa_end_(u, k) - omega_end_(u, k) * r;
      }
    std::vector<int> live;
    for (int i = 0; i < nI; ++i)
      if (S[i] > 0.0) live.push_back(i);

    Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(p_x, p_x) / priors_.beta_var;
    Eigen::VectorXd rhs = Eigen::VectorXd::Constant(p_x, priors_.beta_mean / priors_.beta_var);
    if (!live.empty()) {
      const int m = static_cast<int>(live.size());
      Eigen::MatrixXd V(m, m);
      Eigen::MatrixXd Xp(m, p_x);
      Eigen::VectorXd y(m);
      for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) V(a, b) = sum_cov(live[a], live[b]);
        V(a, a) += 1.0 / S[live[a]];
        Xp.row(a) = design_.climate_sum(live[a]);
        y[a] = T[live[a]] / S[live[a]];
      }
      Eigen::LLT<Eigen::MatrixXd> vllt(V);
      if (vllt.info() != Eigen::Success)
        throw_numeric("beta_pd", "collapsed beta covariance not positive definite at iteration " +
                                     std::to_string(iteration_));
      prec.noalias() += Xp.transpose() * vllt.solve(Xp);
      rhs.noalias() += Xp.transpose() * vllt.solve(y);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw_numeric("beta_pd", "beta conditional precision not positive definite at iteration " +
                                   std::to_string(iteration_));
    params_.beta.col(k) = draw_from_precision(llt, rhs, rng);
  }
  x_beta_ = xsum_rows_ * params_.beta;
  check_finite("beta", params_.beta);
}

void GibbsSampler::update_zeta(Rng& rng) {
  const int K1 = n_states_ - 1;
  for (int k = 0; k < K1; ++k) {
    for (int u = 0; u < design_.n_sites(); ++u) {
      double prec = 1.0 / params_.sigma2_zeta;
      double rhs = 0.0;
      if (trials_start_(u, k)) {
        prec += omega_start_(u, k);
        rhs += kappa_start_(u, k) - omega_start_(u, k) * h_alpha_(u, k);
      }
      if (trials_end_(u, k)) {
        const double r = h_alpha_(u, k) + x_beta_(u, k) + sum_xi_(u, k) + sum_eps_(u, k);
        prec += omega_end_(u, k);
        rhs += kappa_end_(u, k) - omega_end_(u, k) * r;
      }
      field_.zeta(u, k) = rhs / prec + rng.norm() / std::sqrt(prec);
    }
  }
  check_finite("zeta", field_.zeta);
}

void GibbsSampler::update_xi(Rng& rng) {
  const int K1 = n_states_ - 1;
  const int nI = design_.n_plots();
  const int nS = design_.n_subplots();
  const int nT = design_.n_model_years();
  const double sigma = std::sqrt(params_.sigma2_xi);

  // Exact draw from the full conditional. The likelihood touches the field
  // only through the per-plot interval sums, so first draw the sums from
  // their Gaussian conditional, then the per-year decomposition from the
  // prior conditioned on those sums (kriging on the sum functionals).
  const Eigen::MatrixXd sum_cov = params_.sigma2_xi * overlap_.cwiseProduct(corr_);
  Eigen::LLT<Eigen::MatrixXd> sum_cov_llt(sum_cov);
  if (sum_cov_llt.info() != Eigen::Success)
    throw_numeric("xi_pd", "plot-noise sum covariance not positive definite at iteration " +
                               std::to_string(iteration_));
  const Eigen::MatrixXd sum_prec =
      sum_cov_llt.solve(Eigen::MatrixXd::Identity(nI, nI));

  for (int k = 0; k < K1; ++k) {
    Eigen::VectorXd S = Eigen::VectorXd::Zero(nI), T = Eigen::VectorXd::Zero(nI);
    for (int i = 0; i < nI; ++i)
      for (int sub = 0; sub < nS; ++sub) {
        const int u = design_.site(i, sub);
        if (!trials_end_(u, k)) continue;
        const double r = h_alpha_(u, k) + field_.zeta(u, k) + x_beta_(u, k) + sum_eps_(u, k);
        S[i] += omega_end_(u, k);
        T[i] += kappa_end_(u, k) - omega_end_(u, k) * r;
      }

    Eigen::MatrixXd prec = sum_prec;
    prec.diagonal() += S;
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw_numeric("xi_pd", "xi conditional precision not positive definite at iteration " +
                                 std::to_string(iteration_));
    const Eigen::VectorXd sums = draw_from_precision(llt, T, rng);

    // prior draw of the field and its sums
    std::vector<Eigen::VectorXd> prior_draw(nT);
    Eigen::VectorXd prior_sums = Eigen::VectorXd::Zero(nI);
    for (int t = 0; t < nT; ++t) {
      Eigen::VectorXd z(nI);
      for (int i = 0; i < nI; ++i) z[i] = rng.norm();
      if (nI > 1) z = corr_llt_.matrixL() * z;
      prior_draw[t] = sigma * z;
      const int year = design_.first_model_year() + t;
      for (int i = 0; i < nI; ++i)
        if (design_.plot_active(i, year)) prior_sums[i] += prior_draw[t][i];
    }

    // kriging correction: condition the prior draw on the drawn sums
    const Eigen::VectorXd v = params_.sigma2_xi * sum_cov_llt.solve(sums - prior_sums);
    for (int t = 0; t < nT; ++t) {
      const int year = design_.first_model_year() + t;
      Eigen::VectorXd av = Eigen::VectorXd::Zero(nI);
      for (int i = 0; i < nI; ++i)
        if (design_.plot_active(i, year)) av[i] = v[i];
      field_.xi[t].col(k) = prior_draw[t] + corr_ * av;
    }

    Eigen::VectorXd sxi = Eigen::VectorXd::Zero(nI);
    for (int t = 0; t < nT; ++t) {
      const int year = design_.first_model_year() + t;
      for (int i = 0; i < nI; ++i)
        if (design_.plot_active(i, year)) sxi[i] += field_.xi[t](i, k);
    }
    for (int i = 0; i < nI; ++i)
      for (int sub = 0; sub < nS; ++sub) sum_xi_(design_.site(i, sub), k) = sxi[i];
  }
  for (const auto& m : field_.xi) check_finite("xi", m);
}

void GibbsSampler::update_eps(Rng& rng) {
  const int K1 = n_states_ - 1;
  const int nS = design_.n_subplots();
  if (nS < 2) return;  // a single cell is pinned to zero by the constraint
  for (int k = 0; k < K1; ++k) {
    for (int i = 0; i < design_.n_plots(); ++i) {
      Eigen::VectorXd w(nS), cbase(nS);
      Eigen::VectorXd seps = Eigen::VectorXd::Zero(nS);
      for (const auto& eps_t : field_.eps[i]) seps += eps_t.col(k);
      bool any_data = false;
      for (int s = 0; s < nS; ++s) {
        const int u = design_.site(i, s);
        if (trials_end_(u, k)) {
          const double base =
              h_alpha_(u, k) + field_.zeta(u, k) + x_beta_(u, k) + sum_xi_(u, k);
          w[s] = omega_end_(u, k);
          cbase[s] = kappa_end_(u, k) - omega_end_(u, k) * base;
          any_data = any_data || w[s] > 0.0;
        } else {
          w[s] = 0.0;
          cbase[s] = 0.0;
        }
      }

      const int n_years = design_.interval_years(i);
      if (!any_data) {
        for (int tp = 0; tp < n_years; ++tp) {
          Eigen::VectorXd draw = sample_constrained_icar(icar_, params_.sigma2_eps, rng);
          seps += draw - field_.eps[i][tp].col(k);
          field_.eps[i][tp].col(k) = draw;
        }
      } else {
        Eigen::MatrixXd prec = icar_.precision / params_.sigma2_eps;
        prec.diagonal() += w;
        Eigen::LLT<Eigen::MatrixXd> llt(prec);
        if (llt.info() != Eigen::Success)
          throw_numeric("eps_pd", "eps conditional precision not positive definite at iteration " +
                                      std::to_string(iteration_));
        // Kriging direction for the sum-to-zero correction, P^{-1} 1.
        const Eigen::VectorXd pinv_one = llt.solve(Eigen::VectorXd::Ones(nS));
        const double pinv_one_sum = pinv_one.sum();
        for (int tp = 0; tp < n_years; ++tp) {
          Eigen::VectorXd rhs = cbase - w.cwiseProduct(seps - field_.eps[i][tp].col(k));
          Eigen::VectorXd draw = draw_from_precision(llt, rhs, rng);
          draw -= pinv_one * (draw.sum() / pinv_one_sum);
          seps += draw - field_.eps[i][tp].col(k);
          field_.eps[i][tp].col(k) = draw;
        }
      }

      for (int s = 0; s < nS; ++s) sum_eps_(design_.site(i, s), k) = seps[s];
    }
  }
  for (const auto& plot_eps : field_.eps)
    for (const auto& m : plot_eps) check_finite("eps", m);
}

void GibbsSampler::update_eta_block(Rng& rng) {
  // alpha is drawn with zeta marginalized and beta with xi marginalized;
  // each field is redrawn from its conditional before anything else
  // conditions on it.
  update_alpha(rng);
  update_zeta(rng);
  update_beta(rng);
  update_xi(rng);
  update_eps(rng);
}

void GibbsSampler::update_variances(Rng& rng) {
  const int K1 = n_states_ - 1;

  {
    const double q = field_.zeta.squaredNorm();
    const double n = static_cast<double>(field_.zeta.size());
    params_.sigma2_zeta =
        rng.inv_gamma(priors_.zeta_ig_shape + 0.5 * n, priors_.zeta_ig_scale + 0.5 * q);
  }

  {
    double q = 0.0;
    for (const auto& xi_t : field_.xi) {
      // Quadratic form under the correlation matrix, via its factor.
      Eigen::MatrixXd solved = corr_llt_.matrixL().solve(xi_t);
      q += solved.squaredNorm();
    }
    const double n = static_cast<double>(design_.n_model_years()) * design_.n_plots() * K1;
    params_.sigma2_xi =
        rng.inv_gamma(priors_.xi_ig_shape + 0.5 * n, priors_.xi_ig_scale + 0.5 * q);
  }

  {
    double q = 0.0;
    double n = 0.0;
    for (int i = 0; i < design_.n_plots(); ++i)
      for (const auto& eps_t : field_.eps[i]) {
        q += (eps_t.transpose() * icar_.precision * eps_t).trace();
        n += static_cast<double>(design_.n_subplots() - 1) * K1;  // rank per block
      }
    params_.sigma2_eps =
        rng.inv_gamma(priors_.eps_ig_shape + 0.5 * n, priors_.eps_ig_scale + 0.5 * q);
  }
}

double range_log_density(const Eigen::MatrixXd& D, const Eigen::MatrixXd& stacked,
                         double sigma2, double phi) {
  Eigen::MatrixXd corr = exp_covariance(D, 1.0, phi);
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  double logdet = 0.0;
  for (int i = 0; i < corr.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const Eigen::MatrixXd solved = llt.matrixL().solve(stacked);
  const double qf = solved.squaredNorm();
  return -0.5 * static_cast<double>(stacked.cols()) * logdet - 0.5 * qf / sigma2;
}

double slice_sample_bounded(double x0, double lo, double hi,
                            const std::function<double(double)>& log_density, Rng& rng) {
  const double logy = log_density(x0) - rng.expon();
  const double width = (hi - lo) / 8.0;
  double left = std::max(lo, x0 - rng.unif() * width);
  double right = std::min(hi, left + width);
  while (left > lo && log_density(left) > logy) left = std::max(lo, left - width);
  while (right < hi && log_density(right) > logy) right = std::min(hi, right + width);
  while (true) {
    const double x1 = rng.unif(left, right);
    if (log_density(x1) >= logy) return x1;
    if (x1 > x0)
      right = x1;
    else
      left = x1;
  }
}

double slice_sample_lower_bounded(double x0, double lo, double width,
                                  const std::function<double(double)>& log_density, Rng& rng) {
  const double logy = log_density(x0) - rng.expon();
  double left = std::max(lo, x0 - rng.unif() * width);
  double right = left + width;
  while (left > lo && log_density(left) > logy) left = std::max(lo, left - width);
  while (log_density(right) > logy) right += width;
  while (true) {
    const double x1 = rng.unif(left, right);
    if (log_density(x1) >= logy) return x1;
    if (x1 > x0)
      right = x1;
    else
      left = x1;
  }
}

void GibbsSampler::rescale_variances(Rng& rng) {
  const int K1 = n_states_ - 1;
  const int n_sites = design_.n_sites();

  // One scale at a time: hold the field in whitened coordinates
  // (component / sigma), slice-sample sigma against the PG likelihood and
  // the prior transformed to the sigma scale, then rescale the field.
  auto draw_scale = [&](double sigma, double ig_shape, double ig_scale, double lik_prec,
                        double lik_rhs) {
    auto logf = [&](double s) {
      return -(2.0 * ig_shape + 1.0) * std::log(s) - ig_scale / (s * s) -
             0.5 * lik_prec * s * s + lik_rhs * s;
    };
    return slice_sample_lower_bounded(sigma, 1e-12, 0.5 * sigma + 0.05, logf, rng);
  };

  {
    const double sigma = std::sqrt(params_.sigma2_zeta);
    double lik_prec = 0.0, lik_rhs = 0.0;
    for (int k = 0; k < K1; ++k)
      for (int u = 0; u < n_sites; ++u) {
        const double g = field_.zeta(u, k) / sigma;
        if (trials_start_(u, k)) {
          const double r = h_alpha_(u, k);
          lik_prec += omega_start_(u, k) * g * g;
          lik_rhs += (kappa_start_(u, k) - omega_start_(u, k) * r) * g;
        }
        if (trials_end_(u, k)) {
          const double r = h_alpha_(u, k) + x_beta_(u, k) + sum_xi_(u, k) + sum_eps_(u, k);
          lik_prec += omega_end_(u, k) * g * g;
          lik_rhs += (kappa_end_(u, k) - omega_end_(u, k) * r) * g;
        }
      }
    const double snew = draw_scale(sigma, priors_.zeta_ig_shape, priors_.zeta_ig_scale, lik_prec,
                                   lik_rhs);
    field_.zeta *= snew / sigma;
    params_.sigma2_zeta = snew * snew;
  }

  {
    const double sigma = std::sqrt(params_.sigma2_xi);
    double lik_prec = 0.0, lik_rhs = 0.0;
    for (int k = 0; k < K1; ++k)
      for (int u = 0; u < n_sites; ++u) {
        if (!trials_end_(u, k)) continue;
        const double g = sum_xi_(u, k) / sigma;
        const double r = h_alpha_(u, k) + field_.zeta(u, k) + x_beta_(u, k) + sum_eps_(u, k);
        lik_prec += omega_end_(u, k) * g * g;
        lik_rhs += (kappa_end_(u, k) - omega_end_(u, k) * r) * g;
      }
    const double snew = draw_scale(sigma, priors_.xi_ig_shape, priors_.xi_ig_scale, lik_prec,
                                   lik_rhs);
    const double factor = snew / sigma;
    for (auto& xi_t : field_.xi) xi_t *= factor;
    sum_xi_ *= factor;
    params_.sigma2_xi = snew * snew;
  }

  if (design_.n_subplots() > 1) {
    const double sigma = std::sqrt(params_.sigma2_eps);
    double lik_prec = 0.0, lik_rhs = 0.0;
    for (int k = 0; k < K1; ++k)
      for (int u = 0; u < n_sites; ++u) {
        if (!trials_end_(u, k)) continue;
        const double g = sum_eps_(u, k) / sigma;
        const double r = h_alpha_(u, k) + field_.zeta(u, k) + x_beta_(u, k) + sum_xi_(u, k);
        lik_prec += omega_end_(u, k) * g * g;
        lik_rhs += (kappa_end_(u, k) - omega_end_(u, k) * r) * g;
      }
    const double snew = draw_scale(sigma, priors_.eps_ig_shape, priors_.eps_ig_scale, lik_prec,
                                   lik_rhs);
    const double factor = snew / sigma;
    for (auto& plot_eps : field_.eps)
      for (auto& eps_t : plot_eps) eps_t *= factor;
    sum_eps_ *= factor;
    params_.sigma2_eps = snew * snew;
  }
}

double GibbsSampler::phi_log_density(double phi, const Eigen::MatrixXd& stacked_xi) const {
  return range_log_density(design_.distances(), stacked_xi, params_.sigma2_xi, phi);
}

void GibbsSampler::update_range(Rng& rng) {
  const int K1 = n_states_ - 1;
  Eigen::MatrixXd stacked(design_.n_plots(), design_.n_model_years() * K1);
  for (int t = 0; t < design_.n_model_years(); ++t)
    stacked.middleCols(t * K1, K1) = field_.xi[t];

  params_.phi = slice_sample_bounded(
      params_.phi, priors_.phi_lower, phi_upper_,
      [&](double phi) { return phi_log_density(phi, stacked); }, rng);
  refresh_corr_cache();
}

void GibbsSampler::sweep(Rng& rng) {
  ++iteration_;
  update_omega(rng);
  update_eta_block(rng);
  update_variances(rng);
  rescale_variances(rng);
  update_range(rng);
  if (!(std::isfinite(params_.sigma2_zeta) && std::isfinite(params_.sigma2_xi) &&
        std::isfinite(params_.sigma2_eps) && std::isfinite(params_.phi)))
    throw_numeric("state_nan",
                  "non-finite variance or range at iteration " + std::to_string(iteration_));
}

namespace {

std::vector<std::string> make_param_names(int p_h, int p_x, int K1) {
  std::vector<std::string> names;
  for (int p = 0; p < p_h; ++p)
    for (int k = 1; k <= K1; ++k)
      names.push_back("alpha[" + std::to_string(p) + "][" + std::to_string(k) + "]");
  for (int p = 0; p < p_x; ++p)
    for (int k = 1; k <= K1; ++k)
      names.push_back("beta[" + std::to_string(p) + "][" + std::to_string(k) + "]");
  names.emplace_back("sigma2_zeta");
  names.emplace_back("sigma2_xi");
  names.emplace_back("sigma2_eps");
  names.emplace_back("phi");
  return names;
}

void fill_param_row(Eigen::MatrixXd& out, int row, const TrajectoryParams& p) {
  int c = 0;
  for (int a = 0; a < p.alpha.rows(); ++a)
    for (int k = 0; k < p.alpha.cols(); ++k) out(row, c++) = p.alpha(a, k);
  for (int b = 0; b < p.beta.rows(); ++b)
    for (int k = 0; k < p.beta.cols(); ++k) out(row, c++) = p.beta(b, k);
  out(row, c++) = p.sigma2_zeta;
  out(row, c++) = p.sigma2_xi;
  out(row, c++) = p.sigma2_eps;
  out(row, c) = p.phi;
}

void flatten_latent(Eigen::MatrixXd& out, int row, const Eigen::MatrixXd& m) {
  int c = 0;
  for (int u = 0; u < m.rows(); ++u)
    for (int k = 0; k < m.cols(); ++k) out(row, c++) = m(u, k);
}

void run_one_chain(const StudyDesign& design, const std::vector<StateObservation>& observations,
                   int n_states, const Priors& priors, const ChainConfig& config, int chain,
                   int retained, PosteriorSamples& out) {
  GibbsSampler sampler(design, observations, n_states, priors);
  Rng rng(config.seed, static_cast<std::uint64_t>(chain));
  int stored = 0;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    sampler.sweep(rng);
    if (iter > config.burn_in && (iter - config.burn_in) % config.thin == 0 && stored < retained) {
      const int row = chain * retained + stored;
      fill_param_row(out.params, row, sampler.params());
      if (config.store_latent) {
        flatten_latent(out.eta0, row, sampler.eta0());
        flatten_latent(out.delta, row, sampler.displacement());
      }
      ++stored;
    }
  }
}

}  // namespace

PosteriorSamples run_chains(const StudyDesign& design,
                            const std::vector<StateObservation>& observations, int n_states,
                            const Priors& priors, const ChainConfig& config, int n_chains,
                            int n_threads) {
  if (config.iterations < 0 || config.burn_in < 0 || config.thin < 1)
    throw_config("chain_config", "iterations/burn_in must be nonnegative and thin positive");
  if (n_chains < 1) throw_config("chain_config", "need at least one chain");
  const int retained = config.iterations > config.burn_in
                           ? (config.iterations - config.burn_in) / config.thin
                           : 0;
  const int K1 = n_states - 1;

  PosteriorSamples out;
  out.param_names =
      make_param_names(design.n_landscape_covariates(), design.n_climate_covariates(), K1);
  out.params.resize(n_chains * retained, static_cast<int>(out.param_names.size()));
  if (config.store_latent) {
    out.eta0.resize(n_chains * retained, design.n_sites() * K1);
    out.delta.resize(n_chains * retained, design.n_sites() * K1);
  }
  out.n_chains = n_chains;
  out.draws_per_chain = retained;
  out.burn_in = config.burn_in;
  out.thin = config.thin;
  out.seed = config.seed;
  out.n_states = n_states;
  out.n_sites = design.n_sites();

  if (n_threads <= 1 || n_chains == 1) {
    for (int c = 0; c < n_chains; ++c)
      run_one_chain(design, observations, n_states, priors, config, c, retained, out);
    return out;
  }

  std::vector<std::thread> workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::atomic<int> next{0};
  const int pool = std::min(n_threads, n_chains);
  for (int w = 0; w < pool; ++w)
    workers.emplace_back([&] {
      for (int c = next.fetch_add(1); c < n_chains; c = next.fetch_add(1)) {
        try {
          run_one_chain(design, observations, n_states, priors, config, c, retained, out);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

PosteriorSamples run_chain(const StudyDesign& design,
                           const std::vector<StateObservation>& observations, int n_states,
                           const Priors& priors, const ChainConfig& config) {
  return run_chains(design, observations, n_states, priors, config, 1, 1);
}

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const int h = static_cast<int>(c.size()) / 2;
    if (h < 2) return kNaN;
    halves.push_back(c.head(h));
    halves.push_back(c.tail(h));
  }
  const int m = static_cast<int>(halves.size());
  const double L = static_cast<double>(halves.front().size());
  Eigen::VectorXd means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    means[j] = halves[j].mean();
    vars[j] = (halves[j].array() - means[j]).square().sum() / (L - 1.0);
  }
  const double W = vars.mean();
  const double grand = means.mean();
  const double B = L * (means.array() - grand).square().sum() / (m - 1.0);
  if (!(W > 0.0) || !std::isfinite(W)) return kNaN;
  const double var_plus = (L - 1.0) / L * W + B / L;
  return std::sqrt(var_plus / W);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& c : chains) {
    const int h = static_cast<int>(c.size()) / 2;
    if (h < 2) return kNaN;
    halves.push_back(c.head(h));
    halves.push_back(c.tail(h));
  }
  const int m = static_cast<int>(halves.size());
  const int L = static_cast<int>(halves.front().size());
  Eigen::VectorXd means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    means[j] = halves[j].mean();
    vars[j] = (halves[j].array() - means[j]).square().sum() / (L - 1.0);
  }
  const double W = vars.mean();
  if (!(W > 0.0) || !std::isfinite(W)) return kNaN;
  const double grand = means.mean();
  const double B = m > 1 ? L * (means.array() - grand).square().sum() / (m - 1.0) : 0.0;
  const double var_plus = (L - 1.0) / L * W + (m > 1 ? B / L : 0.0);

  // Mean autocovariance across the half-sequences (biased, /L).
  const int max_lag = L - 1;
  auto mean_acov = [&](int t) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int i = 0; i + t < L; ++i) s += (halves[j][i] - means[j]) * (halves[j][i + t] - means[j]);
      acc += s / L;
    }
    return acc / m;
  };

  // Geyer initial monotone sequence on paired correlations.
  const double rho0 = 1.0 - (W - mean_acov(0)) / var_plus;
  double pair_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 <= max_lag; t += 2) {
    const double rho_even = t == 0 ? rho0 : 1.0 - (W - mean_acov(t)) / var_plus;
    const double rho_odd = t + 1 <= max_lag ? 1.0 - (W - mean_acov(t + 1)) / var_plus : 0.0;
    double pair = rho_even + rho_odd;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    pair_sum += pair;
  }
  const double tau = std::max(2.0 * pair_sum - rho0, 1e-12);
  const double total = static_cast<double>(m) * L;
  return std::min(total / tau, total);
}

std::vector<ParamSummary> diagnostics(const PosteriorSamples& samples) {
  if (samples.draws_per_chain < 4)
    throw_data("too_few_draws", "diagnostics need at least 4 retained draws per chain");
  std::vector<ParamSummary> out;
  const int n = samples.n_draws();
  for (int p = 0; p < static_cast<int>(samples.param_names.size()); ++p) {
    ParamSummary s;
    s.name = samples.param_names[p];
    Eigen::VectorXd col = samples.params.col(p);
    s.mean = col.mean();
    s.sd = std::sqrt((col.array() - s.mean).square().sum() / std::max(1, n - 1));

    std::vector<double> sorted(col.data(), col.data() + n);
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
      const double pos = q * (n - 1);
      const int lo = static_cast<int>(pos);
      const int hi = std::min(lo + 1, n - 1);
      return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    s.q025 = quantile(0.025);
    s.q500 = quantile(0.5);
    s.q975 = quantile(0.975);

    std::vector<Eigen::VectorXd> chains;
    for (int c = 0; c < samples.n_chains; ++c)
      chains.push_back(col.segment(c * samples.draws_per_chain, samples.draws_per_chain));
    s.rhat = split_rhat(chains);
    s.ess = effective_sample_size(chains);
    s.degenerate = !std::isfinite(s.rhat) || !std::isfinite(s.ess);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ecotraj
