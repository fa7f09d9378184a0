#include "linksae/sae_bayes.hpp"

#include "linksae/errors.hpp"
#include "linksae/sae_linked.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

namespace linksae {

Vector SaePosterior::beta_sd() const {
  const Vector mean = beta_mean();
  const double denom = std::max(1, n_draws() - 1);
  return ((beta.rowwise() - mean.transpose()).colwise().squaredNorm() / denom).cwiseSqrt().transpose();
}

SaeGibbs::SaeGibbs(const UnitSample& data, SaePrior prior) : data_(data), prior_(prior) {
  validate_sample(data_);
  if (prior_.a_e <= 0 || prior_.b_e <= 0) throw ConfigError("sae prior: a_e and b_e must be positive");
  if (prior_.sigma_u_prior == SigmaUPrior::InvGamma && (prior_.a_u <= 0 || prior_.b_u <= 0)) {
    throw ConfigError("sae prior: a_u and b_u must be positive");
  }
  if (prior_.upper < 0) throw ConfigError("sae prior: U must be positive");
  upper_ = prior_.upper;
  if (upper_ == 0.0) {
    const double n = data_.n();
    const double var = n > 1 ? (data_.y.array() - data_.y.mean()).square().sum() / (n - 1.0) : 1.0;
    upper_ = 1e6 * std::sqrt(std::max(var, 1e-300));
  }
  if (prior_.sigma_u_prior == SigmaUPrior::Gelman && data_.n_domains <= 3) {
    propriety_warning_ = true;
    std::cerr << "warning: uniform prior on sigma_u with " << data_.n_domains
              << " domains; the posterior may be improper\n";
  }
  refresh();
  state_.beta = ols(data_.X, data_.y, data_.covariate_names);
  state_.u = Vector::Zero(data_.n_domains);
  const double rss = (data_.y - data_.X * state_.beta).squaredNorm();
  state_.sigma2_e = std::max(rss / std::max(1, data_.n() - data_.p()), 1e-6);
  state_.sigma2_u = std::min(0.5 * state_.sigma2_e, 0.25 * upper_ * upper_);
}

void SaeGibbs::refresh() {
  check_full_rank(data_.X, data_.covariate_names);
  xtx_.compute(data_.X.transpose() * data_.X);
  n_d_ = Vector::Zero(data_.n_domains);
  for (int d : data_.domain) n_d_(d) += 1.0;
}

void SaeGibbs::set_data(const UnitSample& data) {
  if (data.n_domains != data_.n_domains || data.p() != data_.p()) {
    throw std::invalid_argument("SaeGibbs::set_data: shape change");
  }
  data_ = data;
  refresh();
}

std::pair<Vector, Matrix> SaeGibbs::beta_conditional() const {
  Vector r = data_.y;
  for (int i = 0; i < data_.n(); ++i) r(i) -= state_.u(data_.domain[i]);
  const Vector mean = xtx_.solve(data_.X.transpose() * r);
  const Matrix cov = state_.sigma2_e * xtx_.solve(Matrix::Identity(data_.p(), data_.p()));
  return {mean, cov};
}

void SaeGibbs::draw_beta(Rng& rng) {
  Vector r = data_.y;
  for (int i = 0; i < data_.n(); ++i) r(i) -= state_.u(data_.domain[i]);
  const Vector mean = xtx_.solve(data_.X.transpose() * r);
  Vector z(data_.p());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
  // X'X = L L', so L^-T z has covariance (X'X)^-1.
  state_.beta = mean + std::sqrt(state_.sigma2_e) * xtx_.matrixU().solve(z);
}

void SaeGibbs::draw_u(Rng& rng) {
  Vector sum_r = Vector::Zero(data_.n_domains);
  const Vector r = data_.y - data_.X * state_.beta;
  for (int i = 0; i < data_.n(); ++i) sum_r(data_.domain[i]) += r(i);
  for (int d = 0; d < data_.n_domains; ++d) {
    if (n_d_(d) == 0) {
      state_.u(d) = rng.normal(0.0, std::sqrt(state_.sigma2_u));
      continue;
    }
    const double phi = shrinkage(state_.sigma2_u, state_.sigma2_e, n_d_(d));
    state_.u(d) = rng.normal(phi * sum_r(d) / n_d_(d), std::sqrt(phi * state_.sigma2_e / n_d_(d)));
  }
}

void SaeGibbs::draw_sigma2_e(Rng& rng) {
  double ss = 0.0;
  for (int i = 0; i < data_.n(); ++i) {
    const double e = data_.y(i) - data_.X.row(i).dot(state_.beta) - state_.u(data_.domain[i]);
    ss += e * e;
  }
  state_.sigma2_e = rng.inv_gamma(prior_.a_e + 0.5 * data_.n(), prior_.b_e + 0.5 * ss);
}

void SaeGibbs::draw_sigma_u(Rng& rng) {
  const double D = data_.n_domains;
  const double s = state_.u.squaredNorm();
  if (prior_.sigma_u_prior == SigmaUPrior::InvGamma) {
    state_.sigma2_u = rng.inv_gamma(prior_.a_u + 0.5 * D, prior_.b_u + 0.5 * s);
    return;
  }
  // Slice sampler for sigma_u on (0, U] with log density -D log(sigma) - s / (2 sigma^2).
  auto log_f = [&](double sigma) {
    if (sigma <= 0.0 || sigma > upper_) return -std::numeric_limits<double>::infinity();
    return -D * std::log(sigma) - s / (2.0 * sigma * sigma);
  };
  const double x0 = std::min(std::sqrt(state_.sigma2_u), upper_);
  const double level = log_f(x0) + std::log(rng.uniform_pos());
  const double w = std::max(x0, 1e-12);
  double lo = x0 - w * rng.uniform();
  double hi = lo + w;
  lo = std::max(lo, 0.0);
  for (int k = 0; k < 60 && lo > 0.0 && log_f(lo) > level; ++k) lo = std::max(lo - w, 0.0);
  for (int k = 0; k < 60 && hi < upper_ && log_f(hi) > level; ++k) hi += w;
  hi = std::min(hi, upper_);
  for (int k = 0; k < 200; ++k) {
    const double x1 = lo + (hi - lo) * rng.uniform_pos();
    if (log_f(x1) > level) {
      state_.sigma2_u = x1 * x1;
      return;
    }
    if (x1 < x0) {
      lo = x1;
    } else {
      hi = x1;
    }
  }
}

void SaeGibbs::sweep(Rng& rng) {
  draw_beta(rng);
  draw_u(rng);
  draw_sigma2_e(rng);
  draw_sigma_u(rng);
}

Vector SaeGibbs::area_means() const { return data_.pop_xbar * state_.beta + state_.u; }

namespace {

struct PosteriorBuilder {
  explicit PosteriorBuilder(int n_draws, int p, int D) {
    post.beta.resize(n_draws, p);
    post.sigma2_e.resize(n_draws);
    post.sigma2_u.resize(n_draws);
    post.u.resize(n_draws, D);
    post.mu.resize(n_draws, D);
  }
  void record(int i, const SaeGibbs& g) {
    const SaeState& s = g.state();
    post.beta.row(i) = s.beta.transpose();
    post.sigma2_e(i) = s.sigma2_e;
    post.sigma2_u(i) = s.sigma2_u;
    post.u.row(i) = s.u.transpose();
    post.mu.row(i) = g.area_means().transpose();
  }
  SaePosterior post;
};

}  // namespace

SaePosterior gibbs_sae(const UnitSample& data, const SaePrior& prior, int n_burn, int n_draws, std::uint64_t seed,
                       const std::optional<SaeState>& init) {
  if (n_draws < 1 || n_burn < 0) throw std::invalid_argument("gibbs_sae: need n_draws >= 1 and n_burn >= 0");
  if (data.n_domains < 2) throw ConfigError("gibbs_sae: need at least two domains");
  Rng rng(seed);
  SaeGibbs g(data, prior);
  if (init) g.set_state(*init);
  for (int i = 0; i < n_burn; ++i) g.sweep(rng);
  PosteriorBuilder b(n_draws, data.p(), data.n_domains);
  for (int i = 0; i < n_draws; ++i) {
    g.sweep(rng);
    b.record(i, g);
  }
  b.post.propriety_warning = g.propriety_warning();
  return b.post;
}

SaePosterior sae_given_links(const RecordFile& f1, const RecordFile& f2, const std::vector<std::vector<int>>& draws,
                             const Vector& pop_size, const Matrix& pop_xbar, const SaePrior& prior,
                             int inner_sweeps, std::uint64_t seed) {
  if (draws.empty()) throw std::invalid_argument("sae_given_links: no linkage draws");
  if (inner_sweeps < 1) throw std::invalid_argument("sae_given_links: inner_sweeps must be >= 1");
  Rng rng(seed);
  SaeGibbs g(assemble_linked(f1, f2, draws.front(), pop_size, pop_xbar), prior);
  PosteriorBuilder b(static_cast<int>(draws.size()), g.state().beta.size(), static_cast<int>(pop_size.size()));
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (i > 0) g.set_data(assemble_linked(f1, f2, draws[i], pop_size, pop_xbar));
    for (int k = 0; k < inner_sweeps; ++k) g.sweep(rng);
    b.record(static_cast<int>(i), g);
    b.post.c_draw.push_back(static_cast<int>(i));
  }
  b.post.propriety_warning = g.propriety_warning();
  return b.post;
}

BayesLinkedResult run_nonfeedback(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                                  const LinkageHyper& hyper, McmcOptions mcmc, const Vector& pop_size,
                                  const Matrix& pop_xbar, const SaePrior& prior, const NonFeedbackOptions& options) {
  if (options.thin < 1 || mcmc.n_draws < 1) throw std::invalid_argument("run_nonfeedback: bad chain lengths");
  mcmc.constrained_subset = true;
  Rng rng(mcmc.seed);
  const int max_links = std::min(f1.size(), f2.size());
  LinkageSampler sampler(f1, f2, cardinalities, CPrior::point_mass(f1.size(), max_links), hyper, mcmc, rng);
  for (int i = 0; i < mcmc.n_burn; ++i) sampler.sweep(rng);
  sampler.begin_recording();
  std::vector<std::vector<int>> draws;
  draws.reserve(mcmc.n_draws);
  for (int i = 0; i < mcmc.n_draws; ++i) {
    for (int t = 0; t < options.thin; ++t) sampler.sweep(rng);
    sampler.record_draw();
    draws.push_back(sampler.row_partners());
  }
  BayesLinkedResult out;
  out.linkage = sampler.finish();
  out.sae = sae_given_links(f1, f2, draws, pop_size, pop_xbar, prior, options.inner_sweeps,
                            derive_seed(mcmc.seed, 1));
  return out;
}

namespace {

class RegressionScorer final : public PairScorer {
 public:
  RegressionScorer(const RecordFile& f1, const RecordFile& f2, double weight)
      : f1_(f1), f2_(f2), weight_(weight) {}

  void update(const SaeState& s) { state_ = &s; }

  double log_weight(int row, int col) const override {
    if (weight_ == 0.0) return 0.0;
    const SaeState& s = *state_;
    double mean = s.beta(0) + s.u(f1_.domain[row]);
    for (Eigen::Index j = 0; j < f2_.x->cols(); ++j) mean += s.beta(j + 1) * (*f2_.x)(col, j);
    const double r = (*f1_.y)(row) - mean;
    return weight_ * (-0.5 * std::log(2.0 * std::numbers::pi * s.sigma2_e) - r * r / (2.0 * s.sigma2_e));
  }

 private:
  const RecordFile& f1_;
  const RecordFile& f2_;
  double weight_;
  const SaeState* state_ = nullptr;
};

}  // namespace

BayesLinkedResult run_feedback(const RecordFile& f1, const RecordFile& f2, const std::vector<int>& cardinalities,
                               const LinkageHyper& hyper, McmcOptions mcmc, const Vector& pop_size,
                               const Matrix& pop_xbar, const SaePrior& prior, const FeedbackOptions& options) {
  if (mcmc.n_draws < 1 || mcmc.thin < 1) throw std::invalid_argument("run_feedback: bad chain lengths");
  mcmc.constrained_subset = true;
  Rng rng(mcmc.seed);
  const int max_links = std::min(f1.size(), f2.size());
  LinkageSampler sampler(f1, f2, cardinalities, CPrior::point_mass(f1.size(), max_links), hyper, mcmc, rng);
  SaeGibbs g(assemble_linked(f1, f2, sampler.row_partners(), pop_size, pop_xbar), prior);
  if (options.fixed_params) g.set_state(*options.fixed_params);
  RegressionScorer scorer(f1, f2, options.sae_weight);

  auto step = [&] {
    scorer.update(g.state());
    sampler.sweep(rng, &scorer);
    if (!options.fixed_params) {
      g.set_data(assemble_linked(f1, f2, sampler.row_partners(), pop_size, pop_xbar));
      g.sweep(rng);
    }
  };
  for (int i = 0; i < mcmc.n_burn; ++i) step();
  sampler.begin_recording();
  PosteriorBuilder b(mcmc.n_draws, g.state().beta.size(), static_cast<int>(pop_size.size()));
  for (int i = 0; i < mcmc.n_draws; ++i) {
    for (int t = 0; t < mcmc.thin; ++t) step();
    sampler.record_draw();
    b.record(i, g);
    b.post.c_draw.push_back(i);
  }
  b.post.propriety_warning = g.propriety_warning();
  return {std::move(b.post), sampler.finish()};
}

}  // namespace linksae
